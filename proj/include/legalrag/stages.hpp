#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "legalrag/llm_gateway.hpp"
#include "legalrag/types.hpp"

namespace legalrag {

enum class Stage { Rewrite, LiteratureFilter, ArticleFilter, Generate };

const char* stage_name(Stage stage);

struct RewriteResult {
    std::string rewritten_query;        // non-empty
    std::vector<std::string> keywords;  // trimmed, deduplicated, at most 8
};

struct FilterVerdict {
    bool keep = true;
    std::string raw;  // verbatim model output
};

/// A stage prompt: fixed system text plus a user template with {name} slots.
/// Rendering throws on any unresolved placeholder; substituted values are
/// never re-scanned for placeholders.
struct PromptTemplate {
    Stage stage = Stage::Rewrite;
    std::string system_text;
    std::string user_template;

    std::string render_user(const std::map<std::string, std::string>& values) const;

    /// File format: a "[system]" section followed by a "[user]" section.
    static PromptTemplate load(Stage stage, const std::filesystem::path& path);
    std::string to_file_content() const;
};

struct StageTemplates {
    PromptTemplate rewrite;
    PromptTemplate literature_filter;
    PromptTemplate article_filter;
    PromptTemplate generate;
};

/// Built-in defaults (the repo's prompts/ files carry the same content).
StageTemplates default_templates();

/// Per-stage model binding.
struct StageModel {
    std::string model_id;
    double temperature = 0.0;
    int max_tokens = 2048;
};

/// --- Query rewriting -------------------------------------------------------

/// History lists the user's prior questions in order; the user text shows
/// them before the current question.
ChatRequest build_rewrite_prompt(const PromptTemplate& tmpl, const StageModel& model,
                                 const std::vector<std::string>& history,
                                 const std::string& current_query);

/// Keywords come from the first <keyword>...</keyword> span, split on ASCII
/// or fullwidth commas, trimmed, deduplicated in order. The rewritten query
/// is the raw output with every keyword span removed, trimmed; if that
/// leaves nothing, the whole trimmed raw output is kept so the result stays
/// non-empty. No tag pair: whole trimmed raw, keywords = [].
/// Throws on empty/whitespace-only input.
RewriteResult parse_rewrite(const std::string& raw);

/// --- Yes/No filters --------------------------------------------------------

/// Affirmative (yes/是), negative (no/否) or unparseable; leading whitespace
/// ignored, ASCII case-insensitive.
std::optional<bool> parse_verdict(const std::string& raw);

FilterVerdict literature_verdict(LlmGateway& gateway, const PromptTemplate& tmpl,
                                 const StageModel& model, const std::string& rewritten_query,
                                 const std::string& literature_name);

/// The article-filter prompt asks whether the provision is impossible as a
/// basis, so its literal polarity is inverted; yes_means_keep selects which
/// answer keeps the candidate. Unparseable output keeps the candidate.
FilterVerdict article_verdict(LlmGateway& gateway, const PromptTemplate& tmpl,
                              const StageModel& model, const std::string& rewritten_query,
                              const LegalArticle& article, bool yes_means_keep = true);

/// "{label} of the {literature}: {text}" as shown in the filter and
/// generation prompts.
std::string format_article_reference(const LegalArticle& article);

/// --- Response generation ---------------------------------------------------

/// History holds (user query, generated response) pairs from earlier turns,
/// included as alternating user/assistant messages. Reference articles are
/// numbered in rank order; an empty list renders an explicit
/// "no reference clauses retrieved" line.
ChatRequest build_generation_prompt(const PromptTemplate& tmpl, const StageModel& model,
                                    const std::vector<std::pair<std::string, std::string>>& history,
                                    const std::string& current_query,
                                    const std::vector<LegalArticle>& top_articles);

}  // namespace legalrag
