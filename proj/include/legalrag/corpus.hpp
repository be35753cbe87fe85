#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "legalrag/types.hpp"

namespace legalrag {

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Immutable article store. Literatures are derived from the articles'
/// literature_name in order of first appearance; articles keep file order.
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<LegalArticle> articles);

    const std::vector<LegalArticle>& articles() const { return articles_; }
    const std::vector<Literature>& literatures() const { return literatures_; }

    const LegalArticle* find(const std::string& article_id) const;
    const LegalArticle& at(const std::string& article_id) const;
    bool has_literature(const std::string& name) const;

    std::vector<std::string> literature_names() const;

    /// SHA-256 over the canonical serialization; identifies corpus content
    /// independent of source-file formatting.
    std::string digest() const;

private:
    std::vector<LegalArticle> articles_;
    std::vector<Literature> literatures_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::unordered_map<std::string, std::size_t> literature_index_;
};

/// Parse articles.jsonl. Errors name the offending 1-based line number.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(const std::string& jsonl_content);

/// Parse conversations.jsonl. Structural validation only (ordering,
/// non-empty fields); gold-id resolution is validate_conversations().
std::vector<Conversation> load_conversations(const std::filesystem::path& path);
std::vector<Conversation> parse_conversations(const std::string& jsonl_content);

/// Check every gold_article_id resolves against the corpus; throws
/// CorpusError listing all offending ids.
void validate_conversations(const std::vector<Conversation>& conversations, const Corpus& corpus);

/// Canonical one-record-per-line serializations (round-trip stable).
std::string serialize_corpus(const Corpus& corpus);
std::string serialize_conversations(const std::vector<Conversation>& conversations);

struct StatsReport {
    std::size_t total_conversations = 0;
    std::size_t total_queries = 0;
    std::size_t total_articles = 0;
    std::size_t total_literatures = 0;
    double avg_query_length = 0.0;     // Unicode codepoints
    double avg_response_length = 0.0;  // Unicode codepoints
    double avg_gold_articles_per_query = 0.0;
    double avg_keywords_per_query = 0.0;
};

/// Dataset aggregates. Lengths are codepoint counts; averages are over all
/// turns. Throws CorpusError("no data") when conversations is empty.
StatsReport corpus_stats(const Corpus& corpus, const std::vector<Conversation>& conversations);

std::string stats_to_json(const StatsReport& stats);

}  // namespace legalrag
