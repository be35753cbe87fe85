#include "legalrag/stages.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "legalrag/analyzer.hpp"
#include "legalrag/util.hpp"

namespace legalrag {

namespace {

constexpr std::size_t kMaxKeywords = 8;
constexpr char kKeywordOpen[] = "<keyword>";
constexpr char kKeywordClose[] = "</keyword>";

const char* kRewriteSystem =
    "You are an expert proficient in legal knowledge, capable of accurately understanding users' "
    "questions and identifying users' intentions. Given the following questions (including "
    "historical questions and the current question), please rewrite the user's current question "
    "into a query for a legal search system to support you in accurately searching legal "
    "provisions to answer the user's question. When outputting the corresponding query of the "
    "search system, pay special attention to the following requirements:\n"
    "1. Focus on the legal field, and avoid unnecessary wording modifications or the introduction "
    "of new terms or concepts not mentioned in the question.\n"
    "2. Summarize or extract the core search intention of the user's current question from the "
    "historical questions.\n"
    "9. Analyze the rewritten result into 3 to 5 key legal terms, and attach the legal terms "
    "after the rewritten result. The legal terms must be wrapped in <keyword></keyword> tags, and "
    "commas should separate the legal terms. The legal terms need to be directly related to the "
    "core legal facts in the rewritten result, and avoid irrelevant terms.";

const char* kRewriteUser = "{history}Current Question: {current_question}";

const char* kLiteratureSystem = "You are a helpful assistant.";

const char* kLiteratureUser =
    "Given the following user-question and the name of the article, determine whether the "
    "user-question may involve the area described by the article. If it is possible, output "
    "\"Yes\", and if not, output \"No\".\n"
    "Output Format Requirements:\n"
    "1. Any content other than \"Yes\" or \"No\" is not allowed in the output.\n"
    "2. Please directly output \"Yes\" or \"No\" at the beginning, and do not add any analysis "
    "process.\n"
    "\n"
    "User Question:\n"
    "{question}\n"
    "\n"
    "Code Name:\n"
    "{literature_name}";

const char* kArticleSystem = "You are a helpful assistant.";

const char* kArticleUser =
    "Given the following user's question and legal provision, comprehensively judge whether the "
    "legal provision is impossible to be used as the key basis for answering the user's question "
    "based on the code to which the legal provision belongs (such as the Civil Code of the "
    "People's Republic of China) and the content of the legal provision. If yes, output \"Yes\"; "
    "if no, output \"No\".\n"
    "Output Format Requirements:\n"
    "1. Any content other than \"Yes\" or \"No\" is not allowed in the output.\n"
    "2. Please directly output \"Yes\" or \"No\" at the beginning, and do not add any analysis "
    "process.\n"
    "\n"
    "User Question:\n"
    "{question}\n"
    "\n"
    "Literature Name:\n"
    "{article_reference}";

const char* kGenerateSystem =
    "You are an expert proficient in legal knowledge, dedicated to providing users with accurate "
    "and professional legal consultation. Your responses should be rigorous and efficient, and "
    "maintain consistency in style with previous rounds of answers (if any). If the user's "
    "question involves specific legal provisions, relevant legal clauses should be cited as much "
    "as possible to enhance the authority of the answer. When outputting, special attention "
    "should be paid to the following requirements:\n"
    "1. Priority should be given to selecting legal provisions from the given reference legal "
    "clauses that can be used to answer the user's question as references. Select and cite them "
    "in order from the beginning to the end of the reference legal clauses.\n"
    "5. Please refer to and generate replies similar to the following style.\n"
    "Examples:\n"
    "\"According to the provisions of Article 428 of the Civil Code of the People's Republic of "
    "China, the vehicle installment payment contract and the vehicle insurance contract should "
    "be handled separately. If you repay the monthly payment on time and do not violate the "
    "repayment obligations in the installment agreement, the installment company has no right to "
    "seize the vehicle. As for insurance purchase, unless the contract clearly stipulates that "
    "insurance must be purchased through the installment company, the installment company has no "
    "right to seize the vehicle on this ground.\"\n"
    "\"According to Article 17 of the Criminal Law of the People's Republic of China, persons "
    "under fourteen years of age are not subject to criminal responsibility. Therefore, your "
    "thirteen-year-old brother does not need to bear criminal responsibility in this "
    "situation.\"";

const char* kGenerateUser =
    "{current_question}\n"
    "The following are the legal clauses you can refer to:\n"
    "{reference_clauses}";

bool is_ascii_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string trim_ascii(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_ascii_space(s[b])) ++b;
    while (e > b && is_ascii_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_keywords(const std::string& span) {
    // Split on ASCII ',' or fullwidth '，' (U+FF0C).
    std::vector<std::string> parts;
    std::string current;
    for (std::size_t i = 0; i < span.size();) {
        if (span[i] == ',') {
            parts.push_back(current);
            current.clear();
            ++i;
            continue;
        }
        if (i + 2 < span.size() && static_cast<unsigned char>(span[i]) == 0xEF &&
            static_cast<unsigned char>(span[i + 1]) == 0xBC &&
            static_cast<unsigned char>(span[i + 2]) == 0x8C) {
            parts.push_back(current);
            current.clear();
            i += 3;
            continue;
        }
        current.push_back(span[i]);
        ++i;
    }
    parts.push_back(current);
    return parts;
}

std::string strip_tag_markup(std::string s) {
    for (const char* tag : {kKeywordOpen, kKeywordClose}) {
        std::size_t pos;
        while ((pos = s.find(tag)) != std::string::npos) s.erase(pos, std::strlen(tag));
    }
    return s;
}

}  // namespace

const char* stage_name(Stage stage) {
    switch (stage) {
        case Stage::Rewrite: return "rewrite";
        case Stage::LiteratureFilter: return "literature_filter";
        case Stage::ArticleFilter: return "article_filter";
        case Stage::Generate: return "generate";
    }
    return "unknown";
}

std::string PromptTemplate::render_user(const std::map<std::string, std::string>& values) const {
    std::string out;
    out.reserve(user_template.size());
    const std::string& t = user_template;
    for (std::size_t i = 0; i < t.size();) {
        if (t[i] != '{') {
            out.push_back(t[i]);
            ++i;
            continue;
        }
        const std::size_t close = t.find('}', i + 1);
        if (close == std::string::npos) {
            out.push_back(t[i]);
            ++i;
            continue;
        }
        const std::string name = t.substr(i + 1, close - i - 1);
        const bool slot_like = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
            return (c >= 'a' && c <= 'z') || c == '_';
        });
        if (!slot_like) {
            out.push_back(t[i]);
            ++i;
            continue;
        }
        auto it = values.find(name);
        if (it == values.end()) {
            throw std::runtime_error("prompt template (" + std::string(stage_name(stage)) +
                                     "): unresolved placeholder {" + name + "}");
        }
        out += it->second;
        i = close + 1;
    }
    return out;
}

PromptTemplate PromptTemplate::load(Stage stage, const std::filesystem::path& path) {
    PromptTemplate tmpl;
    tmpl.stage = stage;
    std::istringstream in(read_file(path));
    std::string line;
    std::string* section = nullptr;
    bool saw_system = false;
    bool saw_user = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == "[system]") {
            section = &tmpl.system_text;
            saw_system = true;
            continue;
        }
        if (line == "[user]") {
            section = &tmpl.user_template;
            saw_user = true;
            continue;
        }
        if (!section) {
            if (trim_ascii(line).empty()) continue;
            throw std::runtime_error("prompt template file " + path.string() +
                                     ": content before [system] section");
        }
        if (!section->empty()) section->push_back('\n');
        *section += line;
    }
    if (!saw_system || !saw_user) {
        throw std::runtime_error("prompt template file " + path.string() +
                                 ": needs [system] and [user] sections");
    }
    return tmpl;
}

std::string PromptTemplate::to_file_content() const {
    return "[system]\n" + system_text + "\n[user]\n" + user_template + "\n";
}

StageTemplates default_templates() {
    StageTemplates t;
    t.rewrite = PromptTemplate{Stage::Rewrite, kRewriteSystem, kRewriteUser};
    t.literature_filter =
        PromptTemplate{Stage::LiteratureFilter, kLiteratureSystem, kLiteratureUser};
    t.article_filter = PromptTemplate{Stage::ArticleFilter, kArticleSystem, kArticleUser};
    t.generate = PromptTemplate{Stage::Generate, kGenerateSystem, kGenerateUser};
    return t;
}

ChatRequest build_rewrite_prompt(const PromptTemplate& tmpl, const StageModel& model,
                                 const std::vector<std::string>& history,
                                 const std::string& current_query) {
    if (current_query.empty()) {
        throw std::invalid_argument("build_rewrite_prompt: current_query must be non-empty");
    }
    std::string history_block;
    if (!history.empty()) {
        history_block = "Historical Question: ";
        for (std::size_t i = 0; i < history.size(); ++i) {
            if (i > 0) history_block += "\n";
            history_block += "User: " + history[i];
        }
        history_block += "\n";
    }
    ChatRequest req;
    req.model_id = model.model_id;
    req.temperature = model.temperature;
    req.max_tokens = model.max_tokens;
    req.messages.push_back({ChatRole::System, tmpl.system_text});
    req.messages.push_back({ChatRole::User, tmpl.render_user({{"history", history_block},
                                                              {"current_question",
                                                               current_query}})});
    return req;
}

RewriteResult parse_rewrite(const std::string& raw) {
    if (trim_ascii(raw).empty()) throw std::runtime_error("empty rewrite");

    RewriteResult result;

    // Keywords: first complete tag pair only.
    const std::size_t open = raw.find(kKeywordOpen);
    std::size_t close = std::string::npos;
    if (open != std::string::npos) {
        close = raw.find(kKeywordClose, open + std::strlen(kKeywordOpen));
    }
    if (open != std::string::npos && close != std::string::npos) {
        const std::size_t span_begin = open + std::strlen(kKeywordOpen);
        const std::string span = raw.substr(span_begin, close - span_begin);
        std::set<std::string> seen;
        for (const auto& part : split_keywords(span)) {
            std::string kw = trim_ascii(strip_tag_markup(part));
            if (kw.empty()) continue;
            if (!seen.insert(kw).second) continue;
            if (result.keywords.size() == kMaxKeywords) {
                spdlog::warn("parse_rewrite: more than {} keywords, truncating", kMaxKeywords);
                break;
            }
            result.keywords.push_back(std::move(kw));
        }
    }

    // Rewritten query: raw with every complete keyword span removed.
    std::string remainder = raw;
    for (;;) {
        const std::size_t o = remainder.find(kKeywordOpen);
        if (o == std::string::npos) break;
        const std::size_t c = remainder.find(kKeywordClose, o + std::strlen(kKeywordOpen));
        if (c == std::string::npos) break;
        remainder.erase(o, c + std::strlen(kKeywordClose) - o);
    }
    result.rewritten_query = trim_ascii(remainder);
    if (result.rewritten_query.empty()) {
        // Everything was inside keyword spans; keep the raw text so the
        // rewritten query stays non-empty.
        result.rewritten_query = trim_ascii(raw);
    }

    if (result.keywords.size() < 3 || result.keywords.size() > 5) {
        spdlog::warn("parse_rewrite: keyword count {} outside the requested 3..5 range",
                     result.keywords.size());
    }
    return result;
}

std::optional<bool> parse_verdict(const std::string& raw) {
    const auto cps = unicode::decode_utf8(raw);
    std::size_t i = 0;
    auto is_space_cp = [](char32_t cp) {
        return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\f' ||
               cp == U'\v' || cp == U' ' || cp == U'　';
    };
    while (i < cps.size() && is_space_cp(cps[i])) ++i;
    if (i >= cps.size()) return std::nullopt;

    if (cps[i] == U'是') return true;
    if (cps[i] == U'否') return false;

    auto lower = [](char32_t cp) -> char32_t {
        return (cp >= U'A' && cp <= U'Z') ? cp + 32 : cp;
    };
    if (i + 2 < cps.size() && lower(cps[i]) == U'y' && lower(cps[i + 1]) == U'e' &&
        lower(cps[i + 2]) == U's') {
        return true;
    }
    if (i + 1 < cps.size() && lower(cps[i]) == U'n' && lower(cps[i + 1]) == U'o') return false;
    return std::nullopt;
}

FilterVerdict literature_verdict(LlmGateway& gateway, const PromptTemplate& tmpl,
                                 const StageModel& model, const std::string& rewritten_query,
                                 const std::string& literature_name) {
    ChatRequest req;
    req.model_id = model.model_id;
    req.temperature = model.temperature;
    req.max_tokens = model.max_tokens;
    req.messages.push_back({ChatRole::System, tmpl.system_text});
    req.messages.push_back({ChatRole::User, tmpl.render_user({{"question", rewritten_query},
                                                              {"literature_name",
                                                               literature_name}})});
    FilterVerdict verdict;
    verdict.raw = gateway.complete(req);
    const auto parsed = parse_verdict(verdict.raw);
    if (!parsed.has_value()) {
        spdlog::warn("literature filter: unparseable verdict for '{}', keeping (fail-open)",
                     literature_name);
        verdict.keep = true;
    } else {
        verdict.keep = *parsed;
    }
    return verdict;
}

std::string format_article_reference(const LegalArticle& article) {
    return article.article_label + " of the " + article.literature_name + ": " + article.text;
}

FilterVerdict article_verdict(LlmGateway& gateway, const PromptTemplate& tmpl,
                              const StageModel& model, const std::string& rewritten_query,
                              const LegalArticle& article, bool yes_means_keep) {
    ChatRequest req;
    req.model_id = model.model_id;
    req.temperature = model.temperature;
    req.max_tokens = model.max_tokens;
    req.messages.push_back({ChatRole::System, tmpl.system_text});
    req.messages.push_back(
        {ChatRole::User, tmpl.render_user({{"question", rewritten_query},
                                           {"article_reference",
                                            format_article_reference(article)}})});
    FilterVerdict verdict;
    verdict.raw = gateway.complete(req);
    const auto parsed = parse_verdict(verdict.raw);
    if (!parsed.has_value()) {
        spdlog::warn("article filter: unparseable verdict for '{}', keeping (fail-open)",
                     article.article_id);
        verdict.keep = true;
    } else {
        verdict.keep = (*parsed == yes_means_keep);
    }
    return verdict;
}

ChatRequest build_generation_prompt(const PromptTemplate& tmpl, const StageModel& model,
                                    const std::vector<std::pair<std::string, std::string>>& history,
                                    const std::string& current_query,
                                    const std::vector<LegalArticle>& top_articles) {
    std::string clauses;
    if (top_articles.empty()) {
        clauses = "(no reference clauses retrieved)";
    } else {
        for (std::size_t i = 0; i < top_articles.size(); ++i) {
            if (i > 0) clauses += "\n";
            clauses += std::to_string(i + 1) + ". " + format_article_reference(top_articles[i]);
        }
    }
    ChatRequest req;
    req.model_id = model.model_id;
    req.temperature = model.temperature;
    req.max_tokens = model.max_tokens;
    req.messages.push_back({ChatRole::System, tmpl.system_text});
    for (const auto& [query, response] : history) {
        req.messages.push_back({ChatRole::User, query});
        req.messages.push_back({ChatRole::Assistant, response});
    }
    req.messages.push_back({ChatRole::User, tmpl.render_user({{"current_question", current_query},
                                                              {"reference_clauses", clauses}})});
    return req;
}

}  // namespace legalrag
