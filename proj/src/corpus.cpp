#include "legalrag/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>
#include <sstream>

#include "legalrag/analyzer.hpp"
#include "legalrag/util.hpp"

namespace legalrag {

using json = nlohmann::json;

namespace {

json parse_record(const std::string& line, std::size_t line_no) {
    json rec;
    try {
        rec = json::parse(line);
    } catch (const json::parse_error& e) {
        throw CorpusError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    if (!rec.is_object()) {
        throw CorpusError("line " + std::to_string(line_no) + ": record is not an object");
    }
    return rec;
}

std::string require_string(const json& rec, const char* field, std::size_t line_no,
                           bool allow_empty = false) {
    if (!rec.contains(field) || !rec[field].is_string()) {
        throw CorpusError("line " + std::to_string(line_no) + ": missing string field '" +
                          field + "'");
    }
    std::string value = rec[field].get<std::string>();
    if (value.empty() && !allow_empty) {
        throw CorpusError("line " + std::to_string(line_no) + ": field '" + field +
                          "' must be non-empty");
    }
    return value;
}

std::vector<std::string> string_array(const json& rec, const char* field, std::size_t line_no) {
    if (!rec.contains(field) || !rec[field].is_array()) {
        throw CorpusError("line " + std::to_string(line_no) + ": missing array field '" +
                          field + "'");
    }
    std::vector<std::string> out;
    for (const auto& v : rec[field]) {
        if (!v.is_string()) {
            throw CorpusError("line " + std::to_string(line_no) + ": field '" + field +
                              "' must contain strings");
        }
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

Corpus::Corpus(std::vector<LegalArticle> articles) : articles_(std::move(articles)) {
    by_id_.reserve(articles_.size());
    for (std::size_t i = 0; i < articles_.size(); ++i) {
        const auto& a = articles_[i];
        if (a.article_id.empty()) throw CorpusError("article with empty article_id");
        if (a.literature_name.empty()) {
            throw CorpusError("article '" + a.article_id + "' has empty literature name");
        }
        if (a.text.empty()) throw CorpusError("article '" + a.article_id + "' has empty text");
        if (!by_id_.emplace(a.article_id, i).second) {
            throw CorpusError("duplicate article_id '" + a.article_id + "'");
        }
        auto [it, inserted] = literature_index_.emplace(a.literature_name, literatures_.size());
        if (inserted) literatures_.push_back(Literature{a.literature_name, {}});
        literatures_[it->second].article_ids.push_back(a.article_id);
    }
}

const LegalArticle* Corpus::find(const std::string& article_id) const {
    auto it = by_id_.find(article_id);
    return it == by_id_.end() ? nullptr : &articles_[it->second];
}

const LegalArticle& Corpus::at(const std::string& article_id) const {
    const LegalArticle* a = find(article_id);
    if (!a) throw CorpusError("unknown article_id '" + article_id + "'");
    return *a;
}

bool Corpus::has_literature(const std::string& name) const {
    return literature_index_.contains(name);
}

std::vector<std::string> Corpus::literature_names() const {
    std::vector<std::string> names;
    names.reserve(literatures_.size());
    for (const auto& lit : literatures_) names.push_back(lit.name);
    return names;
}

std::string Corpus::digest() const { return sha256_hex(serialize_corpus(*this)); }

Corpus parse_corpus(const std::string& jsonl_content) {
    std::vector<LegalArticle> articles;
    std::set<std::string> seen;
    std::istringstream in(jsonl_content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        json rec = parse_record(line, line_no);
        LegalArticle a;
        a.article_id = require_string(rec, "article_id", line_no);
        a.literature_name = require_string(rec, "literature", line_no);
        a.article_label = require_string(rec, "label", line_no, /*allow_empty=*/true);
        a.text = require_string(rec, "text", line_no);
        if (!seen.insert(a.article_id).second) {
            throw CorpusError("line " + std::to_string(line_no) + ": duplicate article_id '" +
                              a.article_id + "'");
        }
        articles.push_back(std::move(a));
    }
    if (articles.empty()) throw CorpusError("empty corpus file");
    return Corpus(std::move(articles));
}

Corpus load_corpus(const std::filesystem::path& path) {
    return parse_corpus(read_file(path));
}

std::vector<Conversation> parse_conversations(const std::string& jsonl_content) {
    std::vector<Conversation> conversations;
    std::set<std::string> seen_ids;
    std::istringstream in(jsonl_content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        json rec = parse_record(line, line_no);
        Conversation conv;
        conv.conversation_id = require_string(rec, "conversation_id", line_no);
        if (!seen_ids.insert(conv.conversation_id).second) {
            throw CorpusError("line " + std::to_string(line_no) + ": duplicate conversation_id '" +
                              conv.conversation_id + "'");
        }
        if (!rec.contains("turns") || !rec["turns"].is_array() || rec["turns"].empty()) {
            throw CorpusError("line " + std::to_string(line_no) +
                              ": conversation must have a non-empty 'turns' array");
        }
        int last_index = -1;
        for (const auto& t : rec["turns"]) {
            if (!t.is_object()) {
                throw CorpusError("line " + std::to_string(line_no) + ": turn is not an object");
            }
            ConversationTurn turn;
            if (!t.contains("turn_index") || !t["turn_index"].is_number_integer()) {
                throw CorpusError("line " + std::to_string(line_no) +
                                  ": turn missing integer 'turn_index'");
            }
            turn.turn_index = t["turn_index"].get<int>();
            if (turn.turn_index < 0) {
                throw CorpusError("line " + std::to_string(line_no) + ": negative turn_index");
            }
            if (turn.turn_index <= last_index) {
                throw CorpusError("line " + std::to_string(line_no) +
                                  ": non-monotone turn_index in conversation '" +
                                  conv.conversation_id + "'");
            }
            last_index = turn.turn_index;
            turn.query = require_string(t, "query", line_no);
            turn.reference_response = require_string(t, "reference_response", line_no, true);
            turn.gold_article_ids = string_array(t, "gold_article_ids", line_no);
            turn.reference_keywords = string_array(t, "keywords", line_no);
            for (const auto& kw : turn.reference_keywords) {
                if (kw.empty()) {
                    throw CorpusError("line " + std::to_string(line_no) + ": empty keyword");
                }
            }
            conv.turns.push_back(std::move(turn));
        }
        conversations.push_back(std::move(conv));
    }
    return conversations;
}

std::vector<Conversation> load_conversations(const std::filesystem::path& path) {
    return parse_conversations(read_file(path));
}

void validate_conversations(const std::vector<Conversation>& conversations, const Corpus& corpus) {
    std::vector<std::string> unknown;
    for (const auto& conv : conversations) {
        for (const auto& turn : conv.turns) {
            for (const auto& id : turn.gold_article_ids) {
                if (!corpus.find(id)) {
                    unknown.push_back(conv.conversation_id + "/turn " +
                                      std::to_string(turn.turn_index) + ": '" + id + "'");
                }
            }
        }
    }
    if (!unknown.empty()) {
        std::string msg = "unknown gold_article_ids:";
        for (const auto& u : unknown) msg += " " + u + ";";
        throw CorpusError(msg);
    }
}

std::string serialize_corpus(const Corpus& corpus) {
    std::string out;
    for (const auto& a : corpus.articles()) {
        json rec{{"article_id", a.article_id},
                 {"literature", a.literature_name},
                 {"label", a.article_label},
                 {"text", a.text}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

std::string serialize_conversations(const std::vector<Conversation>& conversations) {
    std::string out;
    for (const auto& conv : conversations) {
        json turns = json::array();
        for (const auto& t : conv.turns) {
            turns.push_back(json{{"turn_index", t.turn_index},
                                 {"query", t.query},
                                 {"reference_response", t.reference_response},
                                 {"gold_article_ids", t.gold_article_ids},
                                 {"keywords", t.reference_keywords}});
        }
        json rec{{"conversation_id", conv.conversation_id}, {"turns", std::move(turns)}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

StatsReport corpus_stats(const Corpus& corpus, const std::vector<Conversation>& conversations) {
    if (conversations.empty()) throw CorpusError("no data");
    StatsReport stats;
    stats.total_conversations = conversations.size();
    stats.total_articles = corpus.articles().size();
    stats.total_literatures = corpus.literatures().size();

    std::size_t query_chars = 0;
    std::size_t response_chars = 0;
    std::size_t gold_count = 0;
    std::size_t keyword_count = 0;
    for (const auto& conv : conversations) {
        for (const auto& turn : conv.turns) {
            ++stats.total_queries;
            query_chars += codepoint_count(turn.query);
            response_chars += codepoint_count(turn.reference_response);
            gold_count += turn.gold_article_ids.size();
            keyword_count += turn.reference_keywords.size();
        }
    }
    const auto q = static_cast<double>(stats.total_queries);
    stats.avg_query_length = static_cast<double>(query_chars) / q;
    stats.avg_response_length = static_cast<double>(response_chars) / q;
    stats.avg_gold_articles_per_query = static_cast<double>(gold_count) / q;
    stats.avg_keywords_per_query = static_cast<double>(keyword_count) / q;
    return stats;
}

std::string stats_to_json(const StatsReport& stats) {
    json j{{"total_conversations", stats.total_conversations},
           {"total_queries", stats.total_queries},
           {"total_articles", stats.total_articles},
           {"total_literatures", stats.total_literatures},
           {"avg_query_length", stats.avg_query_length},
           {"avg_response_length", stats.avg_response_length},
           {"avg_gold_articles_per_query", stats.avg_gold_articles_per_query},
           {"avg_keywords_per_query", stats.avg_keywords_per_query}};
    return j.dump(2) + "\n";
}

}  // namespace legalrag
