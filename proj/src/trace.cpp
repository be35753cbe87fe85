#include "legalrag/trace.hpp"

#include <json.hpp>

#include <sstream>
#include <unordered_set>

namespace legalrag {

using json = nlohmann::json;

namespace {

json scored_ids_to_json(const std::vector<ScoredId>& items) {
    json arr = json::array();
    for (const auto& s : items) {
        arr.push_back(json{{"article_id", s.article_id}, {"score", s.score}});
    }
    return arr;
}

std::vector<ScoredId> scored_ids_from_json(const json& arr) {
    std::vector<ScoredId> out;
    for (const auto& e : arr) {
        out.push_back(ScoredId{e.at("article_id").get<std::string>(),
                               e.at("score").get<double>()});
    }
    return out;
}

json turn_to_json(const TurnTrace& t) {
    json j{{"conversation_id", t.conversation_id},
           {"turn_index", t.turn_index},
           {"query", t.query}};
    if (t.rewrite.has_value()) {
        j["rewrite"] = json{{"raw", t.rewrite->raw},
                            {"rewritten_query", t.rewrite->rewritten_query},
                            {"keywords", t.rewrite->keywords}};
    }
    if (t.literature_verdicts.has_value()) {
        json verdicts = json::array();
        for (const auto& v : *t.literature_verdicts) {
            verdicts.push_back(json{{"name", v.name}, {"keep", v.keep}, {"raw", v.raw}});
        }
        j["literature_verdicts"] = std::move(verdicts);
    }
    if (t.selected_literatures.has_value()) j["selected_literatures"] = *t.selected_literatures;
    j["dense"] = scored_ids_to_json(t.dense);
    if (t.sparse.has_value()) j["sparse"] = scored_ids_to_json(*t.sparse);
    json fused = json::array();
    for (const auto& f : t.fused) {
        json entry{{"article_id", f.article_id},
                   {"fused_score", f.fused_score},
                   {"dense_score", f.dense_score},
                   {"sparse_norm", f.sparse_norm},
                   {"from_dense", f.from_dense},
                   {"from_sparse", f.from_sparse}};
        entry["sparse_score"] = f.sparse_score.has_value() ? json(*f.sparse_score) : json(nullptr);
        fused.push_back(std::move(entry));
    }
    j["fused"] = std::move(fused);
    if (t.article_verdicts.has_value()) {
        json verdicts = json::array();
        for (const auto& v : *t.article_verdicts) {
            verdicts.push_back(
                json{{"article_id", v.article_id}, {"keep", v.keep}, {"raw", v.raw}});
        }
        j["article_verdicts"] = std::move(verdicts);
    }
    j["survivors"] = t.survivors;
    j["post_filter_top10"] = t.post_filter_top10;
    if (t.rerank_scores.has_value()) j["rerank"] = scored_ids_to_json(*t.rerank_scores);
    j["final"] = scored_ids_to_json(t.final_ranking);
    j["response"] = t.response;
    if (t.failed) {
        j["failed"] = true;
        j["error"] = t.error;
    }
    return j;
}

TurnTrace turn_from_json(const json& j) {
    TurnTrace t;
    t.conversation_id = j.at("conversation_id").get<std::string>();
    t.turn_index = j.at("turn_index").get<int>();
    t.query = j.at("query").get<std::string>();
    if (j.contains("rewrite")) {
        RewriteRecord r;
        r.raw = j["rewrite"].at("raw").get<std::string>();
        r.rewritten_query = j["rewrite"].at("rewritten_query").get<std::string>();
        r.keywords = j["rewrite"].at("keywords").get<std::vector<std::string>>();
        t.rewrite = std::move(r);
        t.rewritten_query = t.rewrite->rewritten_query;
        t.keywords = t.rewrite->keywords;
    } else {
        t.rewritten_query = t.query;
    }
    if (j.contains("literature_verdicts")) {
        std::vector<LiteratureVerdictRecord> verdicts;
        for (const auto& v : j["literature_verdicts"]) {
            verdicts.push_back(LiteratureVerdictRecord{v.at("name").get<std::string>(),
                                                       v.at("keep").get<bool>(),
                                                       v.at("raw").get<std::string>()});
        }
        t.literature_verdicts = std::move(verdicts);
    }
    if (j.contains("selected_literatures")) {
        t.selected_literatures = j["selected_literatures"].get<std::vector<std::string>>();
    }
    t.dense = scored_ids_from_json(j.at("dense"));
    if (j.contains("sparse")) t.sparse = scored_ids_from_json(j["sparse"]);
    for (const auto& e : j.at("fused")) {
        FusedCandidate f;
        f.article_id = e.at("article_id").get<std::string>();
        f.fused_score = e.at("fused_score").get<double>();
        f.dense_score = e.at("dense_score").get<double>();
        f.sparse_norm = e.at("sparse_norm").get<double>();
        f.from_dense = e.at("from_dense").get<bool>();
        f.from_sparse = e.at("from_sparse").get<bool>();
        if (!e.at("sparse_score").is_null()) f.sparse_score = e["sparse_score"].get<double>();
        t.fused.push_back(std::move(f));
    }
    if (j.contains("article_verdicts")) {
        std::vector<ArticleVerdictRecord> verdicts;
        for (const auto& v : j["article_verdicts"]) {
            verdicts.push_back(ArticleVerdictRecord{v.at("article_id").get<std::string>(),
                                                    v.at("keep").get<bool>(),
                                                    v.at("raw").get<std::string>()});
        }
        t.article_verdicts = std::move(verdicts);
    }
    t.survivors = j.at("survivors").get<std::vector<std::string>>();
    t.post_filter_top10 = j.at("post_filter_top10").get<std::vector<std::string>>();
    if (j.contains("rerank")) t.rerank_scores = scored_ids_from_json(j["rerank"]);
    t.final_ranking = scored_ids_from_json(j.at("final"));
    t.response = j.at("response").get<std::string>();
    if (j.contains("failed")) {
        t.failed = j["failed"].get<bool>();
        t.error = j.value("error", "");
    }
    return t;
}

}  // namespace

bool RunTrace::all_failed() const {
    if (turns.empty()) return false;
    for (const auto& t : turns) {
        if (!t.failed) return false;
    }
    return true;
}

std::string serialize_run_trace(const RunTrace& trace) {
    json header{{"type", "run_header"},
                {"config", json::parse(trace.config_snapshot)},
                {"corpus_digest", trace.corpus_digest},
                {"backend_ids", trace.backend_ids}};
    std::string out = header.dump();
    out += '\n';
    for (const auto& t : trace.turns) {
        out += turn_to_json(t).dump();
        out += '\n';
    }
    return out;
}

RunTrace parse_run_trace(const std::string& content) {
    std::istringstream in(content);
    std::string line;
    RunTrace trace;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line);
        if (!have_header) {
            if (!j.contains("type") || j["type"] != "run_header") {
                throw std::runtime_error("trace line 1: missing run_header");
            }
            trace.config_snapshot = j.at("config").dump();
            trace.corpus_digest = j.at("corpus_digest").get<std::string>();
            for (const auto& [k, v] : j.at("backend_ids").items()) {
                trace.backend_ids[k] = v.get<std::string>();
            }
            have_header = true;
            continue;
        }
        trace.turns.push_back(turn_from_json(j));
    }
    if (!have_header) throw std::runtime_error("trace file is empty");
    return trace;
}

void validate_provenance(const TurnTrace& turn) {
    std::unordered_set<std::string> retrieved;
    for (const auto& s : turn.dense) retrieved.insert(s.article_id);
    if (turn.sparse.has_value()) {
        for (const auto& s : *turn.sparse) retrieved.insert(s.article_id);
    }
    std::unordered_set<std::string> fused_ids;
    for (const auto& f : turn.fused) {
        if (!retrieved.contains(f.article_id)) {
            throw std::runtime_error("provenance: fused candidate '" + f.article_id +
                                     "' missing from retrieval routes");
        }
        fused_ids.insert(f.article_id);
    }
    auto check = [&](const std::vector<std::string>& ids, const char* stage) {
        for (const auto& id : ids) {
            if (!fused_ids.contains(id)) {
                throw std::runtime_error(std::string("provenance: ") + stage + " id '" + id +
                                         "' missing from fused set");
            }
        }
    };
    check(turn.survivors, "survivor");
    check(turn.post_filter_top10, "post_filter_top10");
    std::unordered_set<std::string> survivor_set(turn.survivors.begin(), turn.survivors.end());
    for (const auto& s : turn.final_ranking) {
        if (!survivor_set.contains(s.article_id)) {
            throw std::runtime_error("provenance: final id '" + s.article_id +
                                     "' missing from survivors");
        }
    }
}

}  // namespace legalrag
