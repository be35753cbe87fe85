#include "legalrag/evaluator.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "legalrag/util.hpp"

namespace legalrag {

using json = nlohmann::json;

double ndcg_at_5(const std::vector<std::string>& ranked_ids,
                 const std::set<std::string>& gold_ids) {
    if (gold_ids.empty()) throw std::invalid_argument("ndcg_at_5: gold set must be non-empty");
    constexpr std::size_t k = 5;
    double dcg = 0.0;
    const std::size_t depth = std::min(k, ranked_ids.size());
    for (std::size_t i = 0; i < depth; ++i) {
        if (gold_ids.contains(ranked_ids[i])) {
            dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
        }
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min(k, gold_ids.size());
    for (std::size_t i = 0; i < ideal; ++i) {
        idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
}

double keyword_accuracy(const std::string& response, const std::vector<std::string>& keywords) {
    if (keywords.empty()) throw std::invalid_argument("keyword_accuracy: empty keyword list");
    const std::string haystack = normalize(response);
    std::size_t found = 0;
    for (const auto& kw : keywords) {
        if (haystack.find(normalize(kw)) != std::string::npos) ++found;
    }
    return static_cast<double>(found) / static_cast<double>(keywords.size());
}

namespace {

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double mean_best_cosine(const std::vector<std::vector<float>>& from,
                        const std::vector<std::vector<float>>& to) {
    double acc = 0.0;
    for (const auto& f : from) {
        double best = -1.0;
        for (const auto& t : to) best = std::max(best, cosine(f, t));
        acc += best;
    }
    return acc / static_cast<double>(from.size());
}

}  // namespace

double bert_f1(const std::string& candidate, const std::string& reference,
               EmbeddingBackend& backend, const AnalyzerConfig& analyzer) {
    const auto cand_tokens = tokenize(candidate, analyzer);
    const auto ref_tokens = tokenize(reference, analyzer);
    if (cand_tokens.empty() || ref_tokens.empty()) {
        throw std::invalid_argument("bert_f1: empty tokenization");
    }

    // One embedding per distinct token; occurrences reuse it.
    std::vector<std::string> unique;
    std::unordered_map<std::string, std::size_t> position;
    for (const auto& t : cand_tokens) {
        if (position.emplace(t, unique.size()).second) unique.push_back(t);
    }
    for (const auto& t : ref_tokens) {
        if (position.emplace(t, unique.size()).second) unique.push_back(t);
    }
    const auto vectors = backend.embed(unique);
    if (vectors.size() != unique.size()) {
        throw BackendError("bert_f1: embedding backend returned " +
                           std::to_string(vectors.size()) + " vectors for " +
                           std::to_string(unique.size()) + " tokens");
    }

    auto gather = [&](const std::vector<std::string>& tokens) {
        std::vector<std::vector<float>> out;
        out.reserve(tokens.size());
        for (const auto& t : tokens) out.push_back(vectors[position.at(t)]);
        return out;
    };
    const auto cand_vecs = gather(cand_tokens);
    const auto ref_vecs = gather(ref_tokens);

    const double precision = mean_best_cosine(cand_vecs, ref_vecs);
    const double recall = mean_best_cosine(ref_vecs, cand_vecs);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

MetricReport composite(std::vector<TurnScore> turn_scores) {
    MetricReport report;
    for (auto& ts : turn_scores) {
        if (ts.ndcg.has_value()) ts.retrieval_score = 100.0 * *ts.ndcg;
        if (ts.bert.has_value() && ts.keyword_acc.has_value()) {
            ts.generation_score = 50.0 * *ts.bert + 50.0 * *ts.keyword_acc;
        }
        if (ts.retrieval_score.has_value() && ts.generation_score.has_value()) {
            ts.total = 0.5 * *ts.retrieval_score + 0.5 * *ts.generation_score;
            ++report.scored_turns;
        } else {
            ++report.skipped_turns;
        }
        report.turns.push_back(std::move(ts));
    }

    auto mean_of = [&](auto getter) -> std::optional<double> {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& ts : report.turns) {
            if (const auto v = getter(ts); v.has_value()) {
                sum += *v;
                ++n;
            }
        }
        if (n == 0) return std::nullopt;
        return sum / static_cast<double>(n);
    };
    report.mean_ndcg = mean_of([](const TurnScore& t) { return t.ndcg; });
    report.mean_bert = mean_of([](const TurnScore& t) { return t.bert; });
    report.mean_keyword_acc = mean_of([](const TurnScore& t) { return t.keyword_acc; });
    report.mean_retrieval = mean_of([](const TurnScore& t) { return t.retrieval_score; });
    report.mean_generation = mean_of([](const TurnScore& t) { return t.generation_score; });
    report.mean_total = mean_of([](const TurnScore& t) { return t.total; });
    return report;
}

namespace {

json optional_to_json(const std::optional<double>& v) {
    if (v.has_value()) return *v;
    return nullptr;
}

std::string csv_cell(const std::optional<double>& v) {
    if (!v.has_value()) return "";
    json j = *v;
    return j.dump();
}

}  // namespace

std::string metrics_to_json(const MetricReport& report) {
    json turns = json::array();
    for (const auto& ts : report.turns) {
        turns.push_back(json{{"conversation_id", ts.conversation_id},
                             {"turn_index", ts.turn_index},
                             {"ndcg_at_5", optional_to_json(ts.ndcg)},
                             {"bert_f1", optional_to_json(ts.bert)},
                             {"keyword_accuracy", optional_to_json(ts.keyword_acc)},
                             {"retrieval_score", optional_to_json(ts.retrieval_score)},
                             {"generation_score", optional_to_json(ts.generation_score)},
                             {"total", optional_to_json(ts.total)},
                             {"skip_reasons", ts.skip_reasons}});
    }
    json j{{"turns", std::move(turns)},
           {"aggregates",
            json{{"mean_ndcg_at_5", optional_to_json(report.mean_ndcg)},
                 {"mean_bert_f1", optional_to_json(report.mean_bert)},
                 {"mean_keyword_accuracy", optional_to_json(report.mean_keyword_acc)},
                 {"mean_retrieval_score", optional_to_json(report.mean_retrieval)},
                 {"mean_generation_score", optional_to_json(report.mean_generation)},
                 {"mean_total", optional_to_json(report.mean_total)},
                 {"scored_turns", report.scored_turns},
                 {"skipped_turns", report.skipped_turns}}}};
    return j.dump(2) + "\n";
}

std::string metrics_to_csv(const MetricReport& report) {
    std::string out =
        "conversation_id,turn_index,ndcg_at_5,bert_f1,keyword_accuracy,"
        "retrieval_score,generation_score,total,skip_reasons\n";
    for (const auto& ts : report.turns) {
        std::string reasons;
        for (std::size_t i = 0; i < ts.skip_reasons.size(); ++i) {
            if (i > 0) reasons += ';';
            reasons += ts.skip_reasons[i];
        }
        out += ts.conversation_id + "," + std::to_string(ts.turn_index) + "," +
               csv_cell(ts.ndcg) + "," + csv_cell(ts.bert) + "," + csv_cell(ts.keyword_acc) +
               "," + csv_cell(ts.retrieval_score) + "," + csv_cell(ts.generation_score) + "," +
               csv_cell(ts.total) + "," + reasons + "\n";
    }
    return out;
}

}  // namespace legalrag
