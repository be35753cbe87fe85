#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "legalrag/analyzer.hpp"
#include "legalrag/dense_index.hpp"
#include "legalrag/types.hpp"

namespace legalrag {

/// NDCG@5 with binary relevance (gold = 1, else 0):
///   DCG  = sum_{i=1..min(5,len)} rel_i / log2(i+1)
///   IDCG = sum_{i=1..min(5,|gold|)} 1 / log2(i+1)
/// Requires non-empty gold (callers skip unlabeled turns).
double ndcg_at_5(const std::vector<std::string>& ranked_ids, const std::set<std::string>& gold_ids);

/// Fraction of keywords whose normalize() form is a substring of the
/// normalized response. Requires a non-empty keyword list.
double keyword_accuracy(const std::string& response, const std::vector<std::string>& keywords);

/// Greedy token-embedding F1: precision = mean over candidate tokens of the
/// best cosine against any reference token, recall symmetric,
/// F1 = 2PR/(P+R) (0 when P+R = 0). Empty tokenization on either side is the
/// caller's skip condition.
double bert_f1(const std::string& candidate, const std::string& reference,
               EmbeddingBackend& backend, const AnalyzerConfig& analyzer = {});

struct TurnScore {
    std::string conversation_id;
    int turn_index = 0;
    std::optional<double> ndcg;
    std::optional<double> bert;
    std::optional<double> keyword_acc;
    std::optional<double> retrieval_score;   // 100 * ndcg
    std::optional<double> generation_score;  // 50 * bert + 50 * keyword_acc
    std::optional<double> total;             // 0.5 * retrieval + 0.5 * generation
    std::vector<std::string> skip_reasons;
};

struct MetricReport {
    std::vector<TurnScore> turns;
    std::optional<double> mean_ndcg;
    std::optional<double> mean_bert;
    std::optional<double> mean_keyword_acc;
    std::optional<double> mean_retrieval;
    std::optional<double> mean_generation;
    std::optional<double> mean_total;
    std::size_t scored_turns = 0;
    std::size_t skipped_turns = 0;  // turns with any component missing
};

/// Applies the linear score identities per turn and averages each field over
/// the turns where it is present.
MetricReport composite(std::vector<TurnScore> turn_scores);

std::string metrics_to_json(const MetricReport& report);
std::string metrics_to_csv(const MetricReport& report);

}  // namespace legalrag
