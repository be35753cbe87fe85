#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "legalrag/types.hpp"

namespace legalrag {

struct ScoredId {
    std::string article_id;
    double score = 0.0;

    bool operator==(const ScoredId&) const = default;
};

struct RewriteRecord {
    std::string raw;
    std::string rewritten_query;
    std::vector<std::string> keywords;
};

struct LiteratureVerdictRecord {
    std::string name;
    bool keep = true;
    std::string raw;
};

struct ArticleVerdictRecord {
    std::string article_id;
    bool keep = true;
    std::string raw;
};

struct FusedCandidate {
    std::string article_id;
    double fused_score = 0.0;
    double dense_score = 0.0;
    std::optional<double> sparse_score;  // raw BM25, absent when not in the sparse list
    double sparse_norm = 0.0;            // min-max normalized, 0 when absent
    bool from_dense = false;
    bool from_sparse = false;
};

/// Wall-clock per stage; lives in memory and in the run manifest, never in
/// the serialized trace lines (those must be byte-stable across runs).
struct StageTimings {
    double rewrite_ms = 0.0;
    double literature_filter_ms = 0.0;
    double retrieval_ms = 0.0;
    double article_filter_ms = 0.0;
    double rerank_ms = 0.0;
    double generate_ms = 0.0;
};

/// Complete audit record of one turn. Optional stage records are absent when
/// the stage was toggled off, so an ablated run's trace carries no trace of
/// the disabled stages.
struct TurnTrace {
    std::string conversation_id;
    int turn_index = 0;
    std::string query;

    std::optional<RewriteRecord> rewrite;
    std::string rewritten_query;  // == query when the rewrite stage is off
    std::vector<std::string> keywords;

    std::optional<std::vector<LiteratureVerdictRecord>> literature_verdicts;
    std::optional<std::vector<std::string>> selected_literatures;

    std::vector<ScoredId> dense;
    std::optional<std::vector<ScoredId>> sparse;

    std::vector<FusedCandidate> fused;  // ranked, truncated to filter_top_n

    std::optional<std::vector<ArticleVerdictRecord>> article_verdicts;
    std::vector<std::string> survivors;  // fused order
    std::vector<std::string> post_filter_top10;

    std::optional<std::vector<ScoredId>> rerank_scores;  // all survivors, ranked
    std::vector<ScoredId> final_ranking;                 // length <= final_k
    std::string response;

    bool failed = false;
    std::string error;

    StageTimings timings;
};

struct RunTrace {
    std::string config_snapshot;  // canonical JSON of the pipeline config
    std::string corpus_digest;
    std::map<std::string, std::string> backend_ids;
    std::vector<TurnTrace> turns;

    bool all_failed() const;
};

/// Line-delimited serialization: one header line, then one line per turn.
/// Deterministic: identical traces serialize to identical bytes.
std::string serialize_run_trace(const RunTrace& trace);
RunTrace parse_run_trace(const std::string& content);

/// Provenance closure: every downstream article id must appear in some
/// upstream stage output. Throws std::runtime_error naming the violation.
void validate_provenance(const TurnTrace& turn);

}  // namespace legalrag
