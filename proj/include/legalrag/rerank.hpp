#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "legalrag/analyzer.hpp"
#include "legalrag/corpus.hpp"
#include "legalrag/llm_gateway.hpp"
#include "legalrag/types.hpp"

namespace legalrag {

/// Pair-scoring backend: one finite score per document, higher = more
/// relevant to the query.
class RerankBackend {
public:
    virtual ~RerankBackend() = default;
    virtual std::vector<double> score_pairs(const std::string& query,
                                            const std::vector<std::string>& docs) = 0;
    virtual std::string id() const = 0;
};

/// Offline mock reranker: score = number of distinct query tokens that also
/// occur in the document (cjk-bigram analyzer).
class BigramOverlapReranker : public RerankBackend {
public:
    explicit BigramOverlapReranker(AnalyzerConfig analyzer = {}) : analyzer_(analyzer) {}

    std::vector<double> score_pairs(const std::string& query,
                                    const std::vector<std::string>& docs) override;
    std::string id() const override { return "bigram-overlap"; }

private:
    AnalyzerConfig analyzer_;
};

/// Rescore candidates against the query and keep the top final_k by score
/// descending, ties by ascending article_id. Input order is irrelevant.
/// Scores may be cached (key: backend id + query + document text).
std::vector<RankedCandidate> rerank(RerankBackend& backend, const KvCache* cache,
                                    const std::string& rewritten_query,
                                    const std::vector<RankedCandidate>& candidates,
                                    const Corpus& corpus, std::size_t final_k);

struct RerankTrainingExample {
    std::string conversation_id;
    int turn_index = 0;
    std::string query;
    std::vector<std::string> positive_ids;
    std::vector<std::string> negative_ids;  // exactly 5 when the pool allows
    std::vector<std::string> flags;         // e.g. "short_pool"
    uint64_t seed = 0;
};

/// Inputs to the export: per turn, the rewritten query and the post-filter
/// top-10 candidate ids recorded in the run trace.
struct TurnPool {
    std::string conversation_id;
    int turn_index = 0;
    std::string rewritten_query;
    std::vector<std::string> post_filter_top10;
};

/// Per labeled turn: positives are the gold ids; negatives are sampled
/// uniformly without replacement from (post-filter top-10 minus positives),
/// exactly 5 when at least 5 remain, otherwise all remaining and the example
/// is flagged "short_pool". Deterministic for a fixed seed. Turns with no
/// gold ids are skipped. A labeled turn missing from the trace raises an
/// error naming it.
std::vector<RerankTrainingExample> export_training_data(const std::vector<TurnPool>& trace_pools,
                                                        const std::vector<Conversation>& gold,
                                                        uint64_t seed);

/// Line-delimited export with article texts resolved against the corpus.
std::string serialize_training_data(const std::vector<RerankTrainingExample>& examples,
                                    const Corpus& corpus);

}  // namespace legalrag
