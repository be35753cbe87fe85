#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "legalrag/corpus.hpp"
#include "legalrag/dense_index.hpp"
#include "legalrag/llm_gateway.hpp"
#include "legalrag/rerank.hpp"
#include "legalrag/sparse_index.hpp"
#include "legalrag/stages.hpp"
#include "legalrag/trace.hpp"

namespace legalrag {

struct StageToggles {
    bool rewrite = true;
    bool literature_filter = true;
    bool sparse_route = true;
    bool article_filter = true;
    bool rerank = true;

    bool operator==(const StageToggles&) const = default;
};

struct PipelineConfig {
    std::size_t k_dense_per_literature = 50;
    std::size_t k_sparse = 1000;
    double alpha = 1.0;  // fused = alpha * dense + (1 - alpha) * minmax(sparse)
    std::size_t filter_top_n = 500;
    std::size_t final_k = 5;

    StageToggles stages;
    bool article_filter_yes_means_keep = true;
    bool literature_filter_applies_to_sparse = false;

    AnalyzerConfig analyzer;
    Bm25Params bm25;

    StageModel rewrite_model{"rewrite-model"};
    StageModel literature_model{"filter-model"};
    StageModel article_model{"filter-model"};
    StageModel generate_model{"generate-model"};
    std::string embedding_model_id = "embedding-model";
    std::string rerank_model_id = "rerank-model";

    uint64_t export_seed = 7;
    std::size_t max_parallel_conversations = 1;

    void validate() const;

    /// Order-stable JSON snapshot embedded in the trace header; two runs
    /// with equal snapshots were configured identically.
    std::string canonical_json() const;
};

/// Everything a run needs; all referenced objects outlive the run and are
/// treated as immutable (the gateway and caches synchronize internally).
struct RunContext {
    const Corpus* corpus = nullptr;
    const SparseIndex* sparse_index = nullptr;  // required when sparse_route is on
    const VectorIndex* vector_index = nullptr;
    LlmGateway* chat = nullptr;
    EmbeddingBackend* query_embedder = nullptr;
    RerankBackend* reranker = nullptr;  // required when rerank is on
    const KvCache* rerank_cache = nullptr;
    StageTemplates templates = default_templates();
};

/// Fusion of the two retrieval routes: the candidate set is the union;
/// every candidate carries a dense cosine score (fetched on demand for
/// sparse-only candidates); sparse scores are min-max normalized over the
/// sparse result list (absent -> 0, degenerate range -> 1). Ranked by fused
/// score descending, ties by ascending article_id, truncated to
/// filter_top_n.
std::vector<FusedCandidate> fuse_candidates(
    const std::vector<ScoredId>& dense, const std::vector<ScoredId>& sparse, double alpha,
    std::size_t filter_top_n,
    const std::function<double(const std::string&)>& dense_score_of);

/// Execute the five stages for one turn. history holds the completed traces
/// of this conversation's earlier turns. Backend failures do not throw: the
/// returned trace is marked failed and keeps every completed stage.
TurnTrace run_turn(const PipelineConfig& config, const RunContext& ctx,
                   const std::vector<TurnTrace>& history, const std::string& conversation_id,
                   const ConversationTurn& turn);

/// Process every conversation (turns strictly in order inside each one;
/// distinct conversations may run on parallel workers). Output order is
/// dataset order regardless of scheduling. Throws only when every turn
/// failed.
RunTrace run_dataset(const PipelineConfig& config, const RunContext& ctx,
                     const std::vector<Conversation>& conversations);

}  // namespace legalrag
