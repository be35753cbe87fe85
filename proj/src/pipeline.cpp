#include "legalrag/pipeline.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>
#include <unordered_map>
#include <unordered_set>

namespace legalrag {

using json = nlohmann::json;

void PipelineConfig::validate() const {
    if (k_dense_per_literature == 0) throw std::invalid_argument("k_dense_per_literature >= 1");
    if (k_sparse == 0) throw std::invalid_argument("k_sparse >= 1");
    if (filter_top_n == 0) throw std::invalid_argument("filter_top_n >= 1");
    if (final_k == 0) throw std::invalid_argument("final_k >= 1");
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0,1]");
}

std::string PipelineConfig::canonical_json() const {
    json j{{"k_dense_per_literature", k_dense_per_literature},
           {"k_sparse", k_sparse},
           {"alpha", alpha},
           {"filter_top_n", filter_top_n},
           {"final_k", final_k},
           {"stages",
            json{{"rewrite", stages.rewrite},
                 {"literature_filter", stages.literature_filter},
                 {"sparse_route", stages.sparse_route},
                 {"article_filter", stages.article_filter},
                 {"rerank", stages.rerank}}},
           {"article_filter_yes_means_keep", article_filter_yes_means_keep},
           {"literature_filter_applies_to_sparse", literature_filter_applies_to_sparse},
           {"analyzer",
            json{{"mode", analyzer.mode == TokenizerMode::CjkBigram ? "cjk_bigram" : "whitespace"},
                 {"lowercase", analyzer.lowercase},
                 {"strip_punctuation", analyzer.strip_punctuation}}},
           {"bm25", json{{"k1", bm25.k1}, {"b", bm25.b}}},
           {"models",
            json{{"rewrite", rewrite_model.model_id},
                 {"literature_filter", literature_model.model_id},
                 {"article_filter", article_model.model_id},
                 {"generate", generate_model.model_id},
                 {"embedding", embedding_model_id},
                 {"rerank", rerank_model_id}}},
           {"export_seed", export_seed}};
    return j.dump();
}

std::vector<FusedCandidate> fuse_candidates(
    const std::vector<ScoredId>& dense, const std::vector<ScoredId>& sparse, double alpha,
    std::size_t filter_top_n,
    const std::function<double(const std::string&)>& dense_score_of) {
    std::vector<FusedCandidate> fused;
    std::unordered_map<std::string, std::size_t> index;

    for (const auto& d : dense) {
        auto [it, inserted] = index.emplace(d.article_id, fused.size());
        if (inserted) {
            FusedCandidate f;
            f.article_id = d.article_id;
            f.dense_score = d.score;
            f.from_dense = true;
            fused.push_back(std::move(f));
        }
    }

    double sparse_min = 0.0;
    double sparse_max = 0.0;
    if (!sparse.empty()) {
        sparse_min = sparse_max = sparse.front().score;
        for (const auto& s : sparse) {
            sparse_min = std::min(sparse_min, s.score);
            sparse_max = std::max(sparse_max, s.score);
        }
    }
    for (const auto& s : sparse) {
        const double norm =
            sparse_max > sparse_min ? (s.score - sparse_min) / (sparse_max - sparse_min) : 1.0;
        auto [it, inserted] = index.emplace(s.article_id, fused.size());
        if (inserted) {
            FusedCandidate f;
            f.article_id = s.article_id;
            f.dense_score = dense_score_of ? dense_score_of(s.article_id) : 0.0;
            fused.push_back(std::move(f));
        }
        auto& f = fused[it->second];
        f.from_sparse = true;
        f.sparse_score = s.score;
        f.sparse_norm = norm;
    }

    for (auto& f : fused) {
        f.fused_score = alpha * f.dense_score + (1.0 - alpha) * f.sparse_norm;
    }
    std::sort(fused.begin(), fused.end(), [](const FusedCandidate& a, const FusedCandidate& b) {
        if (a.fused_score != b.fused_score) return a.fused_score > b.fused_score;
        return a.article_id < b.article_id;
    });
    if (fused.size() > filter_top_n) fused.resize(filter_top_n);
    return fused;
}

namespace {

class StageTimer {
public:
    explicit StageTimer(double& slot) : slot_(slot), start_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        const auto end = std::chrono::steady_clock::now();
        slot_ += std::chrono::duration<double, std::milli>(end - start_).count();
    }

private:
    double& slot_;
    std::chrono::steady_clock::time_point start_;
};

}  // namespace

TurnTrace run_turn(const PipelineConfig& config, const RunContext& ctx,
                   const std::vector<TurnTrace>& history, const std::string& conversation_id,
                   const ConversationTurn& turn) {
    config.validate();
    TurnTrace trace;
    trace.conversation_id = conversation_id;
    trace.turn_index = turn.turn_index;
    trace.query = turn.query;
    trace.rewritten_query = turn.query;

    try {
        // (1) Query rewriting.
        if (config.stages.rewrite) {
            StageTimer timer(trace.timings.rewrite_ms);
            std::vector<std::string> prior_queries;
            for (const auto& h : history) prior_queries.push_back(h.query);
            const ChatRequest req = build_rewrite_prompt(ctx.templates.rewrite,
                                                         config.rewrite_model, prior_queries,
                                                         turn.query);
            RewriteRecord record;
            record.raw = ctx.chat->complete(req);
            const RewriteResult parsed = parse_rewrite(record.raw);
            record.rewritten_query = parsed.rewritten_query;
            record.keywords = parsed.keywords;
            trace.rewritten_query = record.rewritten_query;
            trace.keywords = record.keywords;
            trace.rewrite = std::move(record);
        }

        // (2) Literature selection over the whole catalogue.
        std::vector<std::string> selected = ctx.corpus->literature_names();
        if (config.stages.literature_filter) {
            StageTimer timer(trace.timings.literature_filter_ms);
            std::vector<LiteratureVerdictRecord> verdicts;
            std::vector<std::string> kept;
            for (const auto& name : ctx.corpus->literature_names()) {
                const FilterVerdict v =
                    literature_verdict(*ctx.chat, ctx.templates.literature_filter,
                                       config.literature_model, trace.rewritten_query, name);
                verdicts.push_back(LiteratureVerdictRecord{name, v.keep, v.raw});
                if (v.keep) kept.push_back(name);
            }
            trace.literature_verdicts = std::move(verdicts);
            trace.selected_literatures = kept;
            selected = std::move(kept);
        }

        // (3) Multi-route retrieval.
        {
            StageTimer timer(trace.timings.retrieval_ms);
            std::vector<float> query_vector =
                ctx.query_embedder->embed({trace.rewritten_query}).at(0);
            l2_normalize(query_vector);  // zero vectors stay zero: all-0 scores

            for (const auto& c : ctx.vector_index->search(query_vector, selected,
                                                          config.k_dense_per_literature)) {
                trace.dense.push_back(ScoredId{c.article_id, c.score});
            }

            if (config.stages.sparse_route) {
                if (!ctx.sparse_index) {
                    throw std::runtime_error("sparse route enabled but no sparse index provided");
                }
                std::string sparse_query = trace.rewritten_query;
                for (const auto& kw : trace.keywords) {
                    sparse_query += ' ';
                    sparse_query += kw;
                }
                auto hits = ctx.sparse_index->search(sparse_query, config.k_sparse);
                std::vector<ScoredId> sparse;
                sparse.reserve(hits.size());
                const bool restrict_sparse = config.literature_filter_applies_to_sparse &&
                                             config.stages.literature_filter;
                std::unordered_set<std::string> selected_set;
                if (restrict_sparse) selected_set.insert(selected.begin(), selected.end());
                for (const auto& h : hits) {
                    if (restrict_sparse &&
                        !selected_set.contains(ctx.corpus->at(h.article_id).literature_name)) {
                        continue;
                    }
                    sparse.push_back(ScoredId{h.article_id, h.score});
                }
                trace.sparse = std::move(sparse);
            }

            // (4) Fusion.
            trace.fused = fuse_candidates(
                trace.dense, trace.sparse.value_or(std::vector<ScoredId>{}), config.alpha,
                config.filter_top_n,
                [&](const std::string& id) { return ctx.vector_index->score(query_vector, id); });
        }

        // (5) Article filtering.
        if (config.stages.article_filter) {
            StageTimer timer(trace.timings.article_filter_ms);
            std::vector<ArticleVerdictRecord> verdicts;
            for (const auto& f : trace.fused) {
                const FilterVerdict v = article_verdict(
                    *ctx.chat, ctx.templates.article_filter, config.article_model,
                    trace.rewritten_query, ctx.corpus->at(f.article_id),
                    config.article_filter_yes_means_keep);
                verdicts.push_back(ArticleVerdictRecord{f.article_id, v.keep, v.raw});
                if (v.keep) trace.survivors.push_back(f.article_id);
            }
            trace.article_verdicts = std::move(verdicts);
        } else {
            for (const auto& f : trace.fused) trace.survivors.push_back(f.article_id);
        }
        const std::size_t top10 = std::min<std::size_t>(10, trace.survivors.size());
        trace.post_filter_top10.assign(trace.survivors.begin(),
                                       trace.survivors.begin() + top10);

        // (6) Reranking (or fused order when off).
        if (config.stages.rerank) {
            StageTimer timer(trace.timings.rerank_ms);
            if (!ctx.reranker) {
                throw std::runtime_error("rerank enabled but no rerank backend provided");
            }
            std::vector<RankedCandidate> candidates;
            std::unordered_map<std::string, double> fused_score;
            for (const auto& f : trace.fused) fused_score.emplace(f.article_id, f.fused_score);
            for (const auto& id : trace.survivors) {
                candidates.push_back(RankedCandidate{id, fused_score.at(id), Route::Fused});
            }
            const auto ranked =
                rerank(*ctx.reranker, ctx.rerank_cache, trace.rewritten_query, candidates,
                       *ctx.corpus, std::max<std::size_t>(1, trace.survivors.size()));
            std::vector<ScoredId> scores;
            scores.reserve(ranked.size());
            for (const auto& r : ranked) scores.push_back(ScoredId{r.article_id, r.score});
            trace.rerank_scores = scores;
            const std::size_t take = std::min(config.final_k, scores.size());
            trace.final_ranking.assign(scores.begin(), scores.begin() + take);
        } else {
            std::unordered_map<std::string, double> fused_score;
            for (const auto& f : trace.fused) fused_score.emplace(f.article_id, f.fused_score);
            const std::size_t take = std::min(config.final_k, trace.survivors.size());
            for (std::size_t i = 0; i < take; ++i) {
                trace.final_ranking.push_back(
                    ScoredId{trace.survivors[i], fused_score.at(trace.survivors[i])});
            }
        }

        // (7) Response generation.
        {
            StageTimer timer(trace.timings.generate_ms);
            std::vector<std::pair<std::string, std::string>> prior;
            for (const auto& h : history) {
                if (!h.failed && !h.response.empty()) prior.emplace_back(h.query, h.response);
            }
            std::vector<LegalArticle> top_articles;
            for (const auto& s : trace.final_ranking) {
                top_articles.push_back(ctx.corpus->at(s.article_id));
            }
            const ChatRequest req =
                build_generation_prompt(ctx.templates.generate, config.generate_model, prior,
                                        turn.query, top_articles);
            trace.response = ctx.chat->complete(req);
        }
    } catch (const std::exception& e) {
        trace.failed = true;
        trace.error = e.what();
        spdlog::warn("turn {}/{} failed: {}", conversation_id, turn.turn_index, e.what());
    }
    return trace;
}

RunTrace run_dataset(const PipelineConfig& config, const RunContext& ctx,
                     const std::vector<Conversation>& conversations) {
    config.validate();

    std::vector<std::vector<TurnTrace>> per_conversation(conversations.size());
    auto process = [&](std::size_t idx) {
        const Conversation& conv = conversations[idx];
        std::vector<TurnTrace>& history = per_conversation[idx];
        history.reserve(conv.turns.size());
        for (const auto& turn : conv.turns) {
            history.push_back(run_turn(config, ctx, history, conv.conversation_id, turn));
        }
    };

    const std::size_t workers =
        std::max<std::size_t>(1, std::min(config.max_parallel_conversations,
                                          conversations.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < conversations.size(); ++i) process(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= conversations.size()) return;
                    process(i);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    RunTrace trace;
    trace.config_snapshot = config.canonical_json();
    trace.corpus_digest = ctx.corpus->digest();
    trace.backend_ids["chat"] = ctx.chat ? ctx.chat->backend_id() : "";
    trace.backend_ids["embedding"] = ctx.query_embedder ? ctx.query_embedder->id() : "";
    trace.backend_ids["rerank"] = ctx.reranker ? ctx.reranker->id() : "";
    for (auto& conv_traces : per_conversation) {
        for (auto& t : conv_traces) trace.turns.push_back(std::move(t));
    }
    if (trace.all_failed() && !trace.turns.empty()) {
        throw std::runtime_error("run_dataset: every turn failed; first error: " +
                                 trace.turns.front().error);
    }
    return trace;
}

}  // namespace legalrag
