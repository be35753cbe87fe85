#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>

#include "legalrag/config.hpp"
#include "legalrag/corpus.hpp"
#include "legalrag/evaluator.hpp"
#include "legalrag/pipeline.hpp"
#include "legalrag/rerank.hpp"
#include "legalrag/trace.hpp"
#include "legalrag/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace legalrag;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitBackend = 2;
constexpr int kExitTotalFailure = 3;

struct GlobalOptions {
    std::string config_path;
    std::string cache_dir;
    int max_concurrency = 0;  // 0 = use config
    int64_t seed = -1;        // <0 = use config
};

AppConfig load_app_config(const GlobalOptions& opts) {
    AppConfig config;
    if (!opts.config_path.empty()) config = AppConfig::load(opts.config_path);
    if (opts.max_concurrency > 0) {
        config.max_concurrent_requests = opts.max_concurrency;
        config.pipeline.max_parallel_conversations =
            static_cast<std::size_t>(opts.max_concurrency);
    }
    if (opts.seed >= 0) config.pipeline.export_seed = static_cast<uint64_t>(opts.seed);
    return config;
}

std::optional<fs::path> cache_override(const GlobalOptions& opts) {
    if (opts.cache_dir.empty()) return std::nullopt;
    return fs::path(opts.cache_dir);
}

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void print_stats(const StatsReport& stats) {
    std::cout << "conversations:            " << stats.total_conversations << "\n"
              << "queries:                  " << stats.total_queries << "\n"
              << "articles:                 " << stats.total_articles << "\n"
              << "literatures:              " << stats.total_literatures << "\n"
              << "avg query length:         " << stats.avg_query_length << "\n"
              << "avg response length:      " << stats.avg_response_length << "\n"
              << "avg gold articles/query:  " << stats.avg_gold_articles_per_query << "\n"
              << "avg keywords/query:       " << stats.avg_keywords_per_query << "\n";
}

int cmd_ingest(const GlobalOptions&, const std::string& articles_path,
               const std::string& conversations_path, const std::string& out_dir) {
    const Corpus corpus = load_corpus(articles_path);
    const auto conversations = load_conversations(conversations_path);
    validate_conversations(conversations, corpus);
    const StatsReport stats = corpus_stats(corpus, conversations);

    fs::create_directories(out_dir);
    write_file_atomic(fs::path(out_dir) / "articles.jsonl", serialize_corpus(corpus));
    write_file_atomic(fs::path(out_dir) / "conversations.jsonl",
                      serialize_conversations(conversations));
    write_file_atomic(fs::path(out_dir) / "stats.json", stats_to_json(stats));
    print_stats(stats);
    return kExitOk;
}

int cmd_stats(const std::string& articles_path, const std::string& conversations_path) {
    const Corpus corpus = load_corpus(articles_path);
    const auto conversations = load_conversations(conversations_path);
    print_stats(corpus_stats(corpus, conversations));
    return kExitOk;
}

json index_meta(const AppConfig& config, const Corpus& corpus, const std::string& embedding_id) {
    return json{{"corpus_digest", corpus.digest()},
                {"analyzer", json::parse(config.pipeline.canonical_json())["analyzer"]},
                {"bm25", json{{"k1", config.pipeline.bm25.k1}, {"b", config.pipeline.bm25.b}}},
                {"embedding_backend", embedding_id}};
}

int cmd_index(const GlobalOptions& opts, const std::string& articles_path,
              const std::string& out_dir, bool force) {
    const AppConfig config = load_app_config(opts);
    const Corpus corpus = load_corpus(articles_path);
    const BuiltBackends backends = build_backends(config, cache_override(opts));

    fs::create_directories(out_dir);
    const fs::path meta_path = fs::path(out_dir) / "index_meta.json";
    const fs::path sparse_path = fs::path(out_dir) / "sparse.idx";
    const fs::path dense_path = fs::path(out_dir) / "dense.idx";

    const json meta = index_meta(config, corpus, backends.cached_embedding->id());
    if (!force && fs::exists(meta_path) && fs::exists(sparse_path) && fs::exists(dense_path)) {
        if (json::parse(read_file(meta_path)) == meta) {
            std::cout << "indexes up to date, skipping (use --force to rebuild)\n";
            return kExitOk;
        }
    }

    const SparseIndex sparse =
        SparseIndex::build(corpus.articles(), config.pipeline.analyzer, config.pipeline.bm25);
    sparse.save(sparse_path);
    spdlog::info("sparse index: {} docs, avg length {:.2f}", sparse.doc_count(),
                 sparse.avg_doc_length());

    const VectorIndex dense =
        VectorIndex::build(corpus.articles(), corpus.literatures(), *backends.cached_embedding);
    dense.save(dense_path);
    spdlog::info("vector index: {} vectors in {} literatures, d={}", dense.size(),
                 dense.literature_names().size(), dense.dimension());

    write_file_atomic(meta_path, meta.dump(2) + "\n");
    std::cout << "wrote " << sparse_path.string() << " and " << dense_path.string() << "\n";
    return kExitOk;
}

int cmd_run(const GlobalOptions& opts, const std::string& articles_path,
            const std::string& conversations_path, const std::string& out_dir,
            const std::string& ablation, const std::string& index_dir) {
    AppConfig config = load_app_config(opts);
    if (!ablation.empty()) {
        const auto preset = parse_ablation(ablation);
        if (!preset.has_value()) {
            std::cerr << "unknown --ablation preset '" << ablation
                      << "' (expected: vanilla|+rewrite|+rerank|+multiroute|+filtering)\n";
            return kExitValidation;
        }
        config.pipeline.stages = ablation_toggles(*preset);
    }

    const Corpus corpus = load_corpus(articles_path);
    const auto conversations = load_conversations(conversations_path);
    validate_conversations(conversations, corpus);

    const BuiltBackends backends = build_backends(config, cache_override(opts));

    std::optional<SparseIndex> sparse;
    std::optional<VectorIndex> dense;
    const fs::path sparse_path = fs::path(index_dir) / "sparse.idx";
    const fs::path dense_path = fs::path(index_dir) / "dense.idx";
    if (!index_dir.empty() && fs::exists(sparse_path) && fs::exists(dense_path)) {
        sparse = SparseIndex::load(sparse_path);
        dense = VectorIndex::load(dense_path);
        spdlog::info("loaded indexes from {}", index_dir);
    } else {
        sparse = SparseIndex::build(corpus.articles(), config.pipeline.analyzer,
                                    config.pipeline.bm25);
        dense = VectorIndex::build(corpus.articles(), corpus.literatures(),
                                   *backends.cached_embedding);
    }

    RunContext ctx;
    ctx.corpus = &corpus;
    ctx.sparse_index = &*sparse;
    ctx.vector_index = &*dense;
    ctx.chat = backends.gateway.get();
    ctx.query_embedder = backends.cached_embedding.get();
    ctx.reranker = backends.reranker.get();
    ctx.rerank_cache = backends.rerank_cache.get();
    ctx.templates = load_stage_templates(config);

    const std::string started_at = iso_timestamp();
    RunTrace trace;
    try {
        trace = run_dataset(config.pipeline, ctx, conversations);
    } catch (const std::exception& e) {
        std::cerr << "run failed entirely: " << e.what() << "\n";
        return kExitTotalFailure;
    }

    fs::create_directories(out_dir);
    const std::string trace_text = serialize_run_trace(trace);
    write_file_atomic(fs::path(out_dir) / "trace.jsonl", trace_text);

    json failures = json::array();
    StageTimings totals;
    for (const auto& t : trace.turns) {
        totals.rewrite_ms += t.timings.rewrite_ms;
        totals.literature_filter_ms += t.timings.literature_filter_ms;
        totals.retrieval_ms += t.timings.retrieval_ms;
        totals.article_filter_ms += t.timings.article_filter_ms;
        totals.rerank_ms += t.timings.rerank_ms;
        totals.generate_ms += t.timings.generate_ms;
        if (t.failed) {
            failures.push_back(json{{"conversation_id", t.conversation_id},
                                    {"turn_index", t.turn_index},
                                    {"error", t.error}});
        }
    }
    const GatewayStats chat_stats = backends.gateway->stats();
    const std::string config_snapshot = config.pipeline.canonical_json();
    json manifest{
        {"run_id", sha256_hex(config_snapshot + trace.corpus_digest).substr(0, 16)},
        {"config_digest", sha256_hex(config_snapshot)},
        {"corpus_digest", trace.corpus_digest},
        {"trace_digest", sha256_hex(trace_text)},
        {"started_at", started_at},
        {"finished_at", iso_timestamp()},
        {"turns_total", trace.turns.size()},
        {"turns_failed", failures.size()},
        {"failures", std::move(failures)},
        {"chat_calls", chat_stats.calls},
        {"chat_cache_hits", chat_stats.cache_hits},
        {"embedding_cache_hits", backends.cached_embedding->cache_hits()},
        {"embedding_backend_texts", backends.cached_embedding->backend_texts()},
        {"stage_timings_ms",
         json{{"rewrite", totals.rewrite_ms},
              {"literature_filter", totals.literature_filter_ms},
              {"retrieval", totals.retrieval_ms},
              {"article_filter", totals.article_filter_ms},
              {"rerank", totals.rerank_ms},
              {"generate", totals.generate_ms}}}};
    write_file_atomic(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");

    const std::size_t failed = manifest["turns_failed"].get<std::size_t>();
    std::cout << "run complete: " << trace.turns.size() << " turns, " << failed << " failed, "
              << "trace written to " << (fs::path(out_dir) / "trace.jsonl").string() << "\n";
    if (failed > 0) {
        std::cout << "failure ledger in manifest.json (" << failed << " turns)\n";
    }
    return kExitOk;
}

int cmd_eval(const GlobalOptions& opts, const std::string& trace_path,
             const std::string& conversations_path, const std::string& out_dir) {
    const AppConfig config = load_app_config(opts);
    const RunTrace trace = parse_run_trace(read_file(trace_path));
    const auto conversations = load_conversations(conversations_path);

    // Manifest next to the trace (if present) must still describe it.
    const fs::path manifest_path = fs::path(trace_path).parent_path() / "manifest.json";
    if (fs::exists(manifest_path)) {
        const json manifest = json::parse(read_file(manifest_path));
        if (manifest.contains("trace_digest") &&
            manifest["trace_digest"] != sha256_hex(read_file(trace_path))) {
            std::cerr << "manifest trace_digest does not match " << trace_path << "\n";
            return kExitValidation;
        }
    }

    std::map<std::pair<std::string, int>, const ConversationTurn*> gold;
    for (const auto& conv : conversations) {
        for (const auto& turn : conv.turns) {
            gold.emplace(std::make_pair(conv.conversation_id, turn.turn_index), &turn);
        }
    }
    std::set<std::pair<std::string, int>> traced;
    std::vector<std::string> unmatched;
    for (const auto& t : trace.turns) {
        traced.emplace(t.conversation_id, t.turn_index);
        if (!gold.contains({t.conversation_id, t.turn_index})) {
            unmatched.push_back(t.conversation_id + "/turn " + std::to_string(t.turn_index) +
                                " (missing from gold)");
        }
    }
    for (const auto& [key, _] : gold) {
        if (!traced.contains(key)) {
            unmatched.push_back(key.first + "/turn " + std::to_string(key.second) +
                                " (missing from trace)");
        }
    }
    if (!unmatched.empty()) {
        std::cerr << "trace/gold mismatch:\n";
        for (const auto& u : unmatched) std::cerr << "  " << u << "\n";
        return kExitValidation;
    }

    const BuiltBackends backends = build_backends(config, cache_override(opts));
    std::vector<TurnScore> scores;
    for (const auto& t : trace.turns) {
        const ConversationTurn& g = *gold.at({t.conversation_id, t.turn_index});
        TurnScore ts;
        ts.conversation_id = t.conversation_id;
        ts.turn_index = t.turn_index;
        if (t.failed) {
            ts.skip_reasons.push_back("turn_failed");
            scores.push_back(std::move(ts));
            continue;
        }
        if (g.gold_article_ids.empty()) {
            ts.skip_reasons.push_back("no_gold_articles");
        } else {
            std::vector<std::string> ranked;
            for (const auto& s : t.final_ranking) ranked.push_back(s.article_id);
            ts.ndcg = ndcg_at_5(ranked, std::set<std::string>(g.gold_article_ids.begin(),
                                                              g.gold_article_ids.end()));
        }
        if (g.reference_keywords.empty()) {
            ts.skip_reasons.push_back("no_reference_keywords");
        } else {
            ts.keyword_acc = keyword_accuracy(t.response, g.reference_keywords);
            if (g.reference_response.empty() ||
                tokenize(t.response, config.pipeline.analyzer).empty() ||
                tokenize(g.reference_response, config.pipeline.analyzer).empty()) {
                ts.skip_reasons.push_back("empty_tokenization_for_bert_f1");
            } else {
                ts.bert = bert_f1(t.response, g.reference_response, *backends.cached_embedding,
                                  config.pipeline.analyzer);
            }
        }
        scores.push_back(std::move(ts));
    }

    const MetricReport report = composite(std::move(scores));
    fs::create_directories(out_dir);
    write_file_atomic(fs::path(out_dir) / "metrics.json", metrics_to_json(report));
    write_file_atomic(fs::path(out_dir) / "metrics.csv", metrics_to_csv(report));
    if (report.mean_total.has_value()) {
        std::cout << "dataset total: " << *report.mean_total << " (over " << report.scored_turns
                  << " scored turns, " << report.skipped_turns << " skipped)\n";
    } else {
        std::cout << "dataset total: n/a (no fully scored turns; " << report.skipped_turns
                  << " skipped)\n";
    }
    return kExitOk;
}

int cmd_export_rerank(const GlobalOptions& opts, const std::string& trace_path,
                      const std::string& conversations_path, const std::string& articles_path,
                      const std::string& out_file) {
    const AppConfig config = load_app_config(opts);
    const RunTrace trace = parse_run_trace(read_file(trace_path));
    const auto conversations = load_conversations(conversations_path);
    const Corpus corpus = load_corpus(articles_path);

    std::vector<TurnPool> pools;
    for (const auto& t : trace.turns) {
        if (t.failed) continue;
        pools.push_back(
            TurnPool{t.conversation_id, t.turn_index, t.rewritten_query, t.post_filter_top10});
    }
    const auto examples =
        export_training_data(pools, conversations, config.pipeline.export_seed);
    write_file_atomic(out_file, serialize_training_data(examples, corpus));
    std::size_t short_pool = 0;
    for (const auto& ex : examples) {
        if (!ex.flags.empty()) ++short_pool;
    }
    std::cout << "exported " << examples.size() << " training examples (" << short_pool
              << " with short pools) to " << out_file << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("legalrag"));
    spdlog::set_level(spdlog::level::info);

    CLI::App app{"Multi-turn legal consultation RAG pipeline"};
    app.require_subcommand(1);
    // Global flags (--config, --seed, ...) may appear after the subcommand.
    app.fallthrough();

    GlobalOptions opts;
    app.add_option("--config", opts.config_path, "Config file (JSON)");
    app.add_option("--cache-dir", opts.cache_dir, "Response/embedding cache directory");
    app.add_option("--max-concurrency", opts.max_concurrency,
                   "Max concurrent backend requests / parallel conversations");
    app.add_option("--seed", opts.seed, "Seed for rerank training-data export");

    std::string articles_path;
    std::string conversations_path;
    std::string out_dir;
    std::string trace_path;
    std::string index_dir;
    std::string ablation;
    std::string out_file;
    bool force = false;

    auto* ingest = app.add_subcommand("ingest", "Validate a dataset and store canonical copies");
    ingest->add_option("--articles", articles_path, "articles.jsonl")->required();
    ingest->add_option("--conversations", conversations_path, "conversations.jsonl")->required();
    ingest->add_option("--out", out_dir, "Output directory")->required();

    auto* index = app.add_subcommand("index", "Build and persist sparse + dense indexes");
    index->add_option("--articles", articles_path, "articles.jsonl")->required();
    index->add_option("--out", out_dir, "Index directory")->required();
    index->add_flag("--force", force, "Rebuild even when up to date");

    auto* run = app.add_subcommand("run", "Replay conversations through the pipeline");
    run->add_option("--articles", articles_path, "articles.jsonl")->required();
    run->add_option("--conversations", conversations_path, "conversations.jsonl")->required();
    run->add_option("--out", out_dir, "Run output directory")->required();
    run->add_option("--ablation", ablation,
                    "Preset: vanilla|+rewrite|+rerank|+multiroute|+filtering");
    run->add_option("--index", index_dir, "Directory with persisted indexes");

    auto* eval = app.add_subcommand("eval", "Score a run trace against gold annotations");
    eval->add_option("--trace", trace_path, "trace.jsonl from a run")->required();
    eval->add_option("--conversations", conversations_path, "gold conversations.jsonl")
        ->required();
    eval->add_option("--out", out_dir, "Metrics output directory")->required();

    auto* exp = app.add_subcommand("export-rerank", "Export reranker training triplets");
    exp->add_option("--trace", trace_path, "trace.jsonl from a run")->required();
    exp->add_option("--conversations", conversations_path, "gold conversations.jsonl")
        ->required();
    exp->add_option("--articles", articles_path, "articles.jsonl")->required();
    exp->add_option("--out", out_file, "Output JSONL file")->required();

    auto* stats = app.add_subcommand("stats", "Print dataset statistics");
    stats->add_option("--articles", articles_path, "articles.jsonl")->required();
    stats->add_option("--conversations", conversations_path, "conversations.jsonl")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(ingest)) {
            return cmd_ingest(opts, articles_path, conversations_path, out_dir);
        }
        if (app.got_subcommand(index)) {
            return cmd_index(opts, articles_path, out_dir, force);
        }
        if (app.got_subcommand(run)) {
            return cmd_run(opts, articles_path, conversations_path, out_dir, ablation, index_dir);
        }
        if (app.got_subcommand(eval)) {
            return cmd_eval(opts, trace_path, conversations_path, out_dir);
        }
        if (app.got_subcommand(exp)) {
            return cmd_export_rerank(opts, trace_path, conversations_path, articles_path,
                                     out_file);
        }
        if (app.got_subcommand(stats)) {
            return cmd_stats(articles_path, conversations_path);
        }
    } catch (const CorpusError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}
