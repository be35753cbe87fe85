#include "legalrag/config.hpp"

#include <json.hpp>

#include <sstream>

#include "legalrag/util.hpp"

namespace legalrag {

using json = nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::filesystem::path& p) {
    if (p.empty() || p.is_absolute()) return p;
    return base / p;
}

StageModel stage_model(const json& models, const char* key, const std::string& fallback) {
    StageModel m;
    m.model_id = models.value(key, fallback);
    return m;
}

BackendSpec parse_backend(const json& j, const std::filesystem::path& base_dir,
                          const std::string& fallback_kind) {
    BackendSpec spec;
    spec.kind = j.value("kind", fallback_kind);
    spec.rules_file = resolve(base_dir, j.value("rules_file", std::string{}));
    spec.default_response = j.value("default_response", spec.default_response);
    spec.model_id = j.value("model", std::string{});
    spec.dimension = j.value("dimension", spec.dimension);
    spec.markers = j.value("markers", spec.markers);
    if (j.contains("endpoint")) {
        const auto& e = j["endpoint"];
        spec.endpoint.base_url = e.value("base_url", std::string{});
        spec.endpoint.path = e.value("path", std::string{});
        spec.endpoint.api_key_env = e.value("api_key_env", std::string{});
        spec.endpoint.auth_header = e.value("auth_header", spec.endpoint.auth_header);
        spec.endpoint.auth_prefix = e.value("auth_prefix", spec.endpoint.auth_prefix);
        spec.endpoint.timeout_seconds = e.value("timeout_seconds", spec.endpoint.timeout_seconds);
    }
    return spec;
}

}  // namespace

AppConfig AppConfig::from_json_text(const std::string& text,
                                    const std::filesystem::path& base_dir) {
    json j = json::parse(text);
    AppConfig config;
    PipelineConfig& p = config.pipeline;

    if (j.contains("retrieval")) {
        const auto& r = j["retrieval"];
        p.k_dense_per_literature = r.value("k_dense_per_literature", p.k_dense_per_literature);
        p.k_sparse = r.value("k_sparse", p.k_sparse);
        p.alpha = r.value("alpha", p.alpha);
        p.filter_top_n = r.value("filter_top_n", p.filter_top_n);
        p.final_k = r.value("final_k", p.final_k);
    }
    if (j.contains("stages")) {
        const auto& s = j["stages"];
        p.stages.rewrite = s.value("rewrite", p.stages.rewrite);
        p.stages.literature_filter = s.value("literature_filter", p.stages.literature_filter);
        p.stages.sparse_route = s.value("sparse_route", p.stages.sparse_route);
        p.stages.article_filter = s.value("article_filter", p.stages.article_filter);
        p.stages.rerank = s.value("rerank", p.stages.rerank);
    }
    p.article_filter_yes_means_keep =
        j.value("article_filter_yes_means_keep", p.article_filter_yes_means_keep);
    p.literature_filter_applies_to_sparse =
        j.value("literature_filter_applies_to_sparse", p.literature_filter_applies_to_sparse);
    if (j.contains("analyzer")) {
        const auto& a = j["analyzer"];
        const std::string mode = a.value("mode", std::string{"cjk_bigram"});
        if (mode == "cjk_bigram") {
            p.analyzer.mode = TokenizerMode::CjkBigram;
        } else if (mode == "whitespace") {
            p.analyzer.mode = TokenizerMode::Whitespace;
        } else {
            throw std::runtime_error("config: unknown analyzer mode '" + mode + "'");
        }
        p.analyzer.lowercase = a.value("lowercase", p.analyzer.lowercase);
        p.analyzer.strip_punctuation = a.value("strip_punctuation", p.analyzer.strip_punctuation);
    }
    if (j.contains("bm25")) {
        p.bm25.k1 = j["bm25"].value("k1", p.bm25.k1);
        p.bm25.b = j["bm25"].value("b", p.bm25.b);
    }
    if (j.contains("models")) {
        const auto& m = j["models"];
        p.rewrite_model = stage_model(m, "rewrite", p.rewrite_model.model_id);
        p.literature_model = stage_model(m, "literature_filter", p.literature_model.model_id);
        p.article_model = stage_model(m, "article_filter", p.article_model.model_id);
        p.generate_model = stage_model(m, "generate", p.generate_model.model_id);
        p.embedding_model_id = m.value("embedding", p.embedding_model_id);
        p.rerank_model_id = m.value("rerank", p.rerank_model_id);
    }
    p.export_seed = j.value("export_seed", p.export_seed);
    p.max_parallel_conversations =
        j.value("max_parallel_conversations", p.max_parallel_conversations);

    if (j.contains("backends")) {
        const auto& b = j["backends"];
        if (b.contains("chat")) config.chat_backend = parse_backend(b["chat"], base_dir, "mock");
        if (b.contains("embedding")) {
            config.embedding_backend = parse_backend(b["embedding"], base_dir, "hash");
        }
        if (b.contains("rerank")) {
            config.rerank_backend = parse_backend(b["rerank"], base_dir, "bigram");
        }
    }
    config.cache_dir = resolve(base_dir, j.value("cache_dir", config.cache_dir.string()));
    config.max_concurrent_requests =
        j.value("max_concurrent_requests", config.max_concurrent_requests);
    if (j.contains("retries")) {
        config.retry.max_attempts = j["retries"].value("max_attempts", config.retry.max_attempts);
        config.retry.backoff_ms = j["retries"].value("backoff_ms", config.retry.backoff_ms);
    }
    if (j.contains("prompts")) {
        for (const auto& [stage, path] : j["prompts"].items()) {
            config.prompt_files[stage] = resolve(base_dir, path.get<std::string>());
        }
    }
    config.pipeline.validate();
    return config;
}

AppConfig AppConfig::load(const std::filesystem::path& path) {
    return from_json_text(read_file(path), path.parent_path());
}

std::optional<AblationPreset> parse_ablation(const std::string& name) {
    for (const auto& [n, preset] : ablation_ladder()) {
        if (n == name) return preset;
    }
    return std::nullopt;
}

const std::vector<std::pair<std::string, AblationPreset>>& ablation_ladder() {
    static const std::vector<std::pair<std::string, AblationPreset>> ladder = {
        {"vanilla", AblationPreset::Vanilla},
        {"+rewrite", AblationPreset::PlusRewrite},
        {"+rerank", AblationPreset::PlusRerank},
        {"+multiroute", AblationPreset::PlusMultiroute},
        {"+filtering", AblationPreset::PlusFiltering},
    };
    return ladder;
}

StageToggles ablation_toggles(AblationPreset preset) {
    StageToggles t{false, false, false, false, false};
    switch (preset) {
        case AblationPreset::PlusFiltering:
            t.literature_filter = true;
            t.article_filter = true;
            [[fallthrough]];
        case AblationPreset::PlusMultiroute:
            t.sparse_route = true;
            [[fallthrough]];
        case AblationPreset::PlusRerank:
            t.rerank = true;
            [[fallthrough]];
        case AblationPreset::PlusRewrite:
            t.rewrite = true;
            [[fallthrough]];
        case AblationPreset::Vanilla:
            break;
    }
    return t;
}

namespace {

std::vector<MockChatBackend::Rule> load_mock_rules(const std::filesystem::path& path) {
    std::vector<MockChatBackend::Rule> rules;
    if (path.empty()) return rules;
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line);
        rules.push_back(MockChatBackend::Rule{j.at("pattern").get<std::string>(),
                                              j.at("response").get<std::string>()});
    }
    return rules;
}

}  // namespace

BuiltBackends build_backends(const AppConfig& config,
                             const std::optional<std::filesystem::path>& cache_dir_override) {
    BuiltBackends built;
    const std::filesystem::path cache_root = cache_dir_override.value_or(config.cache_dir);
    built.chat_cache = std::make_shared<KvCache>(cache_root / "chat");
    built.embed_cache = std::make_shared<KvCache>(cache_root / "embed");
    built.rerank_cache = std::make_shared<KvCache>(cache_root / "rerank");

    const auto& cb = config.chat_backend;
    if (cb.kind == "mock") {
        built.chat = std::make_shared<MockChatBackend>(load_mock_rules(cb.rules_file),
                                                       cb.default_response);
    } else if (cb.kind == "http") {
        built.chat = std::make_shared<HttpChatBackend>(cb.endpoint);
    } else {
        throw std::runtime_error("config: unknown chat backend kind '" + cb.kind + "'");
    }

    const auto& eb = config.embedding_backend;
    if (eb.kind == "hash") {
        built.embedding = std::make_shared<HashEmbeddingBackend>(eb.dimension);
    } else if (eb.kind == "indicator") {
        built.embedding = std::make_shared<IndicatorEmbeddingBackend>(eb.markers);
    } else if (eb.kind == "http") {
        built.embedding = std::make_shared<HttpEmbeddingBackend>(
            eb.endpoint, eb.model_id.empty() ? config.pipeline.embedding_model_id : eb.model_id);
    } else {
        throw std::runtime_error("config: unknown embedding backend kind '" + eb.kind + "'");
    }
    built.cached_embedding = std::make_shared<CachedEmbeddingBackend>(
        built.embedding, built.embed_cache, config.retry);

    const auto& rb = config.rerank_backend;
    if (rb.kind == "bigram") {
        built.reranker = std::make_shared<BigramOverlapReranker>(config.pipeline.analyzer);
    } else if (rb.kind == "http") {
        built.reranker = std::make_shared<HttpRerankBackend>(
            rb.endpoint, rb.model_id.empty() ? config.pipeline.rerank_model_id : rb.model_id);
    } else {
        throw std::runtime_error("config: unknown rerank backend kind '" + rb.kind + "'");
    }

    built.gateway = std::make_shared<LlmGateway>(built.chat, built.chat_cache, config.retry,
                                                 config.max_concurrent_requests);
    return built;
}

StageTemplates load_stage_templates(const AppConfig& config) {
    StageTemplates templates = default_templates();
    auto load_if = [&](const char* key, Stage stage, PromptTemplate& slot) {
        auto it = config.prompt_files.find(key);
        if (it != config.prompt_files.end() && !it->second.empty()) {
            slot = PromptTemplate::load(stage, it->second);
        }
    };
    load_if("rewrite", Stage::Rewrite, templates.rewrite);
    load_if("literature_filter", Stage::LiteratureFilter, templates.literature_filter);
    load_if("article_filter", Stage::ArticleFilter, templates.article_filter);
    load_if("generate", Stage::Generate, templates.generate);
    return templates;
}

}  // namespace legalrag
