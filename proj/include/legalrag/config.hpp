#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "legalrag/backends.hpp"
#include "legalrag/pipeline.hpp"

namespace legalrag {

struct BackendSpec {
    std::string kind;  // chat: mock|http; embedding: hash|indicator|http; rerank: bigram|http
    // mock chat
    std::filesystem::path rules_file;  // JSONL {"pattern":..,"response":..}
    std::string default_response = "No";
    // http
    HttpEndpoint endpoint;
    std::string model_id;
    // hash embedding
    std::size_t dimension = 8;
    // indicator embedding
    std::vector<std::string> markers;
};

/// The single static config file (JSON). Relative paths resolve against the
/// config file's directory. Flags override after loading.
struct AppConfig {
    PipelineConfig pipeline;

    BackendSpec chat_backend{.kind = "mock"};
    BackendSpec embedding_backend{.kind = "hash"};
    BackendSpec rerank_backend{.kind = "bigram"};

    std::filesystem::path cache_dir = ".legalrag-cache";
    int max_concurrent_requests = 4;
    RetryPolicy retry;

    std::map<std::string, std::filesystem::path> prompt_files;  // stage -> template file

    static AppConfig load(const std::filesystem::path& path);
    static AppConfig from_json_text(const std::string& text,
                                    const std::filesystem::path& base_dir);
};

/// Table-3 ablation ladder; each preset adds one stage to the previous one.
enum class AblationPreset { Vanilla, PlusRewrite, PlusRerank, PlusMultiroute, PlusFiltering };

std::optional<AblationPreset> parse_ablation(const std::string& name);
StageToggles ablation_toggles(AblationPreset preset);
const std::vector<std::pair<std::string, AblationPreset>>& ablation_ladder();

struct BuiltBackends {
    std::shared_ptr<ChatBackend> chat;
    std::shared_ptr<EmbeddingBackend> embedding;
    std::shared_ptr<CachedEmbeddingBackend> cached_embedding;
    std::shared_ptr<RerankBackend> reranker;
    std::shared_ptr<KvCache> chat_cache;
    std::shared_ptr<KvCache> embed_cache;
    std::shared_ptr<KvCache> rerank_cache;
    std::shared_ptr<LlmGateway> gateway;
};

/// Instantiate backends + caches per config. cache_dir_override replaces the
/// config's cache_dir when set (the --cache-dir flag).
BuiltBackends build_backends(const AppConfig& config,
                             const std::optional<std::filesystem::path>& cache_dir_override = {});

/// Stage templates from the configured files; stages without a file use the
/// built-in defaults.
StageTemplates load_stage_templates(const AppConfig& config);

}  // namespace legalrag
