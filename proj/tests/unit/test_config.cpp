#include <doctest.h>

#include <algorithm>
#include <set>

#include "../support/toy_fixture.hpp"
#include "legalrag/config.hpp"

using namespace legalrag;

TEST_CASE("ablation presets form a monotone ladder") {
    auto active_set = [](const StageToggles& t) {
        std::set<std::string> s;
        if (t.rewrite) s.insert("rewrite");
        if (t.literature_filter) s.insert("literature_filter");
        if (t.sparse_route) s.insert("sparse_route");
        if (t.article_filter) s.insert("article_filter");
        if (t.rerank) s.insert("rerank");
        return s;
    };

    const auto& ladder = ablation_ladder();
    REQUIRE(ladder.size() == 5);
    std::set<std::string> prev;
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        const auto current = active_set(ablation_toggles(ladder[i].second));
        if (i > 0) CHECK(current.size() > prev.size());
        CHECK(std::includes(current.begin(), current.end(), prev.begin(), prev.end()));
        prev = current;
    }

    CHECK(active_set(ablation_toggles(AblationPreset::Vanilla)).empty());
    CHECK(active_set(ablation_toggles(AblationPreset::PlusRewrite)) ==
          std::set<std::string>{"rewrite"});
    CHECK(active_set(ablation_toggles(AblationPreset::PlusRerank)) ==
          std::set<std::string>{"rewrite", "rerank"});
    CHECK(active_set(ablation_toggles(AblationPreset::PlusMultiroute)) ==
          std::set<std::string>{"rewrite", "rerank", "sparse_route"});
    CHECK(active_set(ablation_toggles(AblationPreset::PlusFiltering)) ==
          std::set<std::string>{"rewrite", "rerank", "sparse_route", "literature_filter",
                                "article_filter"});
}

TEST_CASE("parse_ablation") {
    CHECK(parse_ablation("vanilla") == AblationPreset::Vanilla);
    CHECK(parse_ablation("+filtering") == AblationPreset::PlusFiltering);
    CHECK(!parse_ablation("bogus").has_value());
}

TEST_CASE("config file controls pipeline knobs and backend kinds") {
    const AppConfig config = legalrag::testing::load_toy_fixture().config;
    CHECK(config.pipeline.k_dense_per_literature == 50);
    CHECK(config.pipeline.k_sparse == 1000);
    CHECK(config.pipeline.alpha == doctest::Approx(1.0));
    CHECK(config.pipeline.filter_top_n == 500);
    CHECK(config.pipeline.final_k == 5);
    CHECK(config.chat_backend.kind == "mock");
    CHECK(config.embedding_backend.kind == "indicator");
    CHECK(config.embedding_backend.markers.size() == 6);
    CHECK(config.rerank_backend.kind == "bigram");
    CHECK(config.retry.max_attempts == 2);
}

TEST_CASE("defaults hold when sections are missing") {
    const AppConfig config = AppConfig::from_json_text("{}", "/tmp");
    CHECK(config.pipeline.k_dense_per_literature == 50);
    CHECK(config.pipeline.k_sparse == 1000);
    CHECK(config.pipeline.alpha == doctest::Approx(1.0));
    CHECK(config.pipeline.filter_top_n == 500);
    CHECK(config.pipeline.final_k == 5);
    CHECK(config.pipeline.stages == StageToggles{});
    CHECK(config.pipeline.article_filter_yes_means_keep);
    CHECK(!config.pipeline.literature_filter_applies_to_sparse);
    CHECK(config.pipeline.bm25.k1 == doctest::Approx(1.2));
    CHECK(config.pipeline.bm25.b == doctest::Approx(0.75));
}

TEST_CASE("invalid configs are rejected") {
    CHECK_THROWS(AppConfig::from_json_text(R"({"retrieval":{"alpha":1.5}})", "/tmp"));
    CHECK_THROWS(AppConfig::from_json_text(R"({"retrieval":{"final_k":0}})", "/tmp"));
    CHECK_THROWS(AppConfig::from_json_text(R"({"analyzer":{"mode":"wat"}})", "/tmp"));
    CHECK_THROWS(AppConfig::from_json_text("not json", "/tmp"));
}

TEST_CASE("canonical snapshot is order-stable") {
    const AppConfig config = legalrag::testing::load_toy_fixture().config;
    CHECK(config.pipeline.canonical_json() == config.pipeline.canonical_json());
    PipelineConfig changed = config.pipeline;
    changed.alpha = 0.5;
    CHECK(changed.canonical_json() != config.pipeline.canonical_json());
}
