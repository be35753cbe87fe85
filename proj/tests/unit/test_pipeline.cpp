#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "../support/mocks.hpp"
#include "../support/toy_fixture.hpp"
#include "legalrag/pipeline.hpp"

using namespace legalrag;
using legalrag::testing::TempDir;
using legalrag::testing::ToyRun;

TEST_CASE("fuse_candidates") {
    const std::vector<ScoredId> dense{{"a", 0.9}, {"b", 0.5}, {"c", 0.1}};
    const std::vector<ScoredId> sparse{{"b", 12.0}, {"d", 8.0}, {"e", 4.0}};
    auto dense_of = [](const std::string& id) { return id == "d" ? 0.3 : 0.0; };

    SUBCASE("alpha=1 ranks purely by dense score over the union") {
        const auto fused = fuse_candidates(dense, sparse, 1.0, 100, dense_of);
        REQUIRE(fused.size() == 5);
        CHECK(fused[0].article_id == "a");
        CHECK(fused[1].article_id == "b");
        CHECK(fused[2].article_id == "d");  // on-demand dense score 0.3
        CHECK(fused[2].dense_score == doctest::Approx(0.3));
        CHECK(fused[3].article_id == "c");
        CHECK(fused[4].article_id == "e");  // 0.0, tie broken after c? e vs c both... c=0.1
        CHECK(fused[4].fused_score == doctest::Approx(0.0));
    }
    SUBCASE("route provenance flags are set") {
        const auto fused = fuse_candidates(dense, sparse, 1.0, 100, dense_of);
        for (const auto& f : fused) {
            if (f.article_id == "b") {
                CHECK(f.from_dense);
                CHECK(f.from_sparse);
                CHECK(f.sparse_score == doctest::Approx(12.0));
                CHECK(f.sparse_norm == doctest::Approx(1.0));
            }
            if (f.article_id == "a") {
                CHECK(f.from_dense);
                CHECK(!f.from_sparse);
                CHECK(!f.sparse_score.has_value());
                CHECK(f.sparse_norm == doctest::Approx(0.0));
            }
            if (f.article_id == "e") {
                CHECK(f.sparse_norm == doctest::Approx(0.0));  // min of the sparse list
            }
        }
    }
    SUBCASE("alpha=0 ranks by normalized sparse alone") {
        const auto fused = fuse_candidates(dense, sparse, 0.0, 100, dense_of);
        CHECK(fused[0].article_id == "b");   // norm 1.0
        CHECK(fused[1].article_id == "d");   // norm 0.5
        // a, c, e all have fused 0; ascending id tie-break.
        CHECK(fused[2].article_id == "a");
        CHECK(fused[3].article_id == "c");
        CHECK(fused[4].article_id == "e");
    }
    SUBCASE("filter_top_n truncates") {
        CHECK(fuse_candidates(dense, sparse, 1.0, 2, dense_of).size() == 2);
    }
    SUBCASE("degenerate sparse range normalizes to 1") {
        const auto fused =
            fuse_candidates({}, {{"x", 3.0}, {"y", 3.0}}, 0.0, 10,
                            [](const std::string&) { return 0.0; });
        CHECK(fused[0].sparse_norm == doctest::Approx(1.0));
        CHECK(fused[1].sparse_norm == doctest::Approx(1.0));
        CHECK(fused[0].article_id == "x");  // tie -> ascending id
    }
    SUBCASE("alpha=1 fusion is invariant under monotone transforms of sparse scores") {
        std::mt19937_64 rng(123);
        std::uniform_real_distribution<double> score(0.0, 10.0);
        for (int round = 0; round < 100; ++round) {
            std::vector<ScoredId> d;
            std::vector<ScoredId> s;
            for (int i = 0; i < 12; ++i) {
                const std::string id = "c" + std::to_string(i);
                if (rng() % 3 != 0) d.push_back({id, score(rng)});
                if (rng() % 2 == 0) s.push_back({id, score(rng)});
            }
            std::sort(s.begin(), s.end(),
                      [](const ScoredId& a, const ScoredId& b) { return a.score > b.score; });
            auto dense_score = [&](const std::string& id) {
                return static_cast<double>(std::hash<std::string>{}(id) % 100) / 100.0;
            };
            const auto base = fuse_candidates(d, s, 1.0, 100, dense_score);

            auto transformed = s;
            for (auto& e : transformed) e.score = std::exp(e.score) * 2.0 + 5.0;  // monotone
            const auto after = fuse_candidates(d, transformed, 1.0, 100, dense_score);

            REQUIRE(base.size() == after.size());
            for (std::size_t i = 0; i < base.size(); ++i) {
                CHECK(base[i].article_id == after[i].article_id);
                CHECK(base[i].fused_score == doctest::Approx(after[i].fused_score));
            }
        }
    }
}

TEST_CASE("toy pipeline: full run produces the hand-verified stage outputs") {
    TempDir cache("pipe-toy");
    ToyRun toy(cache.path());
    const PipelineConfig& config = toy.fixture.config.pipeline;

    const RunTrace trace = run_dataset(config, toy.ctx, toy.fixture.conversations);
    REQUIRE(trace.turns.size() == 2);
    const TurnTrace& t0 = trace.turns[0];
    const TurnTrace& t1 = trace.turns[1];

    SUBCASE("rewrite stage parses the scripted outputs") {
        REQUIRE(t0.rewrite.has_value());
        CHECK(t0.rewritten_query == "健康证过期被罚款后的行政处罚从轻处理");
        CHECK(t0.keywords == std::vector<std::string>{"行政处罚", "罚款", "从轻处罚"});
        CHECK(t1.rewritten_query == "补办健康证后减轻行政处罚的情形");
    }
    SUBCASE("literature filter keeps only the penalty code") {
        REQUIRE(t0.selected_literatures.has_value());
        CHECK(*t0.selected_literatures == std::vector<std::string>{"行政处罚法"});
        REQUIRE(t0.literature_verdicts.has_value());
        CHECK(t0.literature_verdicts->size() == 2);
    }
    SUBCASE("dense ranking matches the hand-computed indicator geometry") {
        // Query axes {行政处罚, 健康证, 从轻}; adm-31 {行政处罚, 从轻},
        // adm-32 {行政处罚, 减轻}, adm-33 {行政处罚}.
        REQUIRE(t0.dense.size() == 3);
        CHECK(t0.dense[0].article_id == "adm-31");
        CHECK(t0.dense[0].score == doctest::Approx(2.0 / std::sqrt(6.0)).epsilon(1e-6));
        CHECK(t0.dense[1].article_id == "adm-33");
        CHECK(t0.dense[1].score == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-6));
        CHECK(t0.dense[2].article_id == "adm-32");
        CHECK(t0.dense[2].score == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-6));

        REQUIRE(t1.dense.size() == 3);
        CHECK(t1.dense[0].article_id == "adm-32");
        CHECK(t1.dense[0].score == doctest::Approx(2.0 / std::sqrt(6.0)).epsilon(1e-6));
    }
    SUBCASE("sparse route runs over the whole corpus") {
        REQUIRE(t0.sparse.has_value());
        CHECK(!t0.sparse->empty());
        // adm articles dominate; ensure scores are descending.
        for (std::size_t i = 1; i < t0.sparse->size(); ++i) {
            CHECK((*t0.sparse)[i - 1].score >= (*t0.sparse)[i].score);
        }
    }
    SUBCASE("fusion at alpha=1: dense candidates keep dense order") {
        std::vector<std::string> fused_dense_only;
        for (const auto& f : t0.fused) {
            if (f.from_dense) fused_dense_only.push_back(f.article_id);
        }
        std::vector<std::string> dense_ids;
        for (const auto& d : t0.dense) dense_ids.push_back(d.article_id);
        CHECK(fused_dense_only == dense_ids);
    }
    SUBCASE("article filter drops adm-33 and the civil articles") {
        REQUIRE(t0.article_verdicts.has_value());
        std::set<std::string> survivors(t0.survivors.begin(), t0.survivors.end());
        CHECK(survivors.contains("adm-31"));
        CHECK(survivors.contains("adm-32"));
        CHECK(!survivors.contains("adm-33"));
        CHECK(!survivors.contains("civ-01"));
        CHECK(!survivors.contains("civ-02"));
        CHECK(!survivors.contains("civ-03"));
    }
    SUBCASE("rerank orders by bigram overlap with the rewritten query") {
        REQUIRE(t0.rerank_scores.has_value());
        REQUIRE(!t0.final_ranking.empty());
        CHECK(t0.final_ranking[0].article_id == "adm-31");
        CHECK(t1.final_ranking[0].article_id == "adm-32");
    }
    SUBCASE("generation returns the scripted responses") {
        CHECK(t0.response ==
              "依据行政处罚法第三十一条，主动消除违法行为危害后果的应当从轻行政处罚，建议尽快补办健"
              "康证。");
        CHECK(t1.response ==
              "依据行政处罚法第三十二条，配合查处的可以减轻行政处罚，您补办健康证并提交体检报告后可"
              "以申请减轻罚款。");
    }
    SUBCASE("provenance closure holds for every turn") {
        for (const auto& t : trace.turns) CHECK_NOTHROW(validate_provenance(t));
    }
    SUBCASE("hyperparameter bounds hold") {
        for (const auto& t : trace.turns) {
            CHECK(t.fused.size() <= config.filter_top_n);
            CHECK(t.final_ranking.size() <= config.final_k);
            if (t.sparse.has_value()) CHECK(t.sparse->size() <= config.k_sparse);
        }
    }
}

TEST_CASE("vanilla toggles: pass-through query, dense-only, no stage records") {
    TempDir cache("pipe-vanilla");
    ToyRun toy(cache.path());
    PipelineConfig config = toy.fixture.config.pipeline;
    config.stages = StageToggles{false, false, false, false, false};

    const RunTrace trace = run_dataset(config, toy.ctx, toy.fixture.conversations);
    for (const auto& t : trace.turns) {
        CHECK(!t.rewrite.has_value());
        CHECK(!t.literature_verdicts.has_value());
        CHECK(!t.selected_literatures.has_value());
        CHECK(!t.sparse.has_value());
        CHECK(!t.article_verdicts.has_value());
        CHECK(!t.rerank_scores.has_value());
        CHECK(t.rewritten_query == t.query);
        CHECK(t.keywords.empty());
        // Dense-only global ranking: survivors equal the fused (dense) list.
        CHECK(t.survivors.size() == t.fused.size());
        CHECK(t.final_ranking.size() <= 5);
        CHECK(!t.response.empty());
    }
    // The serialized turn lines carry no record of the disabled stages (the
    // header's config snapshot still names the toggles).
    const std::string bytes = serialize_run_trace(trace);
    const std::string turn_lines = bytes.substr(bytes.find('\n') + 1);
    CHECK(turn_lines.find("\"rewrite\"") == std::string::npos);
    CHECK(turn_lines.find("literature_verdicts") == std::string::npos);
    CHECK(turn_lines.find("article_verdicts") == std::string::npos);
    CHECK(turn_lines.find("\"rerank\"") == std::string::npos);
    CHECK(turn_lines.find("\"sparse\"") == std::string::npos);
}

TEST_CASE("toggling article_filter off yields a survivor superset per turn") {
    TempDir cache_a("pipe-af-on");
    TempDir cache_b("pipe-af-off");
    ToyRun on(cache_a.path());
    ToyRun off(cache_b.path());
    PipelineConfig config_on = on.fixture.config.pipeline;
    PipelineConfig config_off = config_on;
    config_off.stages.article_filter = false;

    const RunTrace trace_on = run_dataset(config_on, on.ctx, on.fixture.conversations);
    const RunTrace trace_off = run_dataset(config_off, off.ctx, off.fixture.conversations);
    REQUIRE(trace_on.turns.size() == trace_off.turns.size());
    for (std::size_t i = 0; i < trace_on.turns.size(); ++i) {
        std::set<std::string> with_filter(trace_on.turns[i].survivors.begin(),
                                          trace_on.turns[i].survivors.end());
        std::set<std::string> without(trace_off.turns[i].survivors.begin(),
                                      trace_off.turns[i].survivors.end());
        CHECK(std::includes(without.begin(), without.end(), with_filter.begin(),
                            with_filter.end()));
    }
}

TEST_CASE("warm cache rerun produces byte-identical trace") {
    TempDir cache("pipe-warm");
    const std::string first = [&] {
        ToyRun toy(cache.path());
        return serialize_run_trace(
            run_dataset(toy.fixture.config.pipeline, toy.ctx, toy.fixture.conversations));
    }();
    const std::string second = [&] {
        ToyRun toy(cache.path());  // same cache dir: warm
        return serialize_run_trace(
            run_dataset(toy.fixture.config.pipeline, toy.ctx, toy.fixture.conversations));
    }();
    CHECK(first == second);
}

TEST_CASE("run_dataset processes conversations in dataset order, even in parallel") {
    TempDir cache("pipe-par");
    ToyRun toy(cache.path());

    // Four single-turn conversations with distinct queries.
    std::vector<Conversation> convs;
    for (int i = 0; i < 4; ++i) {
        Conversation c;
        c.conversation_id = "conv" + std::to_string(i);
        c.turns.push_back(ConversationTurn{0, "健康证过期被罚款一万元怎么办", "", {}, {}});
        convs.push_back(c);
    }
    PipelineConfig config = toy.fixture.config.pipeline;
    config.stages.rewrite = false;  // patterns only script the fixture queries
    config.max_parallel_conversations = 4;

    const RunTrace trace = run_dataset(config, toy.ctx, convs);
    REQUIRE(trace.turns.size() == 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(trace.turns[i].conversation_id == "conv" + std::to_string(i));
    }
}

TEST_CASE("history isolation: conversation A's trace ignores conversation B") {
    TempDir cache_a("pipe-iso-a");
    TempDir cache_b("pipe-iso-b");

    const auto run_with = [&](const std::filesystem::path& cache,
                              bool include_b) -> std::vector<TurnTrace> {
        ToyRun toy(cache);
        auto convs = toy.fixture.conversations;
        if (include_b) {
            Conversation b;
            b.conversation_id = "b";
            b.turns.push_back(ConversationTurn{0, "健康证过期被罚款一万元怎么办", "", {}, {}});
            convs.insert(convs.begin(), b);
        }
        const RunTrace trace =
            run_dataset(toy.fixture.config.pipeline, toy.ctx, convs);
        std::vector<TurnTrace> out;
        for (const auto& t : trace.turns) {
            if (t.conversation_id == "c1") out.push_back(t);
        }
        return out;
    };

    const auto alone = run_with(cache_a.path(), false);
    const auto with_b = run_with(cache_b.path(), true);
    REQUIRE(alone.size() == with_b.size());
    for (std::size_t i = 0; i < alone.size(); ++i) {
        RunTrace wrap_a{"{}", "d", {}, {alone[i]}};
        RunTrace wrap_b{"{}", "d", {}, {with_b[i]}};
        CHECK(serialize_run_trace(wrap_a) == serialize_run_trace(wrap_b));
    }
}

TEST_CASE("backend failure on one turn is recorded and the run continues") {
    TempDir cache("pipe-fail");
    ToyRun toy(cache.path());
    auto* mock = dynamic_cast<MockChatBackend*>(toy.backends.chat.get());
    REQUIRE(mock != nullptr);
    mock->fail_next(toy.fixture.config.retry.max_attempts);  // kills the first turn's rewrite

    const RunTrace trace =
        run_dataset(toy.fixture.config.pipeline, toy.ctx, toy.fixture.conversations);
    REQUIRE(trace.turns.size() == 2);
    CHECK(trace.turns[0].failed);
    CHECK(!trace.turns[0].error.empty());
    CHECK(!trace.turns[1].failed);
    CHECK(!trace.turns[1].response.empty());
}

TEST_CASE("run_turn keeps completed stages when a later stage fails") {
    TempDir cache("pipe-partial");
    ToyRun toy(cache.path());
    RunContext broken = toy.ctx;
    broken.reranker = nullptr;  // fails at the rerank stage

    const TurnTrace t = run_turn(toy.fixture.config.pipeline, broken, {}, "c1",
                                 toy.fixture.conversations[0].turns[0]);
    CHECK(t.failed);
    CHECK(!t.error.empty());
    CHECK(t.rewrite.has_value());
    CHECK(!t.fused.empty());
    CHECK(!t.survivors.empty());
    CHECK(t.final_ranking.empty());
    CHECK(t.response.empty());
}

TEST_CASE("run_dataset throws only when every turn failed") {
    TempDir cache("pipe-allfail");
    ToyRun toy(cache.path());
    PipelineConfig config = toy.fixture.config.pipeline;
    RunContext broken = toy.ctx;
    broken.sparse_index = nullptr;  // sparse route on -> every turn fails
    CHECK_THROWS_WITH_AS(run_dataset(config, broken, toy.fixture.conversations),
                         doctest::Contains("every turn failed"), std::runtime_error);
}

TEST_CASE("trace serialization round-trips") {
    TempDir cache("pipe-roundtrip");
    ToyRun toy(cache.path());
    const RunTrace trace =
        run_dataset(toy.fixture.config.pipeline, toy.ctx, toy.fixture.conversations);
    const std::string bytes = serialize_run_trace(trace);
    const RunTrace parsed = parse_run_trace(bytes);
    CHECK(serialize_run_trace(parsed) == bytes);
    CHECK(parsed.corpus_digest == trace.corpus_digest);
    CHECK(parsed.turns.size() == trace.turns.size());
    CHECK(parsed.turns[0].rewritten_query == trace.turns[0].rewritten_query);
}
