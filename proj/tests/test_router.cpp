#include <doctest.h>

#include "memforest/mocks.hpp"
#include "memforest/router.hpp"
#include "support/fixtures.hpp"

using namespace memforest;
using namespace memforest::test;

namespace {

CanonicalFact make_fact(FactId id, const std::string& text, std::set<std::string> entities,
                        std::set<std::string> topics = {}) {
    CanonicalFact f;
    f.fact_id = id;
    f.text = text;
    f.anchor = TemporalAnchor::point(ts(2024, 7, 1));
    f.source_refs.insert(SourceRef{"s1", 1, 2});
    f.entities = std::move(entities);
    f.topics = std::move(topics);
    f.canonical_key = canonical_key(text);
    return f;
}

std::vector<DialogueCell> one_cell() {
    DialogueCell c;
    c.cell_id = 1;
    c.session_id = "s1";
    c.first_turn = 1;
    c.last_turn = 2;
    c.text = "user: hello";
    c.anchor = TemporalAnchor::point(ts(2024, 7, 1));
    return {c};
}

}  // namespace

TEST_CASE("route fans out to session cells, entity labels and one scene") {
    Backends b = make_mock_backends();
    IdGen ids;
    SceneState scenes;
    std::set<CellId> routed_cells;

    SUBCASE("single entity gives entity + scene + session records") {
        auto fact = make_fact(1, "Bob moved to Miami.", {"bob"}, {"residence"});
        RouteResult result = route(fact, one_cell(), routed_cells, scenes, *b.embedder, ids);
        REQUIRE(result.records.size() == 3);
        CHECK(result.records[0].scope.family == ScopeFamily::session);
        CHECK(result.records[1].scope == entity_scope("bob"));
        CHECK(result.records[2].scope.family == ScopeFamily::scene);
        CHECK(result.scene.has_value());
    }

    SUBCASE("two entities fan out to two entity records") {
        auto fact = make_fact(1, "Bob moved to Miami.", {"bob", "miami"});
        RouteResult result = route(fact, {}, routed_cells, scenes, *b.embedder, ids);
        std::size_t entity_records = 0;
        for (const auto& r : result.records)
            if (r.scope.family == ScopeFamily::entity) ++entity_records;
        CHECK(entity_records == 2);
    }

    SUBCASE("no entities and no topics still lands in a scene") {
        auto fact = make_fact(1, "it rained all day.", {});
        RouteResult result = route(fact, one_cell(), routed_cells, scenes, *b.embedder, ids);
        std::size_t entity_records = 0, scene_records = 0, session_records = 0;
        for (const auto& r : result.records) {
            if (r.scope.family == ScopeFamily::entity) ++entity_records;
            if (r.scope.family == ScopeFamily::scene) ++scene_records;
            if (r.scope.family == ScopeFamily::session) ++session_records;
        }
        CHECK(entity_records == 0);
        CHECK(scene_records == 1);
        CHECK(session_records == 1);
    }

    SUBCASE("cells are routed once per session, not once per fact") {
        auto f1 = make_fact(1, "Bob moved to Miami.", {"bob"});
        auto f2 = make_fact(2, "Bob bought a house.", {"bob"});
        auto cells = one_cell();
        RouteResult r1 = route(f1, cells, routed_cells, scenes, *b.embedder, ids);
        RouteResult r2 = route(f2, cells, routed_cells, scenes, *b.embedder, ids);
        std::size_t session_records = 0;
        for (const auto& r : r1.records)
            if (r.scope.family == ScopeFamily::session) ++session_records;
        for (const auto& r : r2.records)
            if (r.scope.family == ScopeFamily::session) ++session_records;
        CHECK(session_records == 1);
    }

    SUBCASE("routing performs no extractor or summarizer calls") {
        auto fact = make_fact(1, "Bob moved to Miami.", {"bob"});
        route(fact, one_cell(), routed_cells, scenes, *b.embedder, ids);
        CHECK(b.ledger->calls(PortCallLedger::extractor) == 0);
        CHECK(b.ledger->calls(PortCallLedger::summarizer) == 0);
        CHECK(b.ledger->calls(PortCallLedger::embedder) == 1);
    }

    SUBCASE("embedder failure defers the scene assignment") {
        auto embedder = std::static_pointer_cast<MockEmbedder>(b.embedder);
        embedder->fail_next(1);
        auto fact = make_fact(1, "Bob moved to Miami.", {"bob"});
        RouteResult result = route(fact, {}, routed_cells, scenes, *b.embedder, ids);
        CHECK(result.scene_deferred);
        CHECK_FALSE(result.scene.has_value());
        for (const auto& r : result.records) CHECK(r.scope.family != ScopeFamily::scene);
    }
}

TEST_CASE("scene assignment is greedy threshold clustering") {
    Backends b = make_mock_backends();
    auto embedder = std::static_pointer_cast<MockEmbedder>(b.embedder);
    IdGen ids;
    SceneState scenes;
    scenes.threshold = 0.60;

    std::vector<float> e1(kMockEmbeddingDim, 0.0f);
    e1[0] = 1.0f;
    std::vector<float> e2(kMockEmbeddingDim, 0.0f);
    e2[1] = 1.0f;

    SUBCASE("first fact seeds a cluster with its unit embedding") {
        embedder->set_override("seed text", e1);
        ClusterId c = scenes.assign(1, embedder->embed("seed text"), {"residence"}, ids);
        CHECK(c == 1);
        CHECK(scenes.cluster(c).centroid == e1);
        CHECK(scenes.cluster(c).label == "residence");
    }

    SUBCASE("identical embedding joins the existing cluster") {
        scenes.assign(1, e1, {}, ids);
        ClusterId c = scenes.assign(2, e1, {}, ids);
        CHECK(c == 1);
        CHECK(scenes.cluster(1).members.size() == 2);
    }

    SUBCASE("cosine just below the threshold seeds a new cluster") {
        scenes.assign(1, e1, {}, ids);
        double eps = 0.01;
        double target = scenes.threshold - eps;
        // Unit vector at a chosen angle from e1.
        std::vector<float> near(kMockEmbeddingDim, 0.0f);
        near[0] = static_cast<float>(target);
        near[1] = static_cast<float>(std::sqrt(1.0 - target * target));
        ClusterId c = scenes.assign(2, near, {}, ids);
        CHECK(c == 2);
    }

    SUBCASE("cosine just above the threshold joins the existing cluster") {
        scenes.assign(1, e1, {}, ids);
        double target = scenes.threshold + 0.01;
        std::vector<float> close(kMockEmbeddingDim, 0.0f);
        close[0] = static_cast<float>(target);
        close[1] = static_cast<float>(std::sqrt(1.0 - target * target));
        ClusterId joined = scenes.assign(2, close, {}, ids);
        CHECK(joined == 1);
        CHECK(scenes.cluster(1).members.size() == 2);
    }

    SUBCASE("centroid equals the renormalized member mean after any sequence") {
        std::mt19937 rng(5);
        for (FactId f = 1; f <= 40; ++f) {
            std::vector<float> v(kMockEmbeddingDim);
            for (float& x : v) x = static_cast<float>(rng() % 1000) / 1000.0f - 0.5f;
            float norm = 0.0f;
            for (float x : v) norm += x * x;
            for (float& x : v) x /= std::sqrt(norm);
            scenes.assign(f, v, {}, ids);
        }
        for (const auto& [cid, cluster] : scenes.clusters()) {
            std::vector<double> sum(kMockEmbeddingDim, 0.0);
            for (FactId f : cluster.members) {
                const auto& v = scenes.member_vectors.at(f);
                for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
            }
            double norm = 0.0;
            for (double x : sum) norm += x * x;
            norm = std::sqrt(norm);
            for (std::size_t i = 0; i < sum.size(); ++i)
                CHECK(std::abs(sum[i] / norm - cluster.centroid[i]) < 1e-5);
        }
    }

    SUBCASE("removing members recomputes or drops the cluster") {
        scenes.assign(1, e1, {}, ids);
        scenes.assign(2, e2, {"travel"}, ids);
        REQUIRE(scenes.clusters().size() == 2);
        CHECK_FALSE(scenes.remove_member(1, 99));  // unknown member is a no-op
        CHECK(scenes.remove_member(1, 1));         // cluster emptied and dropped
        CHECK(scenes.clusters().size() == 1);
    }
}

TEST_CASE("entity normalization is case-fold plus trim") {
    CHECK(normalize_entity("  Bob ") == "bob");
    CHECK(normalize_entity("MIAMI") == "miami");
    CHECK(normalize_entity("") == "");
}
