#include <doctest.h>

#include <random>

#include "memforest/memtree.hpp"
#include "memforest/mocks.hpp"
#include "support/fixtures.hpp"

using namespace memforest;
using namespace memforest::test;

namespace {

// Store-free harness around one tree: payload texts live in a local map.
struct TreeHarness {
    IdGen ids;
    PlacementMap placement;
    MemTree tree;
    std::map<std::uint64_t, std::string> texts;
    Backends backends = make_mock_backends();
    FlushHooks hooks;

    explicit TreeHarness(ScopeFamily family = ScopeFamily::entity, int k = 8) {
        tree.id = ids.next_tree++;
        tree.scope = ScopeId{family, family == ScopeFamily::entity ? "subject" : "scope"};
        tree.k = k;
        hooks.payload_text = [this](const PayloadRef& p) { return texts.at(p.id); };
    }

    NodeId insert(Instant t, const std::string& text = "") {
        RoutedRecord r;
        r.scope = tree.scope;
        std::uint64_t id = ids.next_fact++;
        texts[id] = text.empty() ? "event " + std::to_string(id) + "." : text;
        r.payload = tree.scope.family == ScopeFamily::session ? PayloadRef::cell(id)
                                                              : PayloadRef::fact(id);
        r.anchor = TemporalAnchor::point(t);
        return tree.insert_leaf(r, ids, placement);
    }

    FlushStats flush(int parallelism = 1) {
        if (tree.needs_rebuild()) tree.rebuild(ids);
        return flush_trees({&tree}, *backends.summarizer, *backends.embedder, hooks, parallelism);
    }

    std::vector<Instant> leaf_starts() const {
        std::vector<Instant> out;
        for (NodeId leaf : tree.leaves_in_order()) out.push_back(tree.node(leaf).interval.start);
        return out;
    }
};

constexpr Instant kBase = 1700000000;

}  // namespace

TEST_CASE("insert into an empty tree makes the leaf the root") {
    TreeHarness h;
    NodeId leaf = h.insert(kBase);
    CHECK(h.tree.root == leaf);
    CHECK(h.tree.leaf_count == 1);
    CHECK(h.tree.height() == 1);
    CHECK(h.placement.lookup(PayloadRef::fact(1)).size() == 1);
}

TEST_CASE("k=2 time-ordered inserts stay ordered and within the height bound") {
    TreeHarness h(ScopeFamily::entity, 2);
    for (int i = 0; i < 4; ++i) h.insert(kBase + i * 60);
    CHECK(h.tree.height() <= 3);
    auto starts = h.leaf_starts();
    CHECK(std::is_sorted(starts.begin(), starts.end()));
    h.tree.check_invariants();
}

TEST_CASE("a fact arriving later in time lands after the earlier leaf") {
    TreeHarness h;
    h.insert(ts(2023, 5, 20), "Bob moved from Boston to Davis in May 2023.");
    h.insert(ts(2024, 7, 1), "Bob moved from Davis to Miami in July 2024.");
    auto leaves = h.tree.leaves_in_order();
    REQUIRE(leaves.size() == 2);
    CHECK(h.texts.at(h.tree.node(leaves[0]).payload.id).find("Boston to Davis") !=
          std::string::npos);
    CHECK(h.texts.at(h.tree.node(leaves[1]).payload.id).find("Davis to Miami") !=
          std::string::npos);
}

TEST_CASE("mark_dirty_ancestors coalesces repeated marks") {
    TreeHarness h;
    NodeId a = h.insert(kBase);
    NodeId b = h.insert(kBase + 60);
    // Both leaves share one parent; it appears once in the dirty set.
    const TreeNode& leaf_a = h.tree.node(a);
    REQUIRE(leaf_a.parent != 0);
    CHECK(h.tree.dirty_set.count(leaf_a.parent) == 1);
    std::size_t set_size = h.tree.dirty_set.size();
    CHECK(set_size == 3);  // two leaves + shared parent

    CHECK(h.tree.mark_dirty_ancestors(a) == 0);  // already dirty path
    CHECK(h.tree.dirty_set.size() == set_size);

    h.flush();
    CHECK(h.tree.dirty_set.empty());
    NodeId c = h.insert(kBase + 120);
    // Path length bounds the newly marked count.
    CHECK(h.tree.dirty_set.size() <= static_cast<std::size_t>(h.tree.height()) + 1);
    CHECK(h.tree.dirty_set.count(c) == 1);
    CHECK(b != 0);
}

TEST_CASE("flush of an entity tree with M leaves under one parent makes one call") {
    TreeHarness h;
    for (int i = 0; i < 4; ++i) h.insert(kBase + i * 60);
    FlushStats stats = h.flush();
    CHECK(stats.summarizer_calls == 1);  // leaves are passthrough, parent summarizes
    CHECK(stats.passthrough_refreshes == 4);
    CHECK(stats.nodes_refreshed == 5);
    CHECK(stats.max_dependency_depth == 1);
    CHECK(h.backends.ledger->calls(PortCallLedger::summarizer) == 1);
}

TEST_CASE("session-tree leaves summarize their cell text") {
    TreeHarness h(ScopeFamily::session, 8);
    for (int i = 0; i < 3; ++i) h.insert(kBase + i * 60);
    FlushStats stats = h.flush();
    CHECK(stats.summarizer_calls == 4);  // 3 cell leaves + 1 parent
    CHECK(stats.passthrough_refreshes == 0);
}

TEST_CASE("flush with zero dirty nodes is a no-op") {
    TreeHarness h;
    h.insert(kBase);
    h.flush();
    auto before = h.backends.ledger->snapshot(PortCallLedger::summarizer);
    FlushStats stats = h.flush();
    CHECK(stats.nodes_refreshed == 0);
    CHECK(stats.summarizer_calls == 0);
    CHECK(stats.embedder_calls == 0);
    CHECK(stats.max_dependency_depth == 0);
    CHECK(h.backends.ledger->snapshot(PortCallLedger::summarizer).calls == before.calls);
}

TEST_CASE("lazy batch flush never beats eager per-insert flushing on calls") {
    for (std::size_t m : {4u, 16u, 48u}) {
        TreeHarness eager;
        for (std::size_t i = 0; i < m; ++i) {
            eager.insert(kBase + static_cast<Instant>(i) * 60);
            eager.flush();
        }
        TreeHarness lazy;
        for (std::size_t i = 0; i < m; ++i) lazy.insert(kBase + static_cast<Instant>(i) * 60);
        lazy.flush();

        auto eager_calls = eager.backends.ledger->calls(PortCallLedger::summarizer);
        auto lazy_calls = lazy.backends.ledger->calls(PortCallLedger::summarizer);
        CHECK(lazy_calls < eager_calls);  // shared ancestors coalesce
        // Identical content either way.
        CHECK(eager.tree.leaves_in_order().size() == lazy.tree.leaves_in_order().size());
    }
}

TEST_CASE("dependency depth stays within the path bound") {
    SUBCASE("single insert into a height-3 tree") {
        TreeHarness h(ScopeFamily::entity, 2);
        for (int i = 0; i < 4; ++i) h.insert(kBase + i * 60);
        h.flush();
        REQUIRE(h.tree.height() == 3);
        h.insert(kBase + 1000);
        FlushStats stats = h.flush();
        CHECK(dependency_depth(stats) <= 3);
    }
    SUBCASE("k=4 tree of 64 leaves: one insert has depth <= ceil(log4 64) = 3") {
        TreeHarness h(ScopeFamily::entity, 4);
        for (int i = 0; i < 63; ++i) h.insert(kBase + i * 60);
        h.flush();
        h.insert(kBase + 63 * 60);
        FlushStats stats = h.flush();
        CHECK(dependency_depth(stats) <= 3);
        CHECK(stats.summarizer_calls <= static_cast<std::size_t>(h.tree.height()));
    }
    SUBCASE("a batch touching many paths grows work, not depth") {
        TreeHarness many(ScopeFamily::entity, 8);
        for (int i = 0; i < 64; ++i) many.insert(kBase + i * 60);
        many.flush();
        for (int i = 0; i < 10; ++i) many.insert(kBase + (65 + i) * 60);
        FlushStats stats = many.flush();
        // Work grows with the batch; the dependent chain stays a tree path.
        CHECK(stats.summarizer_calls > 1);
        CHECK(dependency_depth(stats) <= static_cast<std::size_t>(many.tree.height()) - 1);
        CHECK(dependency_depth(stats) <=
              static_cast<std::size_t>(MemTree::height_bound(8, many.tree.leaf_count)) - 1);
    }
}

TEST_CASE("apply_updates groups by scope, sorts by time and flushes once") {
    MemoryStore store;
    Backends backends = make_mock_backends();

    SUBCASE("records for two scopes touch both trees") {
        auto r1 = seed_scope_facts(store, "alpha", 3, kBase);
        auto r2 = seed_scope_facts(store, "beta", 2, kBase);
        std::vector<RoutedRecord> all = r1;
        all.insert(all.end(), r2.begin(), r2.end());
        FlushStats stats = store.apply_updates(all, backends);
        CHECK(stats.trees_touched == 2);
        CHECK(store.trees.size() == 2);
    }

    SUBCASE("out-of-order anchors still produce temporally ordered leaves") {
        auto records = seed_scope_facts(store, "gamma", 8, kBase);
        std::reverse(records.begin(), records.end());
        store.apply_updates(records, backends);
        const MemTree& tree = store.trees.begin()->second;
        auto leaves = tree.leaves_in_order();
        Instant prev = 0;
        for (NodeId leaf : leaves) {
            CHECK(tree.node(leaf).interval.start >= prev);
            prev = tree.node(leaf).interval.start;
        }
        tree.check_invariants();
    }
}

TEST_CASE("flush output is identical for parallelism 1 and 16") {
    auto build = [](int parallelism) {
        MemoryStore store;
        store.config.flush_parallelism = parallelism;
        Backends backends = make_mock_backends();
        std::mt19937 rng(7);
        std::vector<RoutedRecord> records;
        for (const std::string& scope : {"a", "b", "c"}) {
            auto part = seed_scope_facts(store, scope, 40 + rng() % 20, kBase);
            records.insert(records.end(), part.begin(), part.end());
        }
        store.apply_updates(records, backends);
        return store;
    };
    MemoryStore serial = build(1);
    MemoryStore wide = build(16);
    REQUIRE(serial.trees.size() == wide.trees.size());
    auto wit = wide.trees.begin();
    for (auto sit = serial.trees.begin(); sit != serial.trees.end(); ++sit, ++wit) {
        REQUIRE(sit->second.nodes.size() == wit->second.nodes.size());
        auto wn = wit->second.nodes.begin();
        for (auto sn = sit->second.nodes.begin(); sn != sit->second.nodes.end(); ++sn, ++wn) {
            CHECK(sn->second.summary == wn->second.summary);
            CHECK(sn->second.embedding == wn->second.embedding);
        }
    }
}

TEST_CASE("summarizer failure leaves the node dirty and the next flush recovers") {
    TreeHarness h(ScopeFamily::session, 8);  // session leaves need real calls
    h.insert(kBase);
    h.insert(kBase + 60);
    auto summarizer = std::static_pointer_cast<MockSummarizer>(h.backends.summarizer);
    summarizer->fail_next(1);
    FlushStats stats = h.flush();
    CHECK_FALSE(stats.complete());
    CHECK_FALSE(h.tree.dirty_set.empty());

    FlushStats retry = h.flush();
    CHECK(retry.complete());
    CHECK(h.tree.dirty_set.empty());
    for (const auto& [nid, n] : h.tree.nodes) {
        CHECK(n.summary.has_value());
        CHECK(n.embedding.has_value());
    }
}

TEST_CASE("refresh locality: untouched subtree summaries stay byte-identical") {
    TreeHarness h;
    for (int i = 0; i < 32; ++i) h.insert(kBase + i * 3600);
    h.flush();
    std::map<NodeId, std::string> before;
    for (const auto& [nid, n] : h.tree.nodes) before[nid] = *n.summary;

    NodeId leaf = h.insert(kBase + 32 * 3600);
    std::set<NodeId> path;
    for (NodeId cur = leaf; cur != 0; cur = h.tree.node(cur).parent) path.insert(cur);
    h.flush();

    for (const auto& [nid, summary] : before) {
        if (!h.tree.nodes.count(nid)) continue;  // restructured away
        if (path.count(nid)) continue;
        CHECK(*h.tree.node(nid).summary == summary);
    }
}

TEST_CASE("random insert sequences keep every structural invariant") {
    std::mt19937 rng(2024);
    for (int trial = 0; trial < 30; ++trial) {
        int k = std::vector<int>{2, 4, 8, 16}[rng() % 4];
        TreeHarness h(ScopeFamily::entity, k);
        int n = 1 + static_cast<int>(rng() % 200);
        for (int i = 0; i < n; ++i) {
            h.insert(kBase + static_cast<Instant>(rng() % 100000));
            if (i % 37 == 36) h.flush();
        }
        h.flush();
        h.tree.check_invariants();
        CHECK(h.tree.within_balance_bound());
    }
}

TEST_CASE("remove_leaves prunes, collapses and keeps invariants") {
    TreeHarness h(ScopeFamily::entity, 4);
    std::vector<NodeId> leaves;
    for (int i = 0; i < 20; ++i) leaves.push_back(h.insert(kBase + i * 60));
    h.flush();

    std::set<NodeId> victims(leaves.begin() + 10, leaves.end());
    auto removal = h.tree.remove_leaves(victims, h.placement);
    CHECK(removal.leaves_removed == 10);
    CHECK_FALSE(removal.tree_empty);
    CHECK(h.tree.leaf_count == 10);
    if (h.tree.needs_rebuild()) h.tree.rebuild(h.ids);
    h.flush();
    h.tree.check_invariants();

    std::set<NodeId> rest(leaves.begin(), leaves.begin() + 10);
    auto final_removal = h.tree.remove_leaves(rest, h.placement);
    CHECK(final_removal.tree_empty);
    CHECK(h.placement.empty());
}

TEST_CASE("height bound helper matches its definition") {
    CHECK(MemTree::height_bound(8, 0) == 1);
    CHECK(MemTree::height_bound(8, 1) == 1);
    CHECK(MemTree::height_bound(8, 2) == 2);
    CHECK(MemTree::height_bound(8, 8) == 2);
    CHECK(MemTree::height_bound(8, 9) == 3);
    CHECK(MemTree::height_bound(8, 64) == 3);
    CHECK(MemTree::height_bound(8, 65) == 4);
    CHECK(MemTree::height_bound(2, 4096) == 13);
    CHECK(MemTree::height_bound(4, 64) == 4);
}
