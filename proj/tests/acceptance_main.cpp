// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Everything runs on the
// deterministic mock backends; no network anywhere.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "memforest/backends_factory.hpp"
#include "memforest/bench.hpp"
#include "memforest/ingest.hpp"
#include "memforest/lifecycle.hpp"
#include "memforest/retrieval.hpp"
#include "memforest/snapshot.hpp"
#include "support/fixtures.hpp"

using namespace memforest;
using namespace memforest::test;
namespace fs = std::filesystem;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw CheckFailure(what);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- C1
std::string c1_tree_invariants() {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937 rng(20240817);
    const int kVariants[] = {2, 4, 8, 16};
    std::size_t sequences = 0, ops = 0;

    auto random_sequence = [&](int k, std::size_t target_n, bool allow_delete_merge) {
        IdGen ids;
        PlacementMap placement;
        MemTree tree;
        tree.id = ids.next_tree++;
        tree.scope = entity_scope("t");
        tree.k = k;
        std::vector<NodeId> leaves;
        auto insert_one = [&](MemTree& t, Instant at) {
            RoutedRecord r;
            r.scope = t.scope;
            r.payload = PayloadRef::fact(ids.next_fact++);
            r.anchor = TemporalAnchor::point(at);
            leaves.push_back(t.insert_leaf(r, ids, placement));
            if (t.needs_rebuild()) t.rebuild(ids);
            ++ops;
        };

        while (tree.leaf_count < target_n) {
            std::size_t burst = 1 + rng() % 64;
            for (std::size_t i = 0; i < burst && tree.leaf_count < target_n; ++i)
                insert_one(tree, static_cast<Instant>(rng() % 10000000));

            if (allow_delete_merge && rng() % 4 == 0 && tree.leaf_count > 8) {
                std::set<NodeId> victims;
                std::size_t cap = std::min<std::size_t>(24, tree.leaf_count / 4);
                std::size_t kill = 1 + rng() % (cap + 1);
                auto ordered = tree.leaves_in_order();
                for (std::size_t i = 0; i < kill; ++i)
                    victims.insert(ordered[rng() % ordered.size()]);
                tree.remove_leaves(victims, placement);
                if (tree.root != 0 && tree.needs_rebuild()) tree.rebuild(ids);
                ++ops;
            }
            if (allow_delete_merge && rng() % 5 == 0) {
                // Merge a freshly built sibling tree in, smaller into larger.
                MemTree other;
                other.id = ids.next_tree++;
                other.scope = tree.scope;
                other.k = k;
                std::size_t extra = 1 + rng() % 32;
                for (std::size_t i = 0; i < extra; ++i) {
                    RoutedRecord r;
                    r.scope = other.scope;
                    r.payload = PayloadRef::fact(ids.next_fact++);
                    r.anchor = TemporalAnchor::point(static_cast<Instant>(rng() % 10000000));
                    other.insert_leaf(r, ids, placement);
                }
                for (NodeId leaf : other.leaves_in_order()) {
                    RoutedRecord r;
                    r.scope = tree.scope;
                    r.payload = other.node(leaf).payload;
                    r.anchor = other.node(leaf).interval;
                    placement.remove(r.payload, LeafLocation{other.id, leaf});
                    tree.insert_leaf(r, ids, placement);
                }
                if (tree.needs_rebuild()) tree.rebuild(ids);
                ++ops;
            }
        }
        if (tree.root != 0) {
            tree.check_invariants();
            require(tree.within_balance_bound(), "height bound violated");
            for (const auto& [nid, n] : tree.nodes)
                require(n.is_leaf() || n.children.size() <= static_cast<std::size_t>(k),
                        "child count violated");
        }
        ++sequences;
    };

    for (int i = 0; i < 970; ++i)
        random_sequence(kVariants[rng() % 4], 1 + rng() % 160, true);
    for (int i = 0; i < 30; ++i)
        random_sequence(kVariants[rng() % 4], 1024 + rng() % 3073, i % 2 == 0);

    double elapsed = seconds_since(t0);
    require(sequences >= 1000, "need >= 1000 sequences");
    require(elapsed < 120.0, "suite exceeded 2 minutes");
    std::ostringstream msg;
    msg << sequences << " sequences, " << ops << " ops, 0 violations (" << elapsed << "s)";
    return msg.str();
}

// ---------------------------------------------------------------- C2
std::string c2_locality() {
    const int k = 8;
    std::ostringstream msg;
    for (std::size_t n : {64u, 512u, 4096u}) {
        MemoryStore store;
        store.config.branching["default"] = k;
        Backends backends = make_mock_backends();
        store.apply_updates(seed_scope_facts(store, "subject", n - 1, 1700000000), backends);

        // Single-record insert.
        FlushStats single = store.apply_updates(
            seed_scope_facts(store, "subject", 1, 1700000000 + static_cast<Instant>(n) * 60),
            backends);
        std::size_t log_bound = static_cast<std::size_t>(MemTree::height_bound(k, n)) - 1;
        const MemTree& tree = store.trees.begin()->second;
        require(dependency_depth(single) <= log_bound,
                "single-insert depth exceeds ceil(log_k N) at n=" + std::to_string(n));
        require(single.summarizer_calls <= static_cast<std::size_t>(tree.height()),
                "single-insert calls exceed height at n=" + std::to_string(n));

        // M-record batches: calls = distinct dirty nodes needing summaries,
        // bounded by M * height, with depth independent of M.
        for (std::size_t m : {4u, 16u, 64u}) {
            FlushStats batch = store.apply_updates(
                seed_scope_facts(store, "subject", m,
                                 1800000000 + static_cast<Instant>(n + m) * 600),
                backends);
            require(batch.summarizer_calls ==
                        batch.nodes_refreshed - batch.passthrough_refreshes,
                    "calls != distinct dirty nodes requiring summarization");
            const MemTree& t2 = store.trees.begin()->second;
            require(batch.summarizer_calls <= m * static_cast<std::size_t>(t2.height()),
                    "batch calls exceed M*height");
            require(dependency_depth(batch) <=
                        static_cast<std::size_t>(MemTree::height_bound(k, t2.leaf_count)) - 1,
                    "batch depth not height-bounded");
        }
        msg << "n=" << n << " depth<=" << log_bound << " ok; ";
    }
    return msg.str();
}

// ---------------------------------------------------------------- C3
std::string c3_lazy_vs_eager() {
    auto rows = bench::lazy_vs_eager({16, 64, 256, 1024}, 8);
    double prev_ratio = 0.0;
    std::ostringstream msg;
    for (const auto& r : rows) {
        require(r.lazy_calls < r.eager_calls,
                "lazy not below eager at " + std::to_string(r.facts));
        require(r.ratio >= prev_ratio, "eager/lazy ratio not monotone");
        prev_ratio = r.ratio;
        msg << r.facts << ":" << r.eager_calls << "/" << r.lazy_calls << " ";
    }
    return msg.str();
}

// ---------------------------------------------------------------- C4
std::string c4_parallelism() {
    MemoryStore serial;
    serial.config.flush_parallelism = 1;
    MemoryStore wide;
    wide.config.flush_parallelism = 16;
    Backends backends_serial = make_mock_backends();
    Backends backends_wide = make_mock_backends();

    std::mt19937 rng(7321);
    const char* scopes[] = {"ada", "brin", "curie", "dirac", "euler"};
    for (int batch = 0; batch < 100; ++batch) {
        std::size_t count = 1 + rng() % 24;
        Instant base = 1700000000 + batch * 10000;
        std::string scope = scopes[rng() % 5];

        MemoryStore scratch;  // identical id streams for both worlds
        auto make_batch = [&](MemoryStore& target) {
            std::vector<RoutedRecord> records;
            for (std::size_t i = 0; i < count; ++i) {
                CanonicalFact fact;
                fact.fact_id = target.ids.next_fact++;
                fact.text = scope + " update " + std::to_string(batch) + "-" +
                            std::to_string(i) + ".";
                fact.anchor = TemporalAnchor::point(base + static_cast<Instant>(i) * 30);
                fact.source_refs.insert(SourceRef{"p", 1, 1});
                fact.canonical_key = canonical_key(fact.text);
                FactId fid = fact.fact_id;
                target.fact_by_key[fact.canonical_key] = fid;
                target.facts.emplace(fid, std::move(fact));
                target.pending_fact_rows[fid] = {};
                RoutedRecord r;
                r.scope = entity_scope(scope);
                r.payload = PayloadRef::fact(fid);
                r.anchor = target.facts.at(fid).anchor;
                records.push_back(std::move(r));
            }
            return records;
        };
        serial.apply_updates(make_batch(serial), backends_serial);
        wide.apply_updates(make_batch(wide), backends_wide);
        (void)scratch;
    }

    require(serial.trees.size() == wide.trees.size(), "tree sets diverged");
    std::size_t nodes = 0;
    auto wit = wide.trees.begin();
    for (auto sit = serial.trees.begin(); sit != serial.trees.end(); ++sit, ++wit) {
        require(sit->second.nodes.size() == wit->second.nodes.size(), "node sets diverged");
        auto wn = wit->second.nodes.begin();
        for (auto sn = sit->second.nodes.begin(); sn != sit->second.nodes.end(); ++sn, ++wn) {
            require(sn->second.summary == wn->second.summary, "summaries diverged");
            require(sn->second.embedding == wn->second.embedding, "embeddings diverged");
            ++nodes;
        }
    }
    return "100 batches, " + std::to_string(nodes) + " nodes bit-identical at budgets 1 vs 16";
}

// ---------------------------------------------------------------- C5
std::string c5_index_exactness() {
    std::mt19937 rng(5150);
    std::size_t queries = 0;
    for (std::size_t rows : {100u, 1000u, 10000u}) {
        VectorIndex index;
        std::map<std::uint64_t, std::vector<float>> oracle_rows;
        for (std::size_t i = 1; i <= rows; ++i) {
            std::vector<float> v(16);
            bool zero = true;
            for (float& x : v) {
                x = static_cast<float>(static_cast<int>(rng() % 2001) - 1000) / 1000.0f;
                zero &= x == 0.0f;
            }
            if (zero) v[0] = 1.0f;
            index.upsert(IndexRow{i, 0, v, ""});
            oracle_rows[i] = index.find(i)->vector;
        }
        std::size_t per_size = rows == 10000 ? 168 : 166;
        for (std::size_t q = 0; q < per_size; ++q) {
            std::vector<float> query(16);
            for (float& x : query)
                x = static_cast<float>(static_cast<int>(rng() % 2001) - 1000) / 1000.0f;
            for (std::size_t k : {1u, 5u, 10u}) {
                auto got = index.search(query, k);
                auto want = brute_force_topk(oracle_rows, query, k);
                require(got.size() == want.size(), "result size mismatch");
                for (std::size_t i = 0; i < got.size(); ++i) {
                    require(got[i].key == want[i].first, "ranking mismatch vs oracle");
                    require(std::abs(got[i].score - want[i].second) < 1e-9, "score mismatch");
                }
            }
            ++queries;
        }
    }
    return std::to_string(queries) + " queries x K in {1,5,10}, zero mismatches";
}

// ---------------------------------------------------------------- C6
// Temporal steering harness: descends into children whose interval ends
// before the reference cutoff, preferring the latest such interval.
class TemporalChooser : public Chooser {
public:
    explicit TemporalChooser(Instant cutoff) : cutoff_(cutoff) {}
    ChooseResponse choose(const ChooseRequest& request) override {
        std::vector<std::pair<Instant, std::size_t>> before;  // (-closeness, index)
        for (std::size_t i = 0; i < request.children.size(); ++i) {
            if (request.children[i].interval.start < cutoff_)
                before.push_back({request.children[i].interval.end, i});
        }
        std::sort(before.begin(), before.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;  // latest pre-cutoff first
            return a.second < b.second;
        });
        ChooseResponse resp;
        for (std::size_t i = 0; i < before.size() && i < request.beam_width; ++i)
            resp.chosen.push_back(before[i].second);
        if (resp.chosen.empty()) resp.stop = true;
        return resp;
    }

private:
    Instant cutoff_;
};

std::string c6_wrong_time_fixture() {
    Backends backends = make_mock_backends();
    auto embedder = std::static_pointer_cast<MockEmbedder>(backends.embedder);

    const std::string query = "Where did Bob live before moving to Miami?";
    auto pin = [&](const std::string& text, double cos_to_query, std::size_t axis) {
        std::vector<float> v(kMockEmbeddingDim, 0.0f);
        v[0] = static_cast<float>(cos_to_query);
        v[axis] = static_cast<float>(std::sqrt(1.0 - cos_to_query * cos_to_query));
        embedder->set_override(text, v);
    };
    std::vector<float> q(kMockEmbeddingDim, 0.0f);
    q[0] = 1.0f;
    embedder->set_override(query, q);

    // The adversarial layout: the true predecessor evidence (Davis) sits far
    // from the query; newer/lexically-overlapping facts sit close.
    pin("Bob moved from Boston to Davis in May 2023.", 0.30, 1);
    pin("Bob started a gardening hobby in Davis.", 0.55, 2);
    pin("Bob moved from Davis to Miami in July 2024.", 0.90, 3);
    pin("Bob bought a house in Miami.", 0.95, 4);

    std::vector<Session> distractors = distractor_sessions(12);
    std::size_t axis = 5;
    for (const Session& s : distractors) {
        for (const Turn& t : s.turns) {
            if (t.speaker != Speaker::user) continue;
            pin(t.text, 0.60 + 0.015 * static_cast<double>(axis), axis % (kMockEmbeddingDim - 1) + 1);
            ++axis;
        }
    }

    MemoryStore store;
    for (const Session& s : bob_sessions()) ingest_session(store, s, backends);
    for (const Session& s : distractors) ingest_session(store, s, backends);

    RetrievalConfig cfg;  // final_top_k = 10

    AnswerContext flat = retrieve(store, query, RetrieveMode::flat, backends, cfg);
    require(flat.evidence.size() == 10, "flat mode must fill its budget");
    for (const EvidenceItem& e : flat.evidence)
        require(e.text.find("Boston to Davis") == std::string::npos,
                "flat top-10 unexpectedly recovered the Davis evidence");

    Backends browse_backends = backends;
    browse_backends.chooser = std::make_shared<TemporalChooser>(ts(2024, 7, 1));
    AnswerContext guided =
        retrieve(store, query, RetrieveMode::llm_planner, browse_backends, cfg);
    bool davis = false;
    for (const EvidenceItem& e : guided.evidence)
        davis |= e.text.find("Boston to Davis") != std::string::npos;
    require(davis, "llm+planner browse failed to recover the Davis evidence");
    return "flat top-10 omits Davis; llm+planner recovers it";
}

// ---------------------------------------------------------------- C7
std::string c7_delete_inverse() {
    Backends backends = make_mock_backends();
    MemoryStore store;
    RandomSessionGen gen(424242);
    for (int i = 0; i < 6; ++i) ingest_session(store, gen.next(), backends);

    auto fact_snapshot = [&]() {
        std::map<std::string, std::set<SourceRef>> out;
        for (const auto& [fid, f] : store.facts) out[f.canonical_key] = f.source_refs;
        return out;
    };

    for (int trial = 0; trial < 200; ++trial) {
        auto facts_before = fact_snapshot();
        auto placement_before = store.placement;
        auto registry_before = store.registry;
        std::map<NodeId, std::string> summaries_before;
        for (const auto& [tid, tree] : store.trees)
            for (const auto& [nid, n] : tree.nodes) summaries_before[nid] = *n.summary;

        Session extra = gen.next();
        ingest_session(store, extra, backends);
        delete_session(store, extra.session_id, backends);

        require(fact_snapshot() == facts_before, "facts not restored at trial " +
                                                     std::to_string(trial));
        require(store.placement == placement_before, "placement not restored");
        require(store.registry == registry_before, "registry not restored");
        for (const auto& [tid, tree] : store.trees) {
            for (const auto& [nid, n] : tree.nodes) {
                auto it = summaries_before.find(nid);
                if (it != summaries_before.end())
                    require(*n.summary == it->second, "summary changed on surviving node");
            }
        }
        if (trial % 50 == 49) store.check_invariants();
        if (trial % 10 == 9) ingest_session(store, gen.next(), backends);  // grow the base
    }
    return "200 trials restored facts, placement, registry and summaries exactly";
}

// ---------------------------------------------------------------- C8
std::string c8_migration() {
    auto rows = bench::migration(8);
    require(rows.size() == 8, "expected 8 rows");
    std::size_t peak_n = 0;
    double peak = 0.0;
    for (const auto& r : rows) {
        require(r.fact_multisets_equal, "fact multisets diverged at n=" + std::to_string(r.n));
        double gap = std::abs(static_cast<double>(r.seq_trees) - static_cast<double>(r.mig_trees)) /
                     static_cast<double>(r.seq_trees);
        require(gap <= 0.08, "tree counts differ by more than 8% at n=" + std::to_string(r.n));
        if (r.n >= 2) {
            require(r.mig_cost < r.seq_cost, "migration not cheaper at n=" + std::to_string(r.n));
            if (r.ratio > peak) {
                peak = r.ratio;
                peak_n = r.n;
            }
        }
    }
    require(peak > 1.5, "peak speedup not above 1.5x");
    require(peak_n >= 3 && peak_n <= 7, "speedup peak not in the interior (peak at n=" +
                                            std::to_string(peak_n) + ")");
    std::ostringstream msg;
    msg << "facts equal, trees within 8%, cost ratio peaks " << peak << "x at n=" << peak_n;
    return msg.str();
}

// ---------------------------------------------------------------- C9
std::string c9_k_sweep() {
    auto t0 = std::chrono::steady_clock::now();
    auto rows = bench::k_sweep({2, 4, 8, 16, 32, 64}, 512);
    double elapsed = seconds_since(t0);
    require(elapsed < 60.0, "k-sweep exceeded 1 minute");
    std::uint64_t prev_calls = UINT64_MAX;
    for (const auto& r : rows) {
        require(r.height == r.expected_height,
                "height mismatch at k=" + std::to_string(r.k) + ": " + std::to_string(r.height) +
                    " vs " + std::to_string(r.expected_height));
        require(r.summarizer_calls < prev_calls, "calls not decreasing in k");
        prev_calls = r.summarizer_calls;
    }
    std::ostringstream msg;
    msg << "heights exact, calls 511.." << rows.back().summarizer_calls << " decreasing ("
        << elapsed << "s)";
    return msg.str();
}

// ---------------------------------------------------------------- C10
std::string c10_snapshot_roundtrip() {
    fs::path base = fs::temp_directory_path() / "memforest_acceptance_snap";
    fs::remove_all(base);
    RandomSessionGen gen(777);
    for (int trial = 0; trial < 50; ++trial) {
        Backends backends = make_mock_backends();
        MemoryStore store;
        int sessions = 1 + trial % 5;
        for (int i = 0; i < sessions; ++i) ingest_session(store, gen.next(), backends);

        fs::path first = base / ("a" + std::to_string(trial));
        fs::path second = base / ("b" + std::to_string(trial));
        save_snapshot(store, first.string());
        auto loaded = load_snapshot(first.string());
        save_snapshot(*loaded, second.string());

        for (const auto& entry : fs::directory_iterator(first)) {
            std::ifstream in1(entry.path(), std::ios::binary);
            std::ifstream in2(second / entry.path().filename(), std::ios::binary);
            std::stringstream s1, s2;
            s1 << in1.rdbuf();
            s2 << in2.rdbuf();
            require(s1.str() == s2.str(), "byte mismatch in " +
                                              entry.path().filename().string() + " at trial " +
                                              std::to_string(trial));
        }
    }
    fs::remove_all(base);
    return "50 randomized stores: save -> load -> save byte-identical";
}

// ---------------------------------------------------------------- C11
std::string c11_no_network() {
    Backends backends = make_mock_backends();
    MemoryStore store;
    RandomSessionGen gen(31337);
    for (int i = 0; i < 4; ++i) ingest_session(store, gen.next(), backends);

    auto extractor_before = backends.ledger->calls(PortCallLedger::extractor);
    RematerializeOptions options;
    options.branching_factor = 4;
    options.refresh_embeddings = true;
    rematerialize(store, options, backends);
    require(backends.ledger->calls(PortCallLedger::extractor) == extractor_before,
            "rematerialize touched the extractor port");

    // Bench scenarios run entirely on internal mock backends.
    bench::lazy_vs_eager({16}, 8);
    bench::level_parallel({32}, 8);
    bench::k_sweep({4}, 32);
    bench::migration(2);
    return "mock-only run; rematerialize extractor calls = 0; bench scenarios offline";
}

struct Criterion {
    const char* id;
    const char* name;
    std::function<std::string()> run;
};

}  // namespace

int main() {
    std::vector<Criterion> criteria = {
        {"C1", "tree-invariant-suite", c1_tree_invariants},
        {"C2", "update-locality", c2_locality},
        {"C3", "lazy-vs-eager", c3_lazy_vs_eager},
        {"C4", "parallelism-soundness", c4_parallelism},
        {"C5", "index-exactness", c5_index_exactness},
        {"C6", "wrong-time-retrieval-fixture", c6_wrong_time_fixture},
        {"C7", "delete-ingest-inverse", c7_delete_inverse},
        {"C8", "migration-merge", c8_migration},
        {"C9", "k-sweep-harness", c9_k_sweep},
        {"C10", "snapshot-round-trip", c10_snapshot_roundtrip},
        {"C11", "no-network-guarantee", c11_no_network},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        try {
            std::string detail = c.run();
            std::cout << "[PASS] " << c.id << " " << c.name << ": " << detail << "\n";
        } catch (const std::exception& e) {
            std::cout << "[FAIL] " << c.id << " " << c.name << ": " << e.what() << "\n";
            ++failures;
        }
    }
    if (failures != 0) {
        std::cout << failures << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all acceptance criteria passed\n";
    return 0;
}
