#pragma once

// Write-path benchmark harness. All scenarios run on deterministic mock
// backends and synthetic fixtures; parallelism is simulated through the
// dependency-depth cost model (critical-path length x unit cost), so results
// are exact and repeatable.

#include <cstdint>
#include <string>
#include <vector>

namespace memforest::bench {

// LLM-shaped calls (extract/summarize/choose/plan) cost 10 units, embedding
// calls 1 unit.
constexpr double kLlmCallCost = 10.0;
constexpr double kEmbedCallCost = 1.0;

struct LazyEagerRow {
    std::size_t facts = 0;
    std::uint64_t eager_calls = 0;  // per-insert flush
    std::uint64_t lazy_calls = 0;   // one batch flush
    double ratio = 0.0;             // eager / lazy
};
std::vector<LazyEagerRow> lazy_vs_eager(const std::vector<std::size_t>& sizes, int k);

struct LevelParallelRow {
    std::size_t facts = 0;
    std::uint64_t summarizer_calls = 0;
    std::size_t critical_depth = 0;
    double serial_cost = 0.0;    // calls * unit
    double parallel_cost = 0.0;  // depth * unit
    double speedup = 0.0;
};
std::vector<LevelParallelRow> level_parallel(const std::vector<std::size_t>& sizes, int k,
                                             double unit_cost = kLlmCallCost);

struct KSweepRow {
    int k = 0;
    std::size_t facts = 0;
    int height = 0;
    int expected_height = 0;  // ceil(log_k n) + 1
    std::uint64_t summarizer_calls = 0;
    double root_recall_proxy = 0.0;  // emitted, not asserted
};
std::vector<KSweepRow> k_sweep(const std::vector<int>& ks, std::size_t facts);

struct MigrationRow {
    std::size_t n = 0;  // instances combined so far
    double seq_cost = 0.0;
    double mig_cost = 0.0;
    double ratio = 0.0;  // seq / mig; 0 at n=1 where nothing merged yet
    std::size_t seq_facts = 0;
    std::size_t mig_facts = 0;
    std::size_t seq_trees = 0;
    std::size_t mig_trees = 0;
    bool fact_multisets_equal = false;
};
std::vector<MigrationRow> migration(std::size_t instances);

std::string to_csv(const std::vector<LazyEagerRow>& rows);
std::string to_csv(const std::vector<LevelParallelRow>& rows);
std::string to_csv(const std::vector<KSweepRow>& rows);
std::string to_csv(const std::vector<MigrationRow>& rows);

}  // namespace memforest::bench
