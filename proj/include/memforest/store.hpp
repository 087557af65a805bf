#pragma once

// MemoryStore composes the substrate, trees, scene state and derived indexes.
// Persistent layer: sessions/facts/cells/placement/registry/scenes/tree
// structure. Derived layer: summaries, embeddings, NodeIndex/RootIndex/
// FactIndex rows — all regenerable.
//
// Concurrency contract: one writer at a time; mutating entry points run under
// a single maintenance transaction. Readers may share a flushed snapshot.

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "memforest/config.hpp"
#include "memforest/index.hpp"
#include "memforest/memtree.hpp"
#include "memforest/ports.hpp"
#include "memforest/router.hpp"
#include "memforest/substrate.hpp"

namespace memforest {

struct StoreStats {
    std::size_t sessions = 0;
    std::size_t facts = 0;
    std::size_t cells = 0;
    std::map<std::string, std::size_t> trees_by_family;
    std::size_t nodes = 0;
    std::size_t dirty_nodes = 0;
    std::size_t scene_clusters = 0;
    std::size_t node_rows = 0;
    std::size_t root_rows = 0;
    std::size_t fact_rows = 0;
    int max_height = 0;
    std::map<TreeId, int> heights;
};

class MemoryStore {
public:
    explicit MemoryStore(Config config = default_config()) : config(std::move(config)) {
        scenes.threshold = this->config.scene_threshold;
    }

    Config config;
    IdGen ids;
    std::map<std::string, Session> sessions;
    std::map<FactId, CanonicalFact> facts;
    std::map<CellId, DialogueCell> cells;
    std::map<std::string, FactId> fact_by_key;  // derived; rebuilt on load
    PlacementMap placement;
    SessionRegistry registry;
    SceneState scenes;
    std::map<TreeId, MemTree> trees;
    std::map<ScopeId, TreeId> scope_to_tree;
    VectorIndex node_index;
    VectorIndex root_index;  // keyed by tree id
    VectorIndex fact_index;  // keyed by fact id
    // Fact rows waiting for the next flush; empty vector means re-embed.
    std::map<FactId, std::vector<float>> pending_fact_rows;
    // Facts whose scene assignment was deferred by an embedder failure.
    std::set<FactId> scene_pending;

    MemTree& tree_for(const ScopeId& scope);
    MemTree* find_tree(TreeId tree);
    const MemTree* find_tree(TreeId tree) const;
    TreeId tree_id_for(const ScopeId& scope) const;  // 0 when absent

    const CanonicalFact& fact(FactId f) const;
    const DialogueCell& cell(CellId c) const;
    std::string payload_text(const PayloadRef& p) const;
    TemporalAnchor payload_anchor(const PayloadRef& p) const;

    FlushHooks make_hooks();

    // Algorithm end-to-end over this store's trees; creates unseen scopes.
    FlushStats apply_updates(const std::vector<RoutedRecord>& routed, Backends& backends,
                             bool eager_flush = false);
    // Refreshes every dirty node in the store plus pending fact rows.
    FlushStats flush(Backends& backends);
    bool fully_flushed() const;

    // Removes the tree with its index rows and scope mapping.
    void drop_tree(TreeId tree);

    StoreStats stats() const;

    // Full-scan structural and cross-reference checks; throws on violation.
    // Index freshness is checked only when the store is fully flushed.
    void check_invariants() const;

    std::unique_ptr<MemoryStore> clone() const { return std::make_unique<MemoryStore>(*this); }

private:
    FlushStats flush_fact_rows(Backends& backends);
};

}  // namespace memforest
