#pragma once

// Scoped temporal index: balanced k-ary trees with time-ordered leaves, eager
// structural edits, coalesced dirty marking and level-parallel lazy refresh.
//
// Structural edits never call a model port. Summaries, embeddings and index
// rows regenerate only for dirty nodes during an explicit flush, bottom-up by
// level, nodes of one level refreshable concurrently across all touched trees.

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "memforest/ports.hpp"
#include "memforest/substrate.hpp"

namespace memforest {

// Leaf ordering key: anchor start with insertion sequence as a stable
// tie-break, so equal timestamps keep arrival order.
struct LeafKey {
    Instant start = 0;
    std::uint64_t seq = 0;

    auto operator<=>(const LeafKey&) const = default;
};

struct TreeNode {
    NodeId id = 0;
    int level = 0;   // leaves 0, increasing toward root
    NodeId parent = 0;  // 0 = root
    std::vector<NodeId> children;  // internal nodes, ordered by key
    PayloadRef payload;            // leaves only
    TemporalAnchor interval;       // union of subtree anchors
    LeafKey max_key;               // rightmost descendant leaf key
    std::optional<std::string> summary;
    std::optional<std::vector<float>> embedding;
    bool dirty = true;

    bool is_leaf() const { return level == 0; }
};

class MemTree {
public:
    TreeId id = 0;
    ScopeId scope;
    int k = 8;
    NodeId root = 0;  // 0 = empty
    std::size_t leaf_count = 0;
    std::uint64_t next_seq = 1;
    std::map<NodeId, TreeNode> nodes;
    std::set<NodeId> dirty_set;  // coalesced pending refresh queue

    ScopeFamily family() const { return scope.family; }

    TreeNode& node(NodeId n);
    const TreeNode& node(NodeId n) const;

    // Number of node levels: 0 for empty, 1 for a single leaf.
    int height() const;
    // Edge height (root level): what the log N path-length claims count.
    int edge_height() const { return height() == 0 ? 0 : height() - 1; }
    // ceil(log_k n): 0 for n <= 1.
    static int ceil_log(int k, std::size_t n);
    // Levels of a complete packing: ceil(log_k n) + 1; 1 for n <= 1. Trees
    // built by temporal appends keep exactly this height.
    static int height_bound(int k, std::size_t n);
    // Balance invariant: edge height never exceeds ceil(log_k n) + 1. The
    // slack level is what keeps out-of-order maintenance local.
    bool within_balance_bound() const {
        return root == 0 || edge_height() <= ceil_log(k, leaf_count) + 1;
    }

    // Places the new leaf at its temporal position, splits overflowing
    // ancestors, updates intervals and the placement map, and marks the final
    // ancestor path dirty. No summary or embedding work happens here.
    NodeId insert_leaf(const RoutedRecord& record, IdGen& ids, PlacementMap& placement);

    // Marks the leaf and every ancestor dirty; returns how many were newly
    // marked (already-dirty nodes are not re-queued).
    std::size_t mark_dirty_ancestors(NodeId leaf);

    struct RemovalResult {
        std::vector<NodeId> removed_nodes;  // leaves, pruned internals, collapsed roots
        std::size_t leaves_removed = 0;
        bool tree_empty = false;
    };

    // Removes leaves, prunes emptied ancestors, collapses single-child root
    // chains and marks surviving invalidated ancestors dirty.
    RemovalResult remove_leaves(const std::set<NodeId>& leaves, PlacementMap& placement);

    // Out-of-order arrivals can degrade the split shape past the balance
    // bound; a full bulk repack restores it. Leaves keep their ids, summaries
    // and embeddings; all fresh internal nodes start dirty. Returns the ids
    // of the discarded internal nodes.
    bool needs_rebuild() const;
    std::vector<NodeId> rebuild(IdGen& ids);

    std::vector<NodeId> leaves_in_order() const;

    // Full-scan structural checks (temporal order, intervals, child counts,
    // parent links, balance). Throws PreconditionError on violation.
    void check_invariants() const;

private:
    NodeId make_leaf(const RoutedRecord& record, IdGen& ids);
    void recompute_meta(TreeNode& n);
    void recompute_meta_upward(NodeId from);
    void split_overflowed(NodeId node_id, IdGen& ids);
    void collect_leaves(NodeId n, std::vector<NodeId>& out) const;
};

struct FlushError {
    TreeId tree = 0;
    NodeId node = 0;
    std::string message;
};

struct FlushStats {
    std::size_t structural_inserts = 0;
    std::size_t trees_touched = 0;
    std::size_t nodes_refreshed = 0;
    std::map<int, std::size_t> refreshed_by_level;
    std::size_t summarizer_calls = 0;
    std::size_t embedder_calls = 0;
    // Refreshes that need no model call: entity/scene leaf passthroughs and
    // single-child interior pass-ups.
    std::size_t passthrough_refreshes = 0;
    // Longest chain of dependent summarizer calls (child before parent);
    // passthroughs cost nothing, so this is the simulated critical path.
    std::size_t max_dependency_depth = 0;
    double structural_ms = 0.0;
    double summary_ms = 0.0;
    double embed_ms = 0.0;
    std::vector<FlushError> errors;

    bool complete() const { return errors.empty(); }
    void merge_from(const FlushStats& other);
};

// The measurable form of the O(log N) critical-path claim.
std::size_t dependency_depth(const FlushStats& stats);

// Index/store callbacks invoked while flushing.
struct FlushHooks {
    std::function<std::string(const PayloadRef&)> payload_text;
    std::function<void(const MemTree&, const TreeNode&)> node_row;
    std::function<void(const MemTree&)> root_row;
    std::function<void(NodeId)> node_row_remove;  // discarded nodes (rebuild)
};

// Refreshes all dirty nodes of the given trees bottom-up by level; nodes of
// one level run concurrently up to `parallelism`. Deterministic given
// deterministic ports regardless of the budget. Port failures leave the node
// dirty and are reported; the rest of the flush continues.
FlushStats flush_trees(const std::vector<MemTree*>& trees, Summarizer& summarizer,
                       Embedder& embedder, const FlushHooks& hooks, int parallelism);

struct TreeUpdateContext {
    std::function<MemTree&(const ScopeId&)> tree_for;  // creates unseen scopes
    IdGen* ids = nullptr;
    PlacementMap* placement = nullptr;
    Summarizer* summarizer = nullptr;
    Embedder* embedder = nullptr;
    FlushHooks hooks;
    int parallelism = 1;
    bool eager_flush = false;  // flush after every structural insert
};

// Algorithm end-to-end: group records per tree, sort by time, insert
// structurally, then one flush covers all touched trees.
FlushStats apply_updates(const std::vector<RoutedRecord>& routed, TreeUpdateContext& ctx);

}  // namespace memforest
