#include "memforest/store.hpp"

#include <algorithm>
#include <cmath>

#include "memforest/errors.hpp"

namespace memforest {

MemTree& MemoryStore::tree_for(const ScopeId& scope) {
    auto it = scope_to_tree.find(scope);
    if (it != scope_to_tree.end()) return trees.at(it->second);
    MemTree tree;
    tree.id = ids.next_tree++;
    tree.scope = scope;
    tree.k = config.branching_for(scope.family);
    TreeId tid = tree.id;
    trees.emplace(tid, std::move(tree));
    scope_to_tree[scope] = tid;
    return trees.at(tid);
}

MemTree* MemoryStore::find_tree(TreeId tree) {
    auto it = trees.find(tree);
    return it == trees.end() ? nullptr : &it->second;
}

const MemTree* MemoryStore::find_tree(TreeId tree) const {
    auto it = trees.find(tree);
    return it == trees.end() ? nullptr : &it->second;
}

TreeId MemoryStore::tree_id_for(const ScopeId& scope) const {
    auto it = scope_to_tree.find(scope);
    return it == scope_to_tree.end() ? 0 : it->second;
}

const CanonicalFact& MemoryStore::fact(FactId f) const {
    auto it = facts.find(f);
    if (it == facts.end()) throw PreconditionError("unknown fact " + std::to_string(f));
    return it->second;
}

const DialogueCell& MemoryStore::cell(CellId c) const {
    auto it = cells.find(c);
    if (it == cells.end()) throw PreconditionError("unknown cell " + std::to_string(c));
    return it->second;
}

std::string MemoryStore::payload_text(const PayloadRef& p) const {
    return p.kind == PayloadRef::Kind::fact ? fact(p.id).text : cell(p.id).text;
}

TemporalAnchor MemoryStore::payload_anchor(const PayloadRef& p) const {
    return p.kind == PayloadRef::Kind::fact ? fact(p.id).anchor : cell(p.id).anchor;
}

FlushHooks MemoryStore::make_hooks() {
    FlushHooks hooks;
    hooks.payload_text = [this](const PayloadRef& p) { return payload_text(p); };
    hooks.node_row = [this](const MemTree& tree, const TreeNode& node) {
        IndexRow row;
        row.key = node.id;
        row.owner = tree.id;
        row.vector = *node.embedding;
        row.text = *node.summary;
        node_index.upsert(std::move(row));
    };
    hooks.root_row = [this](const MemTree& tree) {
        const TreeNode& r = tree.node(tree.root);
        IndexRow row;
        row.key = tree.id;
        row.owner = tree.id;
        row.vector = *r.embedding;
        row.text = *r.summary;
        root_index.upsert(std::move(row));
    };
    hooks.node_row_remove = [this](NodeId n) { node_index.remove(n); };
    return hooks;
}

FlushStats MemoryStore::apply_updates(const std::vector<RoutedRecord>& routed, Backends& backends,
                                      bool eager_flush) {
    TreeUpdateContext ctx;
    ctx.tree_for = [this](const ScopeId& scope) -> MemTree& { return tree_for(scope); };
    ctx.ids = &ids;
    ctx.placement = &placement;
    ctx.summarizer = backends.summarizer.get();
    ctx.embedder = backends.embedder.get();
    ctx.hooks = make_hooks();
    ctx.parallelism = config.flush_parallelism;
    ctx.eager_flush = eager_flush;
    FlushStats stats = memforest::apply_updates(routed, ctx);
    stats.merge_from(flush_fact_rows(backends));
    return stats;
}

FlushStats MemoryStore::flush_fact_rows(Backends& backends) {
    FlushStats stats;
    for (auto& [fid, vec] : pending_fact_rows) {
        auto it = facts.find(fid);
        if (it == facts.end()) continue;
        std::vector<float> v = vec;
        if (v.empty()) {
            v = backends.embedder->embed(it->second.text);
            ++stats.embedder_calls;
        }
        IndexRow row;
        row.key = fid;
        row.owner = 0;
        row.vector = std::move(v);
        row.text = it->second.text;
        fact_index.upsert(std::move(row));
    }
    pending_fact_rows.clear();
    return stats;
}

FlushStats MemoryStore::flush(Backends& backends) {
    std::vector<MemTree*> dirty;
    for (auto& [tid, tree] : trees) {
        if (tree.needs_rebuild()) {
            for (NodeId removed : tree.rebuild(ids)) node_index.remove(removed);
        }
        if (!tree.dirty_set.empty()) dirty.push_back(&tree);
    }
    FlushHooks hooks = make_hooks();
    FlushStats stats = flush_trees(dirty, *backends.summarizer, *backends.embedder, hooks,
                                   config.flush_parallelism);
    stats.merge_from(flush_fact_rows(backends));
    // Root collapses can promote a clean node to root without any refresh;
    // reconcile every root row against the current roots.
    for (const auto& [tid, tree] : trees) {
        if (tree.root == 0) continue;
        const TreeNode& r = tree.node(tree.root);
        if (r.dirty || !r.summary || !r.embedding) continue;
        const IndexRow* row = root_index.find(tid);
        if (row && row->text == *r.summary) continue;
        IndexRow fresh;
        fresh.key = tid;
        fresh.owner = tid;
        fresh.vector = *r.embedding;
        fresh.text = *r.summary;
        root_index.upsert(std::move(fresh));
    }
    return stats;
}

bool MemoryStore::fully_flushed() const {
    if (!pending_fact_rows.empty()) return false;
    for (const auto& [tid, tree] : trees) {
        if (!tree.dirty_set.empty()) return false;
    }
    return true;
}

void MemoryStore::drop_tree(TreeId tree) {
    auto it = trees.find(tree);
    if (it == trees.end()) return;
    for (const auto& [nid, node] : it->second.nodes) node_index.remove(nid);
    root_index.remove(tree);
    scope_to_tree.erase(it->second.scope);
    trees.erase(it);
}

StoreStats MemoryStore::stats() const {
    StoreStats s;
    s.sessions = sessions.size();
    s.facts = facts.size();
    s.cells = cells.size();
    for (const auto& [tid, tree] : trees) {
        s.trees_by_family[to_string(tree.family())]++;
        s.nodes += tree.nodes.size();
        s.dirty_nodes += tree.dirty_set.size();
        s.heights[tid] = tree.height();
        s.max_height = std::max(s.max_height, tree.height());
    }
    s.scene_clusters = scenes.clusters().size();
    s.node_rows = node_index.size();
    s.root_rows = root_index.size();
    s.fact_rows = fact_index.size();
    return s;
}

void MemoryStore::check_invariants() const {
    for (const auto& [tid, tree] : trees) {
        tree.check_invariants();
        if (tree.root == 0) throw PreconditionError("empty tree kept in store");
        auto sit = scope_to_tree.find(tree.scope);
        if (sit == scope_to_tree.end() || sit->second != tid)
            throw PreconditionError("tree scope not indexed");
        // Placement bidirectionality, leaf side.
        for (NodeId leaf : tree.leaves_in_order()) {
            const TreeNode& n = tree.node(leaf);
            const auto& locs = placement.lookup(n.payload);
            if (!locs.count(LeafLocation{tid, leaf}))
                throw PreconditionError("leaf missing from placement map");
        }
    }
    // Placement bidirectionality, map side.
    for (const auto& [payload, locs] : placement.entries()) {
        if (payload.kind == PayloadRef::Kind::fact && !facts.count(payload.id))
            throw PreconditionError("placement references missing fact");
        if (payload.kind == PayloadRef::Kind::cell && !cells.count(payload.id))
            throw PreconditionError("placement references missing cell");
        for (const LeafLocation& loc : locs) {
            const MemTree* tree = find_tree(loc.tree);
            if (!tree) throw PreconditionError("placement references missing tree");
            auto nit = tree->nodes.find(loc.leaf);
            if (nit == tree->nodes.end() || !nit->second.is_leaf() ||
                !(nit->second.payload == payload))
                throw PreconditionError("placement references wrong leaf");
        }
    }
    // Anchor containment against source turns.
    for (const auto& [fid, f] : facts) {
        if (f.source_refs.empty()) throw PreconditionError("fact without source refs");
        if (f.canonical_key != canonical_key(f.text))
            throw PreconditionError("stale canonical key");
        Instant lo = 0, hi = 0;
        bool any = false;
        for (const SourceRef& ref : f.source_refs) {
            auto sit = sessions.find(ref.session_id);
            if (sit == sessions.end()) continue;
            for (const Turn& t : sit->second.turns) {
                if (t.index < ref.first_turn || t.index > ref.last_turn) continue;
                if (!any) {
                    lo = hi = t.timestamp;
                    any = true;
                } else {
                    lo = std::min(lo, t.timestamp);
                    hi = std::max(hi, t.timestamp);
                }
            }
        }
        if (any && (f.anchor.start < lo || f.anchor.end > hi))
            throw PreconditionError("fact anchor outside source turn span");
    }
    // Scene centroid invariant: recompute-and-compare.
    for (const auto& [cid, c] : scenes.clusters()) {
        if (c.members.empty()) throw PreconditionError("empty scene cluster");
        std::vector<double> sum;
        for (FactId f : c.members) {
            auto vit = scenes.member_vectors.find(f);
            if (vit == scenes.member_vectors.end())
                throw PreconditionError("scene member without stored vector");
            if (sum.empty()) sum.assign(vit->second.size(), 0.0);
            for (std::size_t i = 0; i < vit->second.size(); ++i) sum[i] += vit->second[i];
        }
        double norm = 0.0;
        for (double v : sum) norm += v * v;
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < sum.size() && norm > 0.0; ++i) {
            double expect = sum[i] / norm;
            if (std::abs(expect - c.centroid[i]) > 1e-5)
                throw PreconditionError("scene centroid out of date");
        }
    }
    if (!fully_flushed()) return;
    // Post-flush freshness of derived rows.
    for (const auto& [tid, tree] : trees) {
        for (const auto& [nid, node] : tree.nodes) {
            if (!node.summary || !node.embedding) throw PreconditionError("flushed node missing artifacts");
            const IndexRow* row = node_index.find(nid);
            if (!row || row->text != *node.summary)
                throw PreconditionError("node index row stale");
        }
        const IndexRow* row = root_index.find(tid);
        if (!row || row->text != *tree.node(tree.root).summary)
            throw PreconditionError("root index row stale");
    }
    for (const auto& [fid, f] : facts) {
        const IndexRow* row = fact_index.find(fid);
        if (!row || row->text != f.text) throw PreconditionError("fact index row stale");
    }
}

}  // namespace memforest
