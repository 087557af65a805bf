#include "memforest/memtree.hpp"

#include <algorithm>
#include <chrono>

#include "memforest/errors.hpp"
#include "memforest/parallel.hpp"

namespace memforest {

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TreeNode& MemTree::node(NodeId n) {
    auto it = nodes.find(n);
    if (it == nodes.end())
        throw PreconditionError("tree " + std::to_string(id) + " has no node " + std::to_string(n));
    return it->second;
}

const TreeNode& MemTree::node(NodeId n) const {
    auto it = nodes.find(n);
    if (it == nodes.end())
        throw PreconditionError("tree " + std::to_string(id) + " has no node " + std::to_string(n));
    return it->second;
}

int MemTree::height() const {
    if (root == 0) return 0;
    return node(root).level + 1;
}

int MemTree::ceil_log(int k, std::size_t n) {
    if (n <= 1) return 0;
    int levels = 0;
    std::size_t capacity = 1;
    while (capacity < n) {
        capacity *= static_cast<std::size_t>(k);
        ++levels;
    }
    return levels;
}

int MemTree::height_bound(int k, std::size_t n) {
    return ceil_log(k, n) + 1;
}

NodeId MemTree::make_leaf(const RoutedRecord& record, IdGen& ids) {
    TreeNode leaf;
    leaf.id = ids.next_node++;
    leaf.level = 0;
    leaf.payload = record.payload;
    leaf.interval = record.anchor;
    leaf.max_key = LeafKey{record.anchor.start, next_seq++};
    leaf.dirty = true;
    NodeId nid = leaf.id;
    nodes.emplace(nid, std::move(leaf));
    dirty_set.insert(nid);
    return nid;
}

void MemTree::recompute_meta(TreeNode& n) {
    if (n.is_leaf() || n.children.empty()) return;
    TemporalAnchor interval = node(n.children.front()).interval;
    LeafKey max_key = node(n.children.front()).max_key;
    for (std::size_t i = 1; i < n.children.size(); ++i) {
        const TreeNode& c = node(n.children[i]);
        interval = interval.united(c.interval);
        if (c.max_key > max_key) max_key = c.max_key;
    }
    n.interval = interval;
    n.max_key = max_key;
}

void MemTree::recompute_meta_upward(NodeId from) {
    NodeId cur = from;
    while (cur != 0) {
        TreeNode& n = node(cur);
        recompute_meta(n);
        cur = n.parent;
    }
}

std::size_t MemTree::mark_dirty_ancestors(NodeId leaf) {
    std::size_t newly = 0;
    NodeId cur = leaf;
    while (cur != 0) {
        TreeNode& n = node(cur);
        n.dirty = true;
        if (dirty_set.insert(cur).second) ++newly;
        cur = n.parent;
    }
    return newly;
}

// One overflowed node: k+1 children, `new_pos` is the index of the child that
// was structurally added. End positions split off just the new child so the
// kept node's child set (and summary) stays untouched; middle positions first
// try shedding an edge child to an adjacent non-full sibling (no new node, no
// cascade), then split evenly and dirty both halves.
void MemTree::split_overflowed(NodeId start, IdGen& ids) {
    NodeId cur = start;
    while (cur != 0 && node(cur).children.size() > static_cast<std::size_t>(k)) {
        TreeNode& x = node(cur);
        const std::size_t total = x.children.size();

        // Locate the structurally newest child: the one with the largest
        // insertion seq among direct children is the arrival of this batch
        // step (seq is globally monotone within the tree).
        std::size_t new_pos = 0;
        for (std::size_t i = 1; i < total; ++i) {
            if (node(x.children[i]).max_key.seq > node(x.children[new_pos]).max_key.seq) new_pos = i;
        }

        if (new_pos != 0 && new_pos != total - 1 && x.parent != 0) {
            TreeNode& parent = node(x.parent);
            auto at = std::find(parent.children.begin(), parent.children.end(), cur);
            std::size_t idx = static_cast<std::size_t>(at - parent.children.begin());
            NodeId left = idx > 0 ? parent.children[idx - 1] : 0;
            NodeId right = idx + 1 < parent.children.size() ? parent.children[idx + 1] : 0;
            if (left != 0 && node(left).children.size() < static_cast<std::size_t>(k)) {
                NodeId shed = x.children.front();
                x.children.erase(x.children.begin());
                node(left).children.push_back(shed);
                node(shed).parent = left;
                recompute_meta(node(left));
                recompute_meta(x);
                x.dirty = true;
                dirty_set.insert(cur);
                node(left).dirty = true;
                dirty_set.insert(left);
                return;
            }
            if (right != 0 && node(right).children.size() < static_cast<std::size_t>(k)) {
                NodeId shed = x.children.back();
                x.children.pop_back();
                auto& rc = node(right).children;
                rc.insert(rc.begin(), shed);
                node(shed).parent = right;
                recompute_meta(node(right));
                recompute_meta(x);
                x.dirty = true;
                dirty_set.insert(cur);
                node(right).dirty = true;
                dirty_set.insert(right);
                return;
            }
        }

        std::vector<NodeId> kept, moved;
        bool sibling_before = false;
        bool even_split = false;
        if (new_pos == total - 1) {  // suffix: keep original set intact
            kept.assign(x.children.begin(), x.children.end() - 1);
            moved.assign(x.children.end() - 1, x.children.end());
        } else if (new_pos == 0) {  // prefix
            kept.assign(x.children.begin() + 1, x.children.end());
            moved.assign(x.children.begin(), x.children.begin() + 1);
            sibling_before = true;
        } else {
            even_split = true;
            std::size_t left = (total + 1) / 2;
            kept.assign(x.children.begin(), x.children.begin() + left);
            moved.assign(x.children.begin() + left, x.children.end());
        }

        TreeNode sibling;
        sibling.id = ids.next_node++;
        sibling.level = x.level;
        sibling.children = moved;
        sibling.dirty = true;
        NodeId sibling_id = sibling.id;

        x.children = kept;
        for (NodeId c : moved) node(c).parent = sibling_id;
        nodes.emplace(sibling_id, std::move(sibling));
        dirty_set.insert(sibling_id);
        recompute_meta(node(sibling_id));
        recompute_meta(node(cur));
        if (even_split) {
            node(cur).dirty = true;
            dirty_set.insert(cur);
        }

        NodeId parent_id = node(cur).parent;
        if (parent_id == 0) {
            TreeNode new_root;
            new_root.id = ids.next_node++;
            new_root.level = node(cur).level + 1;
            new_root.children = sibling_before ? std::vector<NodeId>{sibling_id, cur}
                                               : std::vector<NodeId>{cur, sibling_id};
            new_root.dirty = true;
            NodeId root_id = new_root.id;
            nodes.emplace(root_id, std::move(new_root));
            dirty_set.insert(root_id);
            node(cur).parent = root_id;
            node(sibling_id).parent = root_id;
            recompute_meta(node(root_id));
            root = root_id;
            return;
        }

        TreeNode& parent = node(parent_id);
        auto at = std::find(parent.children.begin(), parent.children.end(), cur);
        parent.children.insert(sibling_before ? at : at + 1, sibling_id);
        node(sibling_id).parent = parent_id;
        cur = parent_id;
    }
}

NodeId MemTree::insert_leaf(const RoutedRecord& record, IdGen& ids, PlacementMap& placement) {
    NodeId leaf_id = make_leaf(record, ids);
    const LeafKey key = node(leaf_id).max_key;

    if (root == 0) {
        root = leaf_id;
        leaf_count = 1;
        placement.add(record.payload, LeafLocation{id, leaf_id});
        return leaf_id;
    }

    if (node(root).is_leaf()) {
        NodeId old_leaf = root;
        TreeNode parent;
        parent.id = ids.next_node++;
        parent.level = 1;
        parent.dirty = true;
        parent.children = node(old_leaf).max_key < key ? std::vector<NodeId>{old_leaf, leaf_id}
                                                       : std::vector<NodeId>{leaf_id, old_leaf};
        NodeId parent_id = parent.id;
        nodes.emplace(parent_id, std::move(parent));
        dirty_set.insert(parent_id);
        node(old_leaf).parent = parent_id;
        node(leaf_id).parent = parent_id;
        root = parent_id;
        recompute_meta(node(parent_id));
        ++leaf_count;
        placement.add(record.payload, LeafLocation{id, leaf_id});
        mark_dirty_ancestors(leaf_id);
        return leaf_id;
    }

    // Descend to the level-1 node that should own the key.
    NodeId cur = root;
    while (node(cur).level > 1) {
        const auto& ch = node(cur).children;
        NodeId next = ch.back();
        for (NodeId c : ch) {
            if (!(node(c).max_key < key)) {
                next = c;
                break;
            }
        }
        cur = next;
    }

    auto& leaves = node(cur).children;
    auto pos = leaves.begin();
    while (pos != leaves.end() && node(*pos).max_key < key) ++pos;
    leaves.insert(pos, leaf_id);
    node(leaf_id).parent = cur;
    ++leaf_count;
    placement.add(record.payload, LeafLocation{id, leaf_id});

    recompute_meta_upward(cur);
    split_overflowed(cur, ids);
    mark_dirty_ancestors(leaf_id);
    return leaf_id;
}

MemTree::RemovalResult MemTree::remove_leaves(const std::set<NodeId>& leaves,
                                              PlacementMap& placement) {
    RemovalResult result;
    for (NodeId leaf_id : leaves) {
        auto it = nodes.find(leaf_id);
        if (it == nodes.end() || !it->second.is_leaf()) continue;

        placement.remove(it->second.payload, LeafLocation{id, leaf_id});
        dirty_set.erase(leaf_id);
        NodeId parent_id = it->second.parent;
        nodes.erase(it);
        result.removed_nodes.push_back(leaf_id);
        ++result.leaves_removed;
        --leaf_count;

        if (parent_id == 0) {  // leaf was the root
            root = 0;
            continue;
        }

        NodeId cur = parent_id;
        NodeId child = leaf_id;
        while (cur != 0) {
            TreeNode& n = node(cur);
            auto at = std::find(n.children.begin(), n.children.end(), child);
            if (at != n.children.end()) n.children.erase(at);
            if (!n.children.empty()) break;
            NodeId up = n.parent;
            dirty_set.erase(cur);
            nodes.erase(cur);
            result.removed_nodes.push_back(cur);
            if (up == 0) root = 0;
            child = cur;
            cur = up;
        }
        // Surviving ancestors lost content: recompute intervals, mark dirty.
        if (cur != 0) {
            recompute_meta_upward(cur);
            NodeId walk = cur;
            while (walk != 0) {
                TreeNode& n = node(walk);
                n.dirty = true;
                dirty_set.insert(walk);
                walk = n.parent;
            }
        }
    }

    while (root != 0 && !node(root).is_leaf() && node(root).children.size() == 1) {
        NodeId child = node(root).children.front();
        dirty_set.erase(root);
        nodes.erase(root);
        result.removed_nodes.push_back(root);
        node(child).parent = 0;
        root = child;
    }

    result.tree_empty = root == 0;
    return result;
}

bool MemTree::needs_rebuild() const {
    if (root == 0) return false;
    return !within_balance_bound();
}

std::vector<NodeId> MemTree::rebuild(IdGen& ids) {
    std::vector<NodeId> ordered = leaves_in_order();
    std::vector<NodeId> removed;
    for (auto& [nid, n] : nodes) {
        if (!n.is_leaf()) removed.push_back(nid);
    }
    for (NodeId nid : removed) {
        nodes.erase(nid);
        dirty_set.erase(nid);
    }
    if (ordered.empty()) {
        root = 0;
        return removed;
    }

    std::vector<NodeId> level_nodes = ordered;
    int level = 0;
    while (level_nodes.size() > 1) {
        ++level;
        std::vector<NodeId> parents;
        for (std::size_t i = 0; i < level_nodes.size(); i += static_cast<std::size_t>(k)) {
            std::size_t end = std::min(level_nodes.size(), i + static_cast<std::size_t>(k));
            TreeNode parent;
            parent.id = ids.next_node++;
            parent.level = level;
            parent.children.assign(level_nodes.begin() + i, level_nodes.begin() + end);
            parent.dirty = true;
            NodeId pid = parent.id;
            nodes.emplace(pid, std::move(parent));
            dirty_set.insert(pid);
            for (NodeId c : node(pid).children) node(c).parent = pid;
            recompute_meta(node(pid));
            parents.push_back(pid);
        }
        level_nodes = std::move(parents);
    }
    root = level_nodes.front();
    node(root).parent = 0;
    return removed;
}

void MemTree::collect_leaves(NodeId n, std::vector<NodeId>& out) const {
    const TreeNode& nd = node(n);
    if (nd.is_leaf()) {
        out.push_back(n);
        return;
    }
    for (NodeId c : nd.children) collect_leaves(c, out);
}

std::vector<NodeId> MemTree::leaves_in_order() const {
    std::vector<NodeId> out;
    if (root != 0) collect_leaves(root, out);
    return out;
}

void MemTree::check_invariants() const {
    if (root == 0) {
        if (leaf_count != 0 || !nodes.empty())
            throw PreconditionError("empty tree with leftover nodes");
        return;
    }
    if (node(root).parent != 0) throw PreconditionError("root has a parent");

    std::size_t leaves_seen = 0;
    for (const auto& [nid, n] : nodes) {
        if (n.is_leaf()) {
            ++leaves_seen;
            continue;
        }
        if (n.children.empty() || n.children.size() > static_cast<std::size_t>(k))
            throw PreconditionError("child count out of range on node " + std::to_string(nid));
        TemporalAnchor expect = node(n.children.front()).interval;
        LeafKey prev_key = node(n.children.front()).max_key;
        for (std::size_t i = 0; i < n.children.size(); ++i) {
            const TreeNode& c = node(n.children[i]);
            if (c.parent != nid) throw PreconditionError("broken parent link");
            if (c.level != n.level - 1) throw PreconditionError("level mismatch");
            if (i > 0) {
                if (!(prev_key < c.max_key)) throw PreconditionError("children out of key order");
                expect = expect.united(c.interval);
                prev_key = c.max_key;
            }
        }
        if (!(expect == n.interval))
            throw PreconditionError("interval not the union of children on node " + std::to_string(nid));
    }
    if (leaves_seen != leaf_count) throw PreconditionError("leaf_count out of sync");

    std::vector<NodeId> ordered = leaves_in_order();
    if (ordered.size() != leaf_count) throw PreconditionError("unreachable leaves");
    for (std::size_t i = 1; i < ordered.size(); ++i) {
        if (node(ordered[i - 1]).interval.start > node(ordered[i]).interval.start)
            throw PreconditionError("leaf anchors out of temporal order");
        if (!(node(ordered[i - 1]).max_key < node(ordered[i]).max_key))
            throw PreconditionError("leaf keys out of order");
    }
    if (!within_balance_bound())
        throw PreconditionError("edge height " + std::to_string(edge_height()) +
                                " exceeds ceil(log_k n)+1 = " +
                                std::to_string(ceil_log(k, leaf_count) + 1) + " at n=" +
                                std::to_string(leaf_count));
}

void FlushStats::merge_from(const FlushStats& other) {
    structural_inserts += other.structural_inserts;
    trees_touched += other.trees_touched;
    nodes_refreshed += other.nodes_refreshed;
    for (const auto& [level, count] : other.refreshed_by_level) refreshed_by_level[level] += count;
    summarizer_calls += other.summarizer_calls;
    embedder_calls += other.embedder_calls;
    passthrough_refreshes += other.passthrough_refreshes;
    max_dependency_depth = std::max(max_dependency_depth, other.max_dependency_depth);
    structural_ms += other.structural_ms;
    summary_ms += other.summary_ms;
    embed_ms += other.embed_ms;
    errors.insert(errors.end(), other.errors.begin(), other.errors.end());
}

std::size_t dependency_depth(const FlushStats& stats) {
    return stats.max_dependency_depth;
}

namespace {

struct RefreshTask {
    MemTree* tree = nullptr;
    NodeId node = 0;
    bool skipped = false;  // dirty child failed earlier; retry next flush
    bool failed = false;
    bool is_call = false;
    std::string error;
    std::string summary;
};

struct EmbedTask {
    MemTree* tree = nullptr;
    NodeId node = 0;
    bool failed = false;
    std::string error;
    std::vector<float> vector;
};

}  // namespace

FlushStats flush_trees(const std::vector<MemTree*>& trees, Summarizer& summarizer,
                       Embedder& embedder, const FlushHooks& hooks, int parallelism) {
    FlushStats stats;

    std::vector<MemTree*> ordered = trees;
    std::sort(ordered.begin(), ordered.end(),
              [](const MemTree* a, const MemTree* b) { return a->id < b->id; });
    ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());

    std::map<int, std::vector<std::pair<MemTree*, NodeId>>> by_level;
    for (MemTree* t : ordered) {
        for (NodeId nid : t->dirty_set) by_level[t->node(nid).level].push_back({t, nid});
    }
    if (by_level.empty()) return stats;

    auto t0 = std::chrono::steady_clock::now();
    std::map<NodeId, std::size_t> call_depth;  // node ids are globally unique
    std::vector<std::pair<MemTree*, NodeId>> refreshed;
    std::set<MemTree*> trees_with_refresh;

    for (auto& [level, entries] : by_level) {
        std::vector<RefreshTask> tasks;
        tasks.reserve(entries.size());
        for (auto& [tree, nid] : entries) {
            RefreshTask task;
            task.tree = tree;
            task.node = nid;
            const TreeNode& n = tree->node(nid);
            if (!n.is_leaf()) {
                for (NodeId c : n.children) {
                    if (tree->node(c).dirty) {  // child failed or was skipped below
                        task.skipped = true;
                        break;
                    }
                }
            }
            tasks.push_back(std::move(task));
        }

        parallel_for_each(tasks, parallelism, [&](RefreshTask& task) {
            if (task.skipped) return;
            try {
                const TreeNode& n = task.tree->node(task.node);
                if (n.is_leaf()) {
                    std::string text = hooks.payload_text(n.payload);
                    if (task.tree->family() == ScopeFamily::session) {
                        task.summary = summarizer.summarize({text}, n.interval);
                        task.is_call = true;
                    } else {
                        task.summary = std::move(text);  // passthrough
                    }
                } else if (n.children.size() == 1) {
                    task.summary = *task.tree->node(n.children.front()).summary;  // pass-up
                } else {
                    std::vector<std::string> texts;
                    texts.reserve(n.children.size());
                    for (NodeId c : n.children) texts.push_back(*task.tree->node(c).summary);
                    task.summary = summarizer.summarize(texts, n.interval);
                    task.is_call = true;
                }
            } catch (const std::exception& e) {
                task.failed = true;
                task.error = e.what();
            }
        });

        for (RefreshTask& task : tasks) {
            if (task.skipped) continue;
            if (task.failed) {
                stats.errors.push_back(FlushError{task.tree->id, task.node, task.error});
                continue;
            }
            TreeNode& n = task.tree->node(task.node);
            n.summary = std::move(task.summary);
            n.dirty = false;
            task.tree->dirty_set.erase(task.node);

            std::size_t depth = task.is_call ? 1 : 0;
            std::size_t child_max = 0;
            for (NodeId c : n.children) {
                auto it = call_depth.find(c);
                if (it != call_depth.end()) child_max = std::max(child_max, it->second);
            }
            depth += child_max;
            call_depth[task.node] = depth;
            stats.max_dependency_depth = std::max(stats.max_dependency_depth, depth);

            ++stats.nodes_refreshed;
            ++stats.refreshed_by_level[level];
            if (task.is_call) ++stats.summarizer_calls;
            else ++stats.passthrough_refreshes;
            refreshed.push_back({task.tree, task.node});
            trees_with_refresh.insert(task.tree);
        }
    }
    stats.summary_ms = ms_since(t0);

    auto t1 = std::chrono::steady_clock::now();
    std::vector<EmbedTask> embeds;
    embeds.reserve(refreshed.size());
    for (auto& [tree, nid] : refreshed) embeds.push_back(EmbedTask{tree, nid});
    parallel_for_each(embeds, parallelism, [&](EmbedTask& task) {
        try {
            task.vector = embedder.embed(*task.tree->node(task.node).summary);
        } catch (const std::exception& e) {
            task.failed = true;
            task.error = e.what();
        }
    });
    for (EmbedTask& task : embeds) {
        TreeNode& n = task.tree->node(task.node);
        if (task.failed) {
            n.dirty = true;  // retry summary+embedding on next flush
            task.tree->dirty_set.insert(task.node);
            stats.errors.push_back(FlushError{task.tree->id, task.node, task.error});
            continue;
        }
        n.embedding = std::move(task.vector);
        ++stats.embedder_calls;
        if (hooks.node_row) hooks.node_row(*task.tree, n);
    }
    stats.embed_ms = ms_since(t1);

    stats.trees_touched = trees_with_refresh.size();
    if (hooks.root_row) {
        for (MemTree* t : ordered) {
            if (t->root == 0) continue;
            const TreeNode& r = t->node(t->root);
            if (!r.dirty && r.embedding) hooks.root_row(*t);
        }
    }
    return stats;
}

FlushStats apply_updates(const std::vector<RoutedRecord>& routed, TreeUpdateContext& ctx) {
    FlushStats agg;
    auto t0 = std::chrono::steady_clock::now();

    std::map<ScopeId, std::vector<const RoutedRecord*>> groups;
    for (const RoutedRecord& r : routed) groups[r.scope].push_back(&r);

    std::vector<MemTree*> touched;
    for (auto& [scope, records] : groups) {
        MemTree& tree = ctx.tree_for(scope);
        touched.push_back(&tree);
        std::stable_sort(records.begin(), records.end(),
                         [](const RoutedRecord* a, const RoutedRecord* b) {
                             return a->anchor.start < b->anchor.start;
                         });
        for (const RoutedRecord* r : records) {
            tree.insert_leaf(*r, *ctx.ids, *ctx.placement);
            ++agg.structural_inserts;
            if (ctx.eager_flush) {
                if (tree.needs_rebuild()) {
                    for (NodeId removed : tree.rebuild(*ctx.ids))
                        if (ctx.hooks.node_row_remove) ctx.hooks.node_row_remove(removed);
                }
                FlushStats fs = flush_trees({&tree}, *ctx.summarizer, *ctx.embedder, ctx.hooks,
                                            ctx.parallelism);
                agg.merge_from(fs);
            }
        }
    }
    agg.structural_ms = ms_since(t0);

    if (!ctx.eager_flush) {
        for (MemTree* t : touched) {
            if (t->needs_rebuild()) {
                for (NodeId removed : t->rebuild(*ctx.ids))
                    if (ctx.hooks.node_row_remove) ctx.hooks.node_row_remove(removed);
            }
        }
        FlushStats fs =
            flush_trees(touched, *ctx.summarizer, *ctx.embedder, ctx.hooks, ctx.parallelism);
        double structural_ms = agg.structural_ms;
        agg.merge_from(fs);
        agg.structural_ms = structural_ms;
    }
    agg.trees_touched = touched.size();
    return agg;
}

}  // namespace memforest
