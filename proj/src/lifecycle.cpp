#include "memforest/lifecycle.hpp"

#include <algorithm>

#include "memforest/errors.hpp"

namespace memforest {

namespace {

// Fresh-id copy of one tree into `dst`, dropping the leaves in `drop`.
// Summaries and embeddings travel with the nodes, so no port calls happen
// unless dropped leaves dirty their ancestors.
TreeId copy_tree(const MemTree& src, MemoryStore& dst, const ScopeId& scope,
                 const std::map<FactId, FactId>& fact_map,
                 const std::map<CellId, CellId>& cell_map, const std::set<NodeId>& drop,
                 std::size_t& leaves_skipped) {
    MemTree tree;
    tree.id = dst.ids.next_tree++;
    tree.scope = scope;
    tree.k = src.k;
    tree.leaf_count = src.leaf_count;
    tree.next_seq = src.next_seq;

    std::map<NodeId, NodeId> node_map;
    for (const auto& [old_id, node] : src.nodes) node_map[old_id] = dst.ids.next_node++;

    for (const auto& [old_id, node] : src.nodes) {
        TreeNode copy = node;
        copy.id = node_map[old_id];
        copy.parent = node.parent == 0 ? 0 : node_map.at(node.parent);
        for (NodeId& c : copy.children) c = node_map.at(c);
        if (node.is_leaf()) {
            if (node.payload.kind == PayloadRef::Kind::fact)
                copy.payload = PayloadRef::fact(fact_map.at(node.payload.id));
            else
                copy.payload = PayloadRef::cell(cell_map.at(node.payload.id));
        }
        tree.nodes.emplace(copy.id, std::move(copy));
    }
    tree.root = src.root == 0 ? 0 : node_map.at(src.root);
    for (NodeId d : src.dirty_set) tree.dirty_set.insert(node_map.at(d));

    TreeId tid = tree.id;
    dst.trees.emplace(tid, std::move(tree));
    dst.scope_to_tree[scope] = tid;

    MemTree& placed = dst.trees.at(tid);
    std::set<NodeId> to_drop;
    for (NodeId old_leaf : drop) {
        auto it = node_map.find(old_leaf);
        if (it != node_map.end()) to_drop.insert(it->second);
    }
    for (NodeId leaf : placed.leaves_in_order()) {
        if (to_drop.count(leaf)) continue;
        dst.placement.add(placed.node(leaf).payload, LeafLocation{tid, leaf});
    }
    if (!to_drop.empty()) {
        leaves_skipped += to_drop.size();
        // Dropped leaves never entered the placement map; take them out of the
        // structure directly.
        for (NodeId leaf : to_drop) dst.placement.add(placed.node(leaf).payload, {tid, leaf});
        auto removal = placed.remove_leaves(to_drop, dst.placement);
        for (NodeId removed : removal.removed_nodes) dst.node_index.remove(removed);
        if (removal.tree_empty) {
            dst.drop_tree(tid);
            return 0;
        }
    }

    // Derived rows travel with the copied nodes.
    MemTree& final_tree = dst.trees.at(tid);
    for (const auto& [nid, node] : final_tree.nodes) {
        if (node.summary && node.embedding) {
            IndexRow row;
            row.key = nid;
            row.owner = tid;
            row.vector = *node.embedding;
            row.text = *node.summary;
            dst.node_index.upsert(std::move(row));
        }
    }
    if (final_tree.root != 0) {
        const TreeNode& r = final_tree.node(final_tree.root);
        if (r.summary && r.embedding && !r.dirty) {
            IndexRow row;
            row.key = tid;
            row.owner = tid;
            row.vector = *r.embedding;
            row.text = *r.summary;
            dst.root_index.upsert(std::move(row));
        }
    }
    return tid;
}

void recompute_fact_anchor(MemoryStore& store, CanonicalFact& fact) {
    bool any = false;
    TemporalAnchor anchor;
    for (const SourceRef& ref : fact.source_refs) {
        auto sit = store.sessions.find(ref.session_id);
        if (sit == store.sessions.end()) continue;
        std::vector<Turn> span;
        for (const Turn& t : sit->second.turns) {
            if (t.index >= ref.first_turn && t.index <= ref.last_turn) span.push_back(t);
        }
        if (span.empty()) continue;
        TemporalAnchor a = derive_anchor(span);
        anchor = any ? anchor.united(a) : a;
        any = true;
    }
    if (any) fact.anchor = anchor;
}

ClusterId cluster_of_fact(const SceneState& scenes, FactId fact) {
    for (const auto& [cid, cluster] : scenes.clusters()) {
        if (cluster.members.count(fact)) return cid;
    }
    return 0;
}

}  // namespace

MergeOutcome merge(const MemoryStore& a, const MemoryStore& b, Backends& backends) {
    if (!a.fully_flushed() || !b.fully_flushed())
        throw PreconditionError("merge requires flushed snapshots; flush both stores first");
    for (const auto& [sid, s] : b.sessions) {
        if (a.sessions.count(sid))
            throw PreconditionError("merge inputs share session id: " + sid);
    }

    MergeOutcome out;
    out.store = a.clone();
    MemoryStore& dst = *out.store;
    MergeReport& report = out.report;

    // Facts reconcile by canonical_key; colliding facts union their signals.
    std::map<FactId, FactId> fact_map;
    std::set<FactId> collided;  // b facts merged into existing dst facts
    for (const auto& [bfid, bfact] : b.facts) {
        auto hit = dst.fact_by_key.find(bfact.canonical_key);
        if (hit != dst.fact_by_key.end()) {
            CanonicalFact& target = dst.facts.at(hit->second);
            bool text_changed = false;
            if (bfact.anchor.start < target.anchor.start && bfact.text != target.text) {
                target.text = bfact.text;  // earliest-anchored wording wins
                text_changed = true;
            }
            target.anchor = target.anchor.united(bfact.anchor);
            target.source_refs.insert(bfact.source_refs.begin(), bfact.source_refs.end());
            target.entities.insert(bfact.entities.begin(), bfact.entities.end());
            target.topics.insert(bfact.topics.begin(), bfact.topics.end());
            fact_map[bfid] = target.fact_id;
            collided.insert(bfid);
            ++report.facts_merged;
            if (text_changed) {
                dst.pending_fact_rows[target.fact_id] = {};  // re-embed new wording
                for (const LeafLocation& loc : dst.placement.lookup(PayloadRef::fact(target.fact_id))) {
                    MemTree* tree = dst.find_tree(loc.tree);
                    if (tree && tree->nodes.count(loc.leaf)) tree->mark_dirty_ancestors(loc.leaf);
                }
            }
            continue;
        }
        CanonicalFact copy = bfact;
        copy.fact_id = dst.ids.next_fact++;
        fact_map[bfid] = copy.fact_id;
        dst.fact_by_key[copy.canonical_key] = copy.fact_id;
        if (const IndexRow* row = b.fact_index.find(bfid)) {
            IndexRow copied = *row;
            copied.key = copy.fact_id;
            dst.fact_index.put_prenormalized(std::move(copied));
        } else {
            dst.pending_fact_rows[copy.fact_id] = {};
        }
        dst.facts.emplace(copy.fact_id, std::move(copy));
        ++report.facts_copied;
    }

    std::map<CellId, CellId> cell_map;
    for (const auto& [bcid, bcell] : b.cells) {
        DialogueCell copy = bcell;
        copy.cell_id = dst.ids.next_cell++;
        cell_map[bcid] = copy.cell_id;
        dst.cells.emplace(copy.cell_id, std::move(copy));
        ++report.cells_copied;
    }

    // Scene clusters match across stores by centroid cosine; keys are
    // store-local so key equality means nothing here.
    std::map<ClusterId, ClusterId> cluster_map;
    for (const auto& [bcid, bcluster] : b.scenes.clusters()) {
        ClusterId best = 0;
        double best_score = -2.0;
        for (const auto& [acid, acluster] : dst.scenes.clusters()) {
            double s = cosine(bcluster.centroid, acluster.centroid);
            if (s > best_score) {
                best_score = s;
                best = acid;
            }
        }
        // Members that are genuinely new facts here, as (b id, dst id) pairs;
        // reconciled facts already belong to exactly one dst cluster.
        std::vector<std::pair<FactId, FactId>> incoming;
        for (FactId f : bcluster.members) {
            if (collided.count(f)) continue;
            incoming.push_back({f, fact_map.at(f)});
        }
        if (best != 0 && best_score >= dst.scenes.threshold) {
            cluster_map[bcid] = best;
            SceneCluster& target = dst.scenes.cluster(best);
            for (const auto& [orig, mapped] : incoming) {
                target.members.insert(mapped);
                auto vit = b.scenes.member_vectors.find(orig);
                if (vit != b.scenes.member_vectors.end())
                    dst.scenes.member_vectors[mapped] = vit->second;
            }
            dst.scenes.recompute(best);
            ++report.scene_clusters_matched;
        } else if (!incoming.empty()) {
            SceneCluster copy;
            copy.cluster_id = dst.ids.next_cluster++;
            copy.centroid = bcluster.centroid;
            copy.label = bcluster.label;
            cluster_map[bcid] = copy.cluster_id;
            for (const auto& [orig, mapped] : incoming) {
                copy.members.insert(mapped);
                auto vit = b.scenes.member_vectors.find(orig);
                if (vit != b.scenes.member_vectors.end())
                    dst.scenes.member_vectors[mapped] = vit->second;
            }
            ClusterId cid = copy.cluster_id;
            dst.scenes.put_cluster(std::move(copy));
            dst.scenes.recompute(cid);
            ++report.scene_clusters_copied;
        }
    }

    // Trees: matched scopes merge smaller into larger, the rest copy over.
    std::map<TreeId, TreeId> tree_map;  // old (a or b) tree id -> final id
    for (const auto& [btid, btree] : b.trees) {
        ScopeId scope = btree.scope;
        if (scope.family == ScopeFamily::scene) {
            auto cit = cluster_map.find(std::stoull(scope.key));
            if (cit == cluster_map.end()) continue;  // cluster fully collided away
            scope = scene_scope(cit->second);
        }

        // Leaves of reconciled facts are already materialized in dst trees of
        // this scope; inserting them again would duplicate evidence.
        std::set<NodeId> skip_leaves;
        for (NodeId leaf : btree.leaves_in_order()) {
            const TreeNode& n = btree.node(leaf);
            if (n.payload.kind == PayloadRef::Kind::fact && collided.count(n.payload.id))
                skip_leaves.insert(leaf);
        }

        TreeId existing = dst.tree_id_for(scope);
        if (existing == 0) {
            TreeId tid = copy_tree(btree, dst, scope, fact_map, cell_map, skip_leaves,
                                   report.leaves_skipped);
            if (tid != 0) {
                tree_map[btid] = tid;
                ++report.trees_copied;

            }
            continue;
        }

        MemTree& target = dst.trees.at(existing);
        tree_map[btid] = existing;
        std::size_t incoming = btree.leaf_count - skip_leaves.size();
        if (incoming == 0) {
            report.leaves_skipped += skip_leaves.size();
            ++report.trees_merged;
            continue;
        }

        if (target.leaf_count < incoming) {
            // The incoming tree is larger: adopt it and bulk-insert the old
            // leaves instead.
            struct OldLeaf {
                PayloadRef payload;
                TemporalAnchor anchor;
            };
            std::vector<OldLeaf> old_leaves;
            for (NodeId leaf : target.leaves_in_order()) {
                const TreeNode& n = target.node(leaf);
                old_leaves.push_back(OldLeaf{n.payload, n.interval});
                dst.placement.remove(n.payload, LeafLocation{existing, leaf});
            }
            dst.drop_tree(existing);
            TreeId adopted = copy_tree(btree, dst, scope, fact_map, cell_map, skip_leaves,
                                       report.leaves_skipped);
            tree_map[btid] = adopted;
            tree_map[existing] = adopted;
            MemTree& base = dst.trees.at(adopted);
            for (const OldLeaf& l : old_leaves) {
                RoutedRecord r;
                r.scope = scope;
                r.payload = l.payload;
                r.anchor = l.anchor;
                base.insert_leaf(r, dst.ids, dst.placement);
                ++report.structural_inserts;
            }

        } else {
            report.leaves_skipped += skip_leaves.size();
            for (NodeId leaf : btree.leaves_in_order()) {
                if (skip_leaves.count(leaf)) continue;
                const TreeNode& n = btree.node(leaf);
                RoutedRecord r;
                r.scope = scope;
                r.payload = n.payload.kind == PayloadRef::Kind::fact
                                ? PayloadRef::fact(fact_map.at(n.payload.id))
                                : PayloadRef::cell(cell_map.at(n.payload.id));
                r.anchor = n.interval;
                target.insert_leaf(r, dst.ids, dst.placement);
                ++report.structural_inserts;
            }

        }
        ++report.trees_merged;
    }

    // Registry and raw sessions come over with remapped ids.
    for (const auto& [sid, session] : b.sessions) {
        Session copy = session;
        copy.arrival_seq = dst.ids.next_arrival++;
        dst.sessions.emplace(sid, std::move(copy));
        ++report.sessions_copied;
    }
    for (const auto& [sid, artifacts] : b.registry.entries()) {
        SessionArtifacts remapped;
        for (FactId f : artifacts.facts) remapped.facts.insert(fact_map.at(f));
        for (CellId c : artifacts.cells) remapped.cells.insert(cell_map.at(c));
        for (TreeId t : artifacts.trees) {
            auto it = tree_map.find(t);
            if (it != tree_map.end()) remapped.trees.insert(it->second);
        }
        dst.registry.register_session(sid, std::move(remapped));
    }
    // Existing registry entries may reference replaced tree ids.
    for (const auto& [sid, artifacts] : a.registry.entries()) {
        SessionArtifacts fixed = artifacts;
        std::set<TreeId> trees;
        for (TreeId t : fixed.trees) {
            auto it = tree_map.find(t);
            trees.insert(it == tree_map.end() ? t : it->second);
        }
        fixed.trees = std::move(trees);
        dst.registry.register_session(sid, std::move(fixed));
    }

    report.flush = dst.flush(backends);
    return out;
}

DeleteReport delete_session(MemoryStore& store, const std::string& session_id,
                            Backends& backends) {
    DeleteReport report;
    report.session_id = session_id;
    if (!store.registry.contains(session_id)) {
        report.known = false;  // no-op with warning at the CLI layer
        return report;
    }
    SessionArtifacts artifacts = store.registry.lookup(session_id);

    // Split the session's facts into sole-source (doomed) and shared.
    std::set<FactId> doomed;
    for (FactId fid : artifacts.facts) {
        auto it = store.facts.find(fid);
        if (it == store.facts.end()) continue;
        CanonicalFact& fact = it->second;
        bool sole = true;
        for (const SourceRef& ref : fact.source_refs) {
            if (ref.session_id != session_id) {
                sole = false;
                break;
            }
        }
        if (sole) {
            doomed.insert(fid);
            ++report.facts_removed;
        } else {
            std::erase_if(fact.source_refs,
                          [&](const SourceRef& r) { return r.session_id == session_id; });
            recompute_fact_anchor(store, fact);
            ++report.facts_retained;
        }
    }

    // Collect leaf removals per tree: doomed fact leaves plus session cells.
    std::map<TreeId, std::set<NodeId>> removals;
    for (FactId fid : doomed) {
        for (const LeafLocation& loc : store.placement.lookup(PayloadRef::fact(fid)))
            removals[loc.tree].insert(loc.leaf);
    }
    for (CellId cid : artifacts.cells) {
        for (const LeafLocation& loc : store.placement.lookup(PayloadRef::cell(cid)))
            removals[loc.tree].insert(loc.leaf);
    }

    for (const auto& [tid, leaves] : removals) {
        MemTree* tree = store.find_tree(tid);
        if (!tree) continue;
        auto removal = tree->remove_leaves(leaves, store.placement);
        report.leaves_removed += removal.leaves_removed;
        for (NodeId removed : removal.removed_nodes) store.node_index.remove(removed);
        if (removal.tree_empty) {
            store.drop_tree(tid);
            ++report.trees_dropped;
        }
    }

    for (FactId fid : doomed) {
        ClusterId cid = cluster_of_fact(store.scenes, fid);
        if (cid != 0) store.scenes.remove_member(cid, fid);
        auto it = store.facts.find(fid);
        if (it != store.facts.end()) {
            store.fact_by_key.erase(it->second.canonical_key);
            store.facts.erase(it);
        }
        store.fact_index.remove(fid);
        store.pending_fact_rows.erase(fid);
        store.scene_pending.erase(fid);
        store.placement.erase_payload(PayloadRef::fact(fid));
    }
    for (CellId cid : artifacts.cells) {
        if (store.cells.erase(cid) > 0) ++report.cells_removed;
        store.placement.erase_payload(PayloadRef::cell(cid));
    }

    store.sessions.erase(session_id);
    store.registry.erase(session_id);

    report.flush = store.flush(backends);
    return report;
}

RematerializeReport rematerialize(MemoryStore& store, const RematerializeOptions& options,
                                  Backends& backends) {
    RematerializeReport report;

    if (options.branching_factor) {
        int k = *options.branching_factor;
        if (k < 2) throw ConfigError("branching_factor must be >= 2");
        store.config.branching["default"] = k;
        store.config.branching.erase("session");
        store.config.branching.erase("entity");
        store.config.branching.erase("scene");
        for (auto& [tid, tree] : store.trees) {
            if (tree.k == k) continue;
            tree.k = k;
            for (NodeId removed : tree.rebuild(store.ids)) store.node_index.remove(removed);
            ++report.trees_rebuilt;
        }
    }

    if (options.refresh_summaries) {
        for (auto& [tid, tree] : store.trees) {
            for (auto& [nid, node] : tree.nodes) {
                node.dirty = true;
                tree.dirty_set.insert(nid);
            }
        }
    }

    report.flush = store.flush(backends);

    if (options.refresh_embeddings) {
        // Summaries stay; embeddings, index rows and centroids regenerate.
        for (auto& [tid, tree] : store.trees) {
            for (auto& [nid, node] : tree.nodes) {
                if (!node.summary) continue;
                node.embedding = backends.embedder->embed(*node.summary);
                ++report.embeddings_refreshed;
                IndexRow row;
                row.key = nid;
                row.owner = tid;
                row.vector = *node.embedding;
                row.text = *node.summary;
                store.node_index.upsert(std::move(row));
            }
            if (tree.root != 0) {
                const TreeNode& r = tree.node(tree.root);
                if (r.summary && r.embedding) {
                    IndexRow row;
                    row.key = tid;
                    row.owner = tid;
                    row.vector = *r.embedding;
                    row.text = *r.summary;
                    store.root_index.upsert(std::move(row));
                }
            }
        }
        for (auto& [fid, fact] : store.facts) {
            std::vector<float> vec = backends.embedder->embed(fact.text);
            ++report.embeddings_refreshed;
            ClusterId cid = cluster_of_fact(store.scenes, fid);
            if (cid != 0) {
                store.scenes.member_vectors[fid] = vec;
            }
            IndexRow row;
            row.key = fid;
            row.owner = 0;
            row.vector = std::move(vec);
            row.text = fact.text;
            store.fact_index.upsert(std::move(row));
        }
        std::vector<ClusterId> cluster_ids;
        for (const auto& [cid, c] : store.scenes.clusters()) cluster_ids.push_back(cid);
        for (ClusterId cid : cluster_ids) store.scenes.recompute(cid);
    }

    return report;
}

}  // namespace memforest
