#include "memforest/retrieval.hpp"

#include <algorithm>

#include "memforest/errors.hpp"

namespace memforest {

RetrieveMode retrieve_mode_from_string(const std::string& s) {
    if (s == "flat") return RetrieveMode::flat;
    if (s == "root-only") return RetrieveMode::root_only;
    if (s == "emb") return RetrieveMode::emb;
    if (s == "emb+planner") return RetrieveMode::emb_planner;
    if (s == "llm") return RetrieveMode::llm;
    if (s == "llm+planner") return RetrieveMode::llm_planner;
    throw ConfigError("unknown retrieval mode: " + s +
                      " (expected flat|root-only|emb|emb+planner|llm|llm+planner)");
}

const char* to_string(RetrieveMode m) {
    switch (m) {
        case RetrieveMode::flat: return "flat";
        case RetrieveMode::root_only: return "root-only";
        case RetrieveMode::emb: return "emb";
        case RetrieveMode::emb_planner: return "emb+planner";
        case RetrieveMode::llm: return "llm";
        case RetrieveMode::llm_planner: return "llm+planner";
    }
    return "emb";
}

const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::root: return "root";
        case Provenance::fact: return "fact";
        case Provenance::both: return "both";
    }
    return "root";
}

namespace {

double combine_scores(const RetrievalConfig& cfg, bool has_root, double root, bool has_fact,
                      double fact) {
    switch (cfg.combiner) {
        case ScoreCombiner::max:
            if (!has_root) return fact;
            if (!has_fact) return root;
            return std::max(root, fact);
        case ScoreCombiner::mean:
            if (!has_root) return fact;
            if (!has_fact) return root;
            return (root + fact) / 2.0;
        case ScoreCombiner::weighted:
            return cfg.combiner_alpha * (has_root ? root : 0.0) +
                   (1.0 - cfg.combiner_alpha) * (has_fact ? fact : 0.0);
    }
    return std::max(root, fact);
}

}  // namespace

std::vector<RecallCandidate> forest_recall(const MemoryStore& store,
                                           const std::vector<float>& query_vec,
                                           const RetrievalConfig& cfg) {
    struct Signals {
        bool has_root = false;
        double root = 0.0;
        bool has_fact = false;
        double fact = 0.0;
    };
    std::map<TreeId, Signals> pool;

    for (const SearchHit& hit : store.root_index.search(query_vec, cfg.k_root)) {
        Signals& s = pool[hit.key];
        s.has_root = true;
        s.root = hit.score;
    }
    for (const SearchHit& hit : store.fact_index.search(query_vec, cfg.k_fact)) {
        for (const LeafLocation& loc : store.placement.lookup(PayloadRef::fact(hit.key))) {
            Signals& s = pool[loc.tree];
            if (!s.has_fact || hit.score > s.fact) {
                s.has_fact = true;
                s.fact = hit.score;
            }
        }
    }

    std::vector<RecallCandidate> out;
    for (const auto& [tree, s] : pool) {
        RecallCandidate c;
        c.tree = tree;
        c.root_score = s.root;
        c.best_fact_score = s.fact;
        c.combined = combine_scores(cfg, s.has_root, s.root, s.has_fact, s.fact);
        c.provenance = s.has_root && s.has_fact ? Provenance::both
                       : s.has_root             ? Provenance::root
                                                : Provenance::fact;
        out.push_back(c);
    }
    std::sort(out.begin(), out.end(), [](const RecallCandidate& a, const RecallCandidate& b) {
        if (a.combined != b.combined) return a.combined > b.combined;
        return a.tree < b.tree;
    });
    if (out.size() > static_cast<std::size_t>(cfg.k_trees)) out.resize(cfg.k_trees);
    return out;
}

namespace {

double node_score(const TreeNode& n, const std::vector<float>& query_vec) {
    if (!n.embedding) return -1.0;
    return cosine(*n.embedding, query_vec);
}

void rank_leaves(BrowseTrace& trace, int leaf_budget) {
    std::sort(trace.leaves.begin(), trace.leaves.end(), [&](NodeId a, NodeId b) {
        double sa = trace.leaf_scores.at(a), sb = trace.leaf_scores.at(b);
        if (sa != sb) return sa > sb;
        return a < b;
    });
    if (trace.leaves.size() > static_cast<std::size_t>(leaf_budget))
        trace.leaves.resize(leaf_budget);
}

}  // namespace

BrowseTrace browse_embedding(const MemTree& tree, const std::vector<float>& query_vec,
                             int beam_width, int leaf_budget) {
    BrowseTrace trace;
    trace.tree = tree.id;
    if (tree.root == 0 || beam_width < 1 || leaf_budget < 1) return trace;

    std::vector<NodeId> frontier{tree.root};
    trace.visited.push_back(tree.root);
    while (!frontier.empty()) {
        std::vector<NodeId> next;
        for (NodeId nid : frontier) {
            const TreeNode& n = tree.node(nid);
            if (n.is_leaf()) {
                trace.leaves.push_back(nid);
                trace.leaf_scores[nid] = node_score(n, query_vec);
                continue;
            }
            BrowseStep step;
            step.node = nid;
            std::vector<std::pair<double, NodeId>> scored;
            for (NodeId c : n.children) {
                double s = node_score(tree.node(c), query_vec);
                step.scores[c] = s;
                scored.push_back({s, c});
            }
            std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            for (std::size_t i = 0; i < scored.size() && i < static_cast<std::size_t>(beam_width);
                 ++i) {
                step.chosen.push_back(scored[i].second);
                next.push_back(scored[i].second);
                trace.visited.push_back(scored[i].second);
            }
            trace.steps.push_back(std::move(step));
        }
        frontier = std::move(next);
    }
    rank_leaves(trace, leaf_budget);
    return trace;
}

BrowseTrace browse_llm(const MemTree& tree, const std::string& subquery, Chooser& chooser,
                       const std::vector<float>& subquery_vec, int beam_width, int leaf_budget,
                       int step_budget) {
    BrowseTrace trace;
    trace.tree = tree.id;
    trace.subquery = subquery;
    if (tree.root == 0 || beam_width < 1 || leaf_budget < 1) return trace;
    if (step_budget <= 0) step_budget = 2 * tree.height();

    int calls = 0;
    bool stopped = false;
    std::vector<NodeId> frontier{tree.root};
    trace.visited.push_back(tree.root);
    while (!frontier.empty() && !stopped) {
        std::vector<NodeId> next;
        for (NodeId nid : frontier) {
            const TreeNode& n = tree.node(nid);
            if (n.is_leaf()) {
                trace.leaves.push_back(nid);
                trace.leaf_scores[nid] = node_score(n, subquery_vec);
                continue;
            }
            if (stopped || calls >= step_budget) {
                stopped = true;
                continue;
            }

            BrowseStep step;
            step.node = nid;
            ChooseRequest request;
            request.subquery = subquery;
            request.beam_width = static_cast<std::size_t>(beam_width);
            for (NodeId c : n.children) {
                const TreeNode& child = tree.node(c);
                request.children.push_back(ChildDescriptor{
                    c, child.summary.value_or(""), child.interval, child.is_leaf()});
            }

            std::vector<std::size_t> picks;
            bool fall_back = false;
            try {
                ++calls;
                ChooseResponse resp = chooser.choose(request);
                if (resp.stop) {
                    step.stopped = true;
                    stopped = true;
                    trace.steps.push_back(std::move(step));
                    continue;
                }
                for (std::size_t idx : resp.chosen) {
                    if (idx >= request.children.size()) {
                        fall_back = true;
                        break;
                    }
                    if (std::find(picks.begin(), picks.end(), idx) == picks.end())
                        picks.push_back(idx);
                }
                if (picks.empty()) fall_back = true;
                if (picks.size() > static_cast<std::size_t>(beam_width)) picks.resize(beam_width);
            } catch (const std::exception&) {
                // Chooser port failure: embedding descent takes over the tree.
                BrowseTrace fallback =
                    browse_embedding(tree, subquery_vec, beam_width, leaf_budget);
                fallback.subquery = subquery;
                fallback.used_embedding_fallback = true;
                return fallback;
            }

            if (fall_back) {
                step.chooser_fallback = true;
                std::vector<std::pair<double, NodeId>> scored;
                for (NodeId c : n.children) {
                    double s = node_score(tree.node(c), subquery_vec);
                    step.scores[c] = s;
                    scored.push_back({s, c});
                }
                std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                    if (a.first != b.first) return a.first > b.first;
                    return a.second < b.second;
                });
                picks.clear();
                for (std::size_t i = 0;
                     i < scored.size() && i < static_cast<std::size_t>(beam_width); ++i) {
                    auto at = std::find(n.children.begin(), n.children.end(), scored[i].second);
                    picks.push_back(static_cast<std::size_t>(at - n.children.begin()));
                }
            }

            for (std::size_t idx : picks) {
                NodeId c = n.children[idx];
                step.chosen.push_back(c);
                next.push_back(c);
                trace.visited.push_back(c);
            }
            trace.steps.push_back(std::move(step));
        }
        frontier = std::move(next);
    }
    rank_leaves(trace, leaf_budget);
    return trace;
}

std::map<TreeId, std::string> plan_subqueries(
    const std::string& query, const std::vector<std::pair<TreeId, std::string>>& recalled_roots,
    Planner* planner, bool* fallback_flag) {
    std::map<TreeId, std::string> out;
    for (const auto& [tree, summary] : recalled_roots) out[tree] = query;
    if (!planner || recalled_roots.empty()) return out;
    try {
        std::map<TreeId, std::string> planned = planner->plan(query, recalled_roots);
        for (auto& [tree, subquery] : planned) {
            if (out.count(tree) && !subquery.empty()) out[tree] = subquery;
        }
    } catch (const std::exception&) {
        if (fallback_flag) *fallback_flag = true;  // keep identity subqueries
    }
    return out;
}

AnswerContext retrieve(const MemoryStore& store, const std::string& query, RetrieveMode mode,
                       Backends& backends, const RetrievalConfig& cfg) {
    if (!store.fully_flushed())
        throw PreconditionError("flush pending: store has dirty nodes, flush before querying");

    AnswerContext ctx;
    ctx.query = query;
    ctx.mode = mode;
    ctx.final_top_k = static_cast<std::size_t>(cfg.final_top_k);

    std::vector<float> qvec = backends.embedder->embed(query);

    auto fact_evidence = [&](FactId fid, double score) {
        const CanonicalFact& f = store.fact(fid);
        EvidenceItem item;
        item.text = f.text;
        item.anchor = f.anchor;
        item.source_refs.assign(f.source_refs.begin(), f.source_refs.end());
        item.score = score;
        item.payload = PayloadRef::fact(fid);
        return item;
    };

    if (mode == RetrieveMode::flat) {
        for (const SearchHit& hit : store.fact_index.search(qvec, ctx.final_top_k))
            ctx.evidence.push_back(fact_evidence(hit.key, hit.score));
        for (const EvidenceItem& e : ctx.evidence) ctx.evidence_chars += e.text.size();
        return ctx;
    }

    ctx.candidates = forest_recall(store, qvec, cfg);

    if (mode == RetrieveMode::root_only) {
        for (const RecallCandidate& c : ctx.candidates) {
            const MemTree& tree = *store.find_tree(c.tree);
            const TreeNode& root = tree.node(tree.root);
            EvidenceItem item;
            item.text = root.summary.value_or("");
            item.anchor = root.interval;
            item.score = c.combined;
            item.tree = c.tree;
            ctx.evidence.push_back(std::move(item));
        }
        if (ctx.evidence.size() > ctx.final_top_k) ctx.evidence.resize(ctx.final_top_k);
        for (const EvidenceItem& e : ctx.evidence) ctx.evidence_chars += e.text.size();
        return ctx;
    }

    const bool with_planner = mode == RetrieveMode::emb_planner || mode == RetrieveMode::llm_planner;
    const bool llm_browse = mode == RetrieveMode::llm || mode == RetrieveMode::llm_planner;

    std::map<TreeId, std::string> subqueries;
    if (with_planner) {
        std::vector<std::pair<TreeId, std::string>> roots;
        for (const RecallCandidate& c : ctx.candidates) {
            const MemTree& tree = *store.find_tree(c.tree);
            roots.push_back({c.tree, tree.node(tree.root).summary.value_or("")});
        }
        subqueries = plan_subqueries(query, roots, backends.planner.get(), &ctx.planner_fallback);
    } else {
        for (const RecallCandidate& c : ctx.candidates) subqueries[c.tree] = query;
    }

    struct PooledLeaf {
        TreeId tree;
        NodeId node;
        PayloadRef payload;
        double score;  // against the original query
    };
    std::vector<PooledLeaf> pooled;

    for (const RecallCandidate& c : ctx.candidates) {
        const MemTree& tree = *store.find_tree(c.tree);
        const std::string& subquery = subqueries.at(c.tree);
        std::vector<float> svec = subquery == query ? qvec : backends.embedder->embed(subquery);

        BrowseTrace trace;
        if (llm_browse) {
            trace = browse_llm(tree, subquery, *backends.chooser, svec, cfg.beam_width,
                               cfg.leaf_budget, cfg.step_budget);
        } else {
            trace = browse_embedding(tree, svec, cfg.beam_width, cfg.leaf_budget);
            trace.subquery = subquery;
        }
        for (NodeId leaf : trace.leaves) {
            const TreeNode& n = tree.node(leaf);
            // Final rerank is against the original query, not the subquery.
            double score = n.embedding ? cosine(*n.embedding, qvec) : -1.0;
            pooled.push_back(PooledLeaf{c.tree, leaf, n.payload, score});
        }
        ctx.traces.push_back(std::move(trace));
    }

    std::sort(pooled.begin(), pooled.end(), [](const PooledLeaf& a, const PooledLeaf& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.tree != b.tree) return a.tree < b.tree;
        return a.node < b.node;
    });
    std::set<PayloadRef> seen;
    for (const PooledLeaf& leaf : pooled) {
        if (ctx.evidence.size() >= ctx.final_top_k) break;
        if (!seen.insert(leaf.payload).second) continue;  // same payload via another tree
        if (leaf.payload.kind == PayloadRef::Kind::fact) {
            EvidenceItem item = fact_evidence(leaf.payload.id, leaf.score);
            item.tree = leaf.tree;
            ctx.evidence.push_back(std::move(item));
        } else {
            const DialogueCell& cell = store.cell(leaf.payload.id);
            EvidenceItem item;
            item.text = cell.text;
            item.anchor = cell.anchor;
            item.source_refs = {SourceRef{cell.session_id, cell.first_turn, cell.last_turn}};
            item.score = leaf.score;
            item.payload = leaf.payload;
            item.tree = leaf.tree;
            ctx.evidence.push_back(std::move(item));
        }
    }
    for (const EvidenceItem& e : ctx.evidence) ctx.evidence_chars += e.text.size();
    return ctx;
}

}  // namespace memforest
