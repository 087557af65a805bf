#pragma once

// Post-build maintenance: merging materialized stores, targeted session
// deletion, and re-materialization of derived artifacts under new settings.
// Persistent state is edited first; only affected derived artifacts refresh.

#include <memory>
#include <optional>
#include <string>

#include "memforest/ports.hpp"
#include "memforest/store.hpp"

namespace memforest {

struct MergeReport {
    std::size_t facts_copied = 0;
    std::size_t facts_merged = 0;  // canonical_key collisions reconciled
    std::size_t cells_copied = 0;
    std::size_t sessions_copied = 0;
    std::size_t trees_copied = 0;   // unmatched scopes, zero port calls
    std::size_t trees_merged = 0;   // matched scopes, smaller into larger
    std::size_t scene_clusters_matched = 0;
    std::size_t scene_clusters_copied = 0;
    std::size_t structural_inserts = 0;
    std::size_t leaves_skipped = 0;  // leaves of reconciled facts already placed
    FlushStats flush;
};

struct MergeOutcome {
    std::unique_ptr<MemoryStore> store;
    MergeReport report;
};

// Both inputs must be flushed snapshots with disjoint session ids. Facts
// reconcile by canonical_key; session/entity scopes match by ScopeId, scene
// scopes by centroid cosine >= threshold. Matched trees merge smaller into
// larger; unmatched trees copy verbatim with summaries and embeddings intact.
MergeOutcome merge(const MemoryStore& a, const MemoryStore& b, Backends& backends);

struct DeleteReport {
    std::string session_id;
    bool known = true;
    std::size_t facts_removed = 0;   // sole-source facts
    std::size_t facts_retained = 0;  // shared facts with pruned source refs
    std::size_t cells_removed = 0;
    std::size_t leaves_removed = 0;
    std::size_t trees_dropped = 0;
    FlushStats flush;
};

// Uses the session registry to find the session's facts, cells and leaves.
// Facts with remaining sources survive with pruned refs and recomputed
// anchors; emptied nodes prune upward; surviving ancestors refresh.
DeleteReport delete_session(MemoryStore& store, const std::string& session_id, Backends& backends);

struct RematerializeOptions {
    std::optional<int> branching_factor;  // rebuild tree shapes under new k
    bool refresh_embeddings = false;      // embedder changed
    bool refresh_summaries = false;       // summarizer changed
};

struct RematerializeReport {
    std::size_t trees_rebuilt = 0;
    std::size_t embeddings_refreshed = 0;
    FlushStats flush;
};

// Regenerates selected derived artifacts from persistent state. Never calls
// the extractor; facts and scope assignments are untouched.
RematerializeReport rematerialize(MemoryStore& store, const RematerializeOptions& options,
                                  Backends& backends);

}  // namespace memforest
