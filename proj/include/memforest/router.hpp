#pragma once

// Scope routing: assigns canonical facts to session, entity and scene scopes
// without LLM calls. Scene scopes are greedy online threshold clusters over
// fact embeddings; cluster state is centroids plus member ids.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "memforest/ports.hpp"
#include "memforest/substrate.hpp"

namespace memforest {

struct SceneCluster {
    ClusterId cluster_id = 0;
    std::vector<float> centroid;  // unit-normalized mean of member embeddings
    std::set<FactId> members;     // nonempty
    std::string label;            // most frequent topic among members
};

class SceneState {
public:
    double threshold = 0.60;  // cosine join threshold

    const std::map<ClusterId, SceneCluster>& clusters() const { return clusters_; }
    SceneCluster& cluster(ClusterId id);
    const SceneCluster& cluster(ClusterId id) const;
    bool empty() const { return clusters_.empty(); }

    // Greedy assignment: join the best cluster with cosine >= threshold
    // (scanned in creation order, ties to the lowest id) or seed a new one.
    ClusterId assign(FactId fact, const std::vector<float>& embedding,
                     const std::set<std::string>& topics, IdGen& ids);

    // Drops a member, recomputing the centroid; empty clusters are removed.
    // Returns true when the cluster disappeared.
    bool remove_member(ClusterId id, FactId fact);

    void put_cluster(SceneCluster cluster);  // snapshot load / merge
    void recompute(ClusterId id);

    // Member embeddings are kept so centroids can be recomputed exactly.
    std::map<FactId, std::vector<float>> member_vectors;

private:
    std::map<ClusterId, SceneCluster> clusters_;
    std::map<FactId, std::map<std::string, int>> member_topics_;

    friend class SceneStateAccess;
};

ScopeId scene_scope(ClusterId id);
ScopeId entity_scope(const std::string& label);
ScopeId session_scope(const std::string& session_id);

// Normalized entity label: case-fold + trim. No alias resolution.
std::string normalize_entity(const std::string& label);

struct RouteResult {
    std::vector<RoutedRecord> records;
    std::optional<ClusterId> scene;  // unset when scene assignment deferred
    bool scene_deferred = false;     // embedder failure; retry later
};

// Emits one (entity, fact) record per normalized entity label, exactly one
// (scene, fact) record via assign, and one (session, cell) record per not-yet
// routed cell. Performs zero extractor/summarizer calls.
RouteResult route(const CanonicalFact& fact, const std::vector<DialogueCell>& session_cells,
                  std::set<CellId>& cells_already_routed, SceneState& scene_state,
                  Embedder& embedder, IdGen& ids,
                  std::vector<float>* fact_embedding_out = nullptr);

}  // namespace memforest
