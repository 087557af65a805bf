#include "memforest/router.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "memforest/errors.hpp"
#include "memforest/index.hpp"

namespace memforest {

ScopeId scene_scope(ClusterId id) {
    return ScopeId{ScopeFamily::scene, std::to_string(id)};
}

ScopeId entity_scope(const std::string& label) {
    return ScopeId{ScopeFamily::entity, label};
}

ScopeId session_scope(const std::string& session_id) {
    return ScopeId{ScopeFamily::session, session_id};
}

std::string normalize_entity(const std::string& label) {
    std::string out;
    out.reserve(label.size());
    std::size_t begin = 0, end = label.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(label[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(label[end - 1]))) --end;
    for (std::size_t i = begin; i < end; ++i)
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(label[i]))));
    return out;
}

SceneCluster& SceneState::cluster(ClusterId id) {
    auto it = clusters_.find(id);
    if (it == clusters_.end()) throw PreconditionError("unknown scene cluster " + std::to_string(id));
    return it->second;
}

const SceneCluster& SceneState::cluster(ClusterId id) const {
    auto it = clusters_.find(id);
    if (it == clusters_.end()) throw PreconditionError("unknown scene cluster " + std::to_string(id));
    return it->second;
}

void SceneState::put_cluster(SceneCluster cluster) {
    clusters_[cluster.cluster_id] = std::move(cluster);
}

void SceneState::recompute(ClusterId id) {
    SceneCluster& c = cluster(id);
    if (c.members.empty()) return;
    std::vector<double> sum;
    for (FactId f : c.members) {
        auto it = member_vectors.find(f);
        if (it == member_vectors.end()) continue;
        if (sum.empty()) sum.assign(it->second.size(), 0.0);
        for (std::size_t i = 0; i < it->second.size(); ++i) sum[i] += it->second[i];
    }
    if (sum.empty()) return;
    double norm = 0.0;
    for (double v : sum) norm += v * v;
    norm = std::sqrt(norm);
    c.centroid.assign(sum.size(), 0.0f);
    if (norm > 0.0) {
        for (std::size_t i = 0; i < sum.size(); ++i)
            c.centroid[i] = static_cast<float>(sum[i] / norm);
    } else {
        c.centroid[0] = 1.0f;
    }

    // Label = most frequent topic among members, ties to lexicographic first.
    std::map<std::string, int> counts;
    for (FactId f : c.members) {
        auto it = member_topics_.find(f);
        if (it == member_topics_.end()) continue;
        for (const auto& [topic, n] : it->second) counts[topic] += n;
    }
    c.label.clear();
    int best = 0;
    for (const auto& [topic, n] : counts) {
        if (n > best) {
            best = n;
            c.label = topic;
        }
    }
}

ClusterId SceneState::assign(FactId fact, const std::vector<float>& embedding,
                             const std::set<std::string>& topics, IdGen& ids) {
    ClusterId best_id = 0;
    double best_score = -2.0;
    for (const auto& [cid, c] : clusters_) {  // creation order; ties keep lowest id
        double score = cosine(embedding, c.centroid);
        if (score > best_score) {
            best_score = score;
            best_id = cid;
        }
    }

    std::map<std::string, int> topic_counts;
    for (const std::string& t : topics) topic_counts[t] = 1;
    member_vectors[fact] = embedding;
    member_topics_[fact] = std::move(topic_counts);

    if (best_id != 0 && best_score >= threshold) {
        cluster(best_id).members.insert(fact);
        recompute(best_id);
        return best_id;
    }

    SceneCluster fresh;
    fresh.cluster_id = ids.next_cluster++;
    fresh.members.insert(fact);
    ClusterId cid = fresh.cluster_id;
    clusters_.emplace(cid, std::move(fresh));
    recompute(cid);
    return cid;
}

bool SceneState::remove_member(ClusterId id, FactId fact) {
    auto it = clusters_.find(id);
    if (it == clusters_.end()) return false;
    it->second.members.erase(fact);
    member_vectors.erase(fact);
    member_topics_.erase(fact);
    if (it->second.members.empty()) {
        clusters_.erase(it);
        return true;
    }
    recompute(id);
    return false;
}

RouteResult route(const CanonicalFact& fact, const std::vector<DialogueCell>& session_cells,
                  std::set<CellId>& cells_already_routed, SceneState& scene_state,
                  Embedder& embedder, IdGen& ids, std::vector<float>* fact_embedding_out) {
    RouteResult out;

    // Session scope: one record per cell per session, independent of how many
    // facts the session yielded.
    for (const DialogueCell& cell : session_cells) {
        if (!cells_already_routed.insert(cell.cell_id).second) continue;
        RoutedRecord r;
        r.scope = session_scope(cell.session_id);
        r.payload = PayloadRef::cell(cell.cell_id);
        r.anchor = cell.anchor;
        out.records.push_back(std::move(r));
    }

    for (const std::string& label : fact.entities) {
        std::string key = normalize_entity(label);
        if (key.empty()) continue;
        RoutedRecord r;
        r.scope = entity_scope(key);
        r.payload = PayloadRef::fact(fact.fact_id);
        r.anchor = fact.anchor;
        out.records.push_back(std::move(r));
    }

    try {
        std::vector<float> vec = embedder.embed(fact.text);
        if (fact_embedding_out) *fact_embedding_out = vec;
        ClusterId cid = scene_state.assign(fact.fact_id, vec, fact.topics, ids);
        out.scene = cid;
        RoutedRecord r;
        r.scope = scene_scope(cid);
        r.payload = PayloadRef::fact(fact.fact_id);
        r.anchor = fact.anchor;
        out.records.push_back(std::move(r));
    } catch (const TransientBackendError&) {
        out.scene_deferred = true;  // fact stays routed to session/entity only
    }

    return out;
}

}  // namespace memforest
