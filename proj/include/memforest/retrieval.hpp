#pragma once

// Query path: forest recall over root and fact signals, coarse-to-fine browse
// inside recalled trees (embedding-only or LLM-guided, optionally planner
// targeted), then evidence assembly and rerank against the original query.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memforest/config.hpp"
#include "memforest/ports.hpp"
#include "memforest/store.hpp"

namespace memforest {

enum class RetrieveMode { flat, root_only, emb, emb_planner, llm, llm_planner };

RetrieveMode retrieve_mode_from_string(const std::string& s);
const char* to_string(RetrieveMode m);

enum class Provenance { root, fact, both };

const char* to_string(Provenance p);

struct RecallCandidate {
    TreeId tree = 0;
    double root_score = 0.0;
    double best_fact_score = 0.0;
    double combined = 0.0;
    Provenance provenance = Provenance::root;
};

// C_root = top-K_root root hits; C_fact = owners of top-K_fact fact hits
// mapped back through the placement map; union ranked by the configured
// combiner, ties to the lower tree id.
std::vector<RecallCandidate> forest_recall(const MemoryStore& store,
                                           const std::vector<float>& query_vec,
                                           const RetrievalConfig& cfg);

struct BrowseStep {
    NodeId node = 0;                 // frontier node expanded
    std::vector<NodeId> chosen;      // children descended into
    std::map<NodeId, double> scores; // embedding scores when used
    bool chooser_fallback = false;   // invalid chooser output at this step
    bool stopped = false;
};

struct BrowseTrace {
    TreeId tree = 0;
    std::string subquery;
    std::vector<NodeId> visited;  // root-to-leaf descent order
    std::vector<BrowseStep> steps;
    std::vector<NodeId> leaves;   // ranked by score
    std::map<NodeId, double> leaf_scores;
    bool used_embedding_fallback = false;  // whole-tree chooser failure
};

// Beam descent: every frontier node expands its beam_width best-scoring
// children; collected leaves are ranked by score and cut to leaf_budget.
BrowseTrace browse_embedding(const MemTree& tree, const std::vector<float>& query_vec,
                             int beam_width, int leaf_budget);

// Chooser-guided descent with per-step embedding fallback on invalid output
// and whole-tree embedding fallback when the chooser port fails. step_budget
// caps chooser calls; 0 means 2 * tree height.
BrowseTrace browse_llm(const MemTree& tree, const std::string& subquery, Chooser& chooser,
                       const std::vector<float>& subquery_vec, int beam_width, int leaf_budget,
                       int step_budget);

// One planner call covering all recalled roots. Null planner or failure
// falls back to the original query for every tree (flagged).
std::map<TreeId, std::string> plan_subqueries(
    const std::string& query, const std::vector<std::pair<TreeId, std::string>>& recalled_roots,
    Planner* planner, bool* fallback_flag = nullptr);

struct EvidenceItem {
    std::string text;
    TemporalAnchor anchor;
    std::vector<SourceRef> source_refs;
    double score = 0.0;
    std::optional<PayloadRef> payload;  // unset for root-only evidence
    TreeId tree = 0;
};

struct AnswerContext {
    std::string query;
    RetrieveMode mode = RetrieveMode::emb;
    std::vector<RecallCandidate> candidates;
    std::vector<BrowseTrace> traces;
    std::vector<EvidenceItem> evidence;  // <= final_top_k
    std::size_t final_top_k = 0;
    std::size_t evidence_chars = 0;
    bool planner_fallback = false;
};

// Requires a fully flushed store ("flush pending" otherwise). Deterministic
// given deterministic ports.
AnswerContext retrieve(const MemoryStore& store, const std::string& query, RetrieveMode mode,
                       Backends& backends, const RetrievalConfig& cfg);

}  // namespace memforest
