#pragma once

// Persistent data model: sessions, canonical facts, scopes, dialogue cells,
// placement map and session registry. Everything here is plain value state;
// derived artifacts (summaries, embeddings, index rows) live elsewhere and
// are regenerated from this layer.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "memforest/time.hpp"

namespace memforest {

using FactId = std::uint64_t;
using CellId = std::uint64_t;
using NodeId = std::uint64_t;
using TreeId = std::uint64_t;
using ClusterId = std::uint64_t;

// Content-independent id allocation; never derived from text, so edits do
// not silently alias records.
struct IdGen {
    FactId next_fact = 1;
    CellId next_cell = 1;
    NodeId next_node = 1;
    TreeId next_tree = 1;
    ClusterId next_cluster = 1;
    std::uint64_t next_arrival = 1;

    bool operator==(const IdGen&) const = default;
};

enum class Speaker { user, assistant };

const char* to_string(Speaker s);
Speaker speaker_from_string(const std::string& s);

struct Turn {
    std::string session_id;
    int index = 1;  // 1-based, unique within session
    Speaker speaker = Speaker::user;
    std::string text;
    Instant timestamp = 0;
    TimePrecision precision = TimePrecision::second;
};

struct Session {
    std::string session_id;
    std::vector<Turn> turns;       // nonempty, timestamps nondecreasing by index
    std::uint64_t arrival_seq = 0; // position t in the stream prefix
};

// Reference into a source session: the inclusive turn range the fact or cell
// was derived from.
struct SourceRef {
    std::string session_id;
    int first_turn = 1;
    int last_turn = 1;

    auto operator<=>(const SourceRef&) const = default;
};

struct CanonicalFact {
    FactId fact_id = 0;
    std::string text;  // retrieval-ready statement
    TemporalAnchor anchor;
    std::set<SourceRef> source_refs;  // nonempty
    std::set<std::string> entities;   // normalized labels
    std::set<std::string> topics;
    std::string canonical_key;  // deterministic lexical dedup key
};

enum class ScopeFamily { session, entity, scene };

const char* to_string(ScopeFamily f);
ScopeFamily scope_family_from_string(const std::string& s);

struct ScopeId {
    ScopeFamily family = ScopeFamily::session;
    std::string key;  // session id / entity label / scene cluster id

    auto operator<=>(const ScopeId&) const = default;
};

// Session-tree leaves carry dialogue cells; one cell per extraction chunk so
// tree leaves and extraction units align.
struct DialogueCell {
    CellId cell_id = 0;
    std::string session_id;
    int first_turn = 1;
    int last_turn = 1;
    std::string text;  // raw text of the covered turns
    TemporalAnchor anchor;
};

struct PayloadRef {
    enum class Kind { fact, cell };
    Kind kind = Kind::fact;
    std::uint64_t id = 0;

    static PayloadRef fact(FactId f) { return {Kind::fact, f}; }
    static PayloadRef cell(CellId c) { return {Kind::cell, c}; }

    auto operator<=>(const PayloadRef&) const = default;
};

// One (scope, payload) pair produced by routing, consumed by tree maintenance.
struct RoutedRecord {
    ScopeId scope;
    PayloadRef payload;  // session scopes carry cells, entity/scene carry facts
    TemporalAnchor anchor;
};

struct LeafLocation {
    TreeId tree = 0;
    NodeId leaf = 0;

    auto operator<=>(const LeafLocation&) const = default;
};

// Reverse index from facts/cells to the tree leaves derived from them.
class PlacementMap {
public:
    void add(PayloadRef payload, LeafLocation loc);
    void remove(PayloadRef payload, LeafLocation loc);
    void erase_payload(PayloadRef payload);

    const std::set<LeafLocation>& lookup(PayloadRef payload) const;
    bool contains(PayloadRef payload) const;
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    const std::map<PayloadRef, std::set<LeafLocation>>& entries() const { return entries_; }

    bool operator==(const PlacementMap&) const = default;

private:
    std::map<PayloadRef, std::set<LeafLocation>> entries_;
};

struct SessionArtifacts {
    std::set<FactId> facts;   // facts extracted by the session (new or touched)
    std::set<CellId> cells;   // dialogue cells created
    std::set<TreeId> trees;   // trees touched during materialization

    bool operator==(const SessionArtifacts&) const = default;
};

class SessionRegistry {
public:
    // Idempotent replace: re-registration swaps the artifact sets atomically.
    void register_session(const std::string& session_id, SessionArtifacts artifacts);
    void erase(const std::string& session_id);

    bool contains(const std::string& session_id) const;
    // Unknown sessions yield an empty artifact set.
    SessionArtifacts lookup(const std::string& session_id) const;

    const std::map<std::string, SessionArtifacts>& entries() const { return entries_; }

    bool operator==(const SessionRegistry&) const = default;

private:
    std::map<std::string, SessionArtifacts> entries_;
};

// Lexical dedup key: case-folded, whitespace-collapsed, punctuation treated
// as spaces. Throws InputError when nothing survives normalization.
std::string canonical_key(const std::string& text);

// Anchor inherited from source turns: [first timestamp, last timestamp].
TemporalAnchor derive_anchor(const std::vector<Turn>& turns);

}  // namespace memforest
