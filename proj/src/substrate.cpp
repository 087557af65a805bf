#include "memforest/substrate.hpp"

#include <cctype>

#include "memforest/errors.hpp"

namespace memforest {

const char* to_string(Speaker s) {
    return s == Speaker::user ? "user" : "assistant";
}

Speaker speaker_from_string(const std::string& s) {
    if (s == "user") return Speaker::user;
    if (s == "assistant") return Speaker::assistant;
    throw InputError("unknown speaker: " + s);
}

const char* to_string(ScopeFamily f) {
    switch (f) {
        case ScopeFamily::session: return "session";
        case ScopeFamily::entity: return "entity";
        case ScopeFamily::scene: return "scene";
    }
    return "session";
}

ScopeFamily scope_family_from_string(const std::string& s) {
    if (s == "session") return ScopeFamily::session;
    if (s == "entity") return ScopeFamily::entity;
    if (s == "scene") return ScopeFamily::scene;
    throw InputError("unknown scope family: " + s);
}

void PlacementMap::add(PayloadRef payload, LeafLocation loc) {
    entries_[payload].insert(loc);
}

void PlacementMap::remove(PayloadRef payload, LeafLocation loc) {
    auto it = entries_.find(payload);
    if (it == entries_.end()) return;
    it->second.erase(loc);
    if (it->second.empty()) entries_.erase(it);
}

void PlacementMap::erase_payload(PayloadRef payload) {
    entries_.erase(payload);
}

const std::set<LeafLocation>& PlacementMap::lookup(PayloadRef payload) const {
    static const std::set<LeafLocation> kEmpty;
    auto it = entries_.find(payload);
    return it == entries_.end() ? kEmpty : it->second;
}

bool PlacementMap::contains(PayloadRef payload) const {
    return entries_.count(payload) > 0;
}

void SessionRegistry::register_session(const std::string& session_id, SessionArtifacts artifacts) {
    entries_[session_id] = std::move(artifacts);
}

void SessionRegistry::erase(const std::string& session_id) {
    entries_.erase(session_id);
}

bool SessionRegistry::contains(const std::string& session_id) const {
    return entries_.count(session_id) > 0;
}

SessionArtifacts SessionRegistry::lookup(const std::string& session_id) const {
    auto it = entries_.find(session_id);
    return it == entries_.end() ? SessionArtifacts{} : it->second;
}

std::string canonical_key(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c) || std::ispunct(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    if (out.empty()) throw InputError("empty fact text after normalization");
    return out;
}

TemporalAnchor derive_anchor(const std::vector<Turn>& turns) {
    if (turns.empty()) throw PreconditionError("derive_anchor requires at least one turn");
    TemporalAnchor a;
    a.start = turns.front().timestamp;
    a.end = turns.back().timestamp;
    a.precision = turns.front().precision;
    for (const Turn& t : turns) a.precision = coarser(a.precision, t.precision);
    return a;
}

}  // namespace memforest
