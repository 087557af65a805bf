#pragma once

// Shared test fixtures: the Bob residence story, synthetic sessions and
// random generators used across the unit and acceptance suites.

#include <random>
#include <string>
#include <vector>

#include "memforest/ingest.hpp"
#include "memforest/mocks.hpp"
#include "memforest/store.hpp"

namespace memforest::test {

inline Turn make_turn(const std::string& session_id, int index, Speaker speaker,
                      const std::string& text, Instant ts) {
    Turn t;
    t.session_id = session_id;
    t.index = index;
    t.speaker = speaker;
    t.text = text;
    t.timestamp = ts;
    return t;
}

// One user fact sentence per pair of turns; assistant turns carry nothing.
inline Session make_session(const std::string& id, Instant base,
                            const std::vector<std::string>& user_sentences) {
    Session s;
    s.session_id = id;
    int index = 1;
    for (const std::string& sentence : user_sentences) {
        s.turns.push_back(make_turn(id, index, Speaker::user, sentence, base + index * 60));
        ++index;
        s.turns.push_back(make_turn(id, index, Speaker::assistant, "ok, noted.", base + index * 60));
        ++index;
    }
    return s;
}

inline Instant ts(int year, int month, int day, int hour = 0, int minute = 0) {
    return make_instant(year, month, day, hour, minute, 0);
}

// May 2023: Boston -> Davis. July 2024: Davis -> Miami. Jan 2025: house.
inline std::vector<Session> bob_sessions() {
    return {
        make_session("bob-2023-05", ts(2023, 5, 20, 10, 0),
                     {"Bob moved from Boston to Davis in May 2023.",
                      "Bob started a gardening hobby in Davis."}),
        make_session("bob-2024-07", ts(2024, 7, 1, 9, 30),
                     {"Bob moved from Davis to Miami in July 2024."}),
        make_session("bob-2025-01", ts(2025, 1, 15, 14, 0),
                     {"Bob bought a house in Miami."}),
    };
}

// Deterministic filler facts on unrelated subjects.
inline std::vector<Session> distractor_sessions(int count, Instant base = 0) {
    if (base == 0) base = ts(2024, 3, 1, 8, 0);
    static const char* kSubjects[] = {"Nora", "Omar", "Pia",   "Quentin", "Rosa",
                                      "Sven", "Tara", "Ulric", "Vera",    "Wes"};
    static const char* kDoings[] = {
        "adopted a cat named..", "learned to bake sourdough bread", "ran a city marathon",
        "repainted the kitchen",  "joined a chess club",             "planted tomatoes"};
    std::vector<Session> out;
    for (int i = 0; i < count; ++i) {
        std::string subject = kSubjects[i % 10];
        std::string doing = kDoings[i % 6];
        std::string sentence = subject + " " + doing + " round " + std::to_string(i + 1) + ".";
        out.push_back(make_session("filler-" + std::to_string(i + 1),
                                   base + static_cast<Instant>(i) * 3600, {sentence}));
    }
    return out;
}

// Random sessions with strictly increasing session timestamps (realistic
// arrival order); sentence subjects draw from a small entity pool so trees
// accumulate leaves across sessions.
class RandomSessionGen {
public:
    explicit RandomSessionGen(unsigned seed) : rng_(seed) {}

    Session next() {
        ++counter_;
        int facts = 1 + static_cast<int>(rng_() % 4);
        std::vector<std::string> sentences;
        for (int i = 0; i < facts; ++i) {
            std::string subject = pool_[rng_() % pool_.size()];
            sentences.push_back(subject + " logged event " + std::to_string(counter_) + "x" +
                                std::to_string(i + 1) + " at the " + place_[rng_() % place_.size()] +
                                ".");
        }
        base_ += 3600 + static_cast<Instant>(rng_() % 7200);
        return make_session("rand-" + std::to_string(counter_), base_, sentences);
    }

    std::mt19937& rng() { return rng_; }

private:
    std::mt19937 rng_;
    int counter_ = 0;
    Instant base_ = ts(2024, 1, 1);
    std::vector<std::string> pool_ = {"Asha", "Bjorn", "Clio", "Dmitri", "Esme"};
    std::vector<std::string> place_ = {"harbor", "library", "market", "workshop"};
};

// Independent full-scan oracle for index exactness checks: full stable sort
// over every row, no shared code with VectorIndex::search. Rows are the
// stored unit vectors and the query is unit-normalized in float the same way
// the index does it, so matching scores must agree bit-for-bit.
inline std::vector<std::pair<std::uint64_t, double>> brute_force_topk(
    const std::map<std::uint64_t, std::vector<float>>& rows, const std::vector<float>& query,
    std::size_t k) {
    std::vector<float> q = query;
    double qnorm = 0.0;
    for (float x : q) qnorm += static_cast<double>(x) * x;
    qnorm = std::sqrt(qnorm);
    if (qnorm == 0.0) return {};
    for (float& x : q) x = static_cast<float>(x / qnorm);

    std::vector<std::pair<std::uint64_t, double>> scored;
    for (const auto& [key, vec] : rows) {
        double dot = 0.0;
        for (std::size_t i = 0; i < vec.size(); ++i)
            dot += static_cast<double>(q[i]) * vec[i];
        scored.push_back({key, dot});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

// Synthetic routed fact records appended to one scope, bypassing extraction.
inline std::vector<RoutedRecord> seed_scope_facts(MemoryStore& store, const std::string& scope_key,
                                                  std::size_t count, Instant base,
                                                  Instant step = 60) {
    std::vector<RoutedRecord> records;
    for (std::size_t i = 0; i < count; ++i) {
        CanonicalFact fact;
        fact.fact_id = store.ids.next_fact++;
        fact.text = scope_key + " event " + std::to_string(store.ids.next_fact) + ".";
        fact.anchor = TemporalAnchor::point(base + static_cast<Instant>(i) * step);
        fact.source_refs.insert(SourceRef{"seed-" + scope_key, 1, 1});
        fact.canonical_key = canonical_key(fact.text);
        fact.entities.insert(scope_key);
        store.fact_by_key[fact.canonical_key] = fact.fact_id;
        FactId fid = fact.fact_id;
        store.facts.emplace(fid, std::move(fact));
        store.pending_fact_rows[fid] = {};
        RoutedRecord r;
        r.scope = entity_scope(scope_key);
        r.payload = PayloadRef::fact(fid);
        r.anchor = store.facts.at(fid).anchor;
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace memforest::test
