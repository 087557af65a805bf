#include "memforest/ingest.hpp"

#include <algorithm>
#include <chrono>

#include "memforest/errors.hpp"
#include "memforest/parallel.hpp"

namespace memforest {

std::vector<ExtractionChunk> partition(const Session& session, int chunk_turns) {
    if (chunk_turns < 1) throw ConfigError("chunk size must be >= 1 turn");
    if (session.turns.empty()) throw PreconditionError("cannot partition an empty session");

    std::vector<ExtractionChunk> chunks;
    const std::size_t n = session.turns.size();
    const std::size_t b = static_cast<std::size_t>(chunk_turns);
    for (std::size_t start = 0, j = 1; start < n; start += b, ++j) {
        ExtractionChunk c;
        c.session_id = session.session_id;
        c.chunk_index = j;
        c.turns.assign(session.turns.begin() + start,
                       session.turns.begin() + std::min(n, start + b));
        c.anchor = derive_anchor(c.turns);
        chunks.push_back(std::move(c));
    }
    return chunks;
}

ExtractionResult extract_chunks(const std::vector<ExtractionChunk>& chunks, Extractor& extractor,
                                int concurrency, int retry_limit) {
    if (concurrency < 1) throw ConfigError("extraction concurrency must be >= 1");

    struct Slot {
        const ExtractionChunk* chunk = nullptr;
        std::vector<FactCandidate> candidates;
        bool failed = false;
        std::string error;
        int attempts = 0;
    };
    std::vector<Slot> slots;
    slots.reserve(chunks.size());
    for (const ExtractionChunk& c : chunks) slots.push_back(Slot{&c});

    parallel_for_each(slots, concurrency, [&](Slot& slot) {
        for (int attempt = 0; attempt <= retry_limit; ++attempt) {
            slot.attempts = attempt + 1;
            try {
                slot.candidates = extractor.extract(*slot.chunk);
                slot.failed = false;
                return;
            } catch (const std::exception& e) {
                slot.failed = true;
                slot.error = e.what();
            }
        }
    });

    ExtractionResult out;
    for (Slot& slot : slots) {
        if (slot.failed) {
            out.errors.push_back(ChunkError{slot.chunk->chunk_index, slot.error, slot.attempts});
            continue;
        }
        for (FactCandidate& cand : slot.candidates) {
            // Keep source refs inside the producing chunk's range.
            int lo = slot.chunk->turns.front().index;
            int hi = slot.chunk->turns.back().index;
            if (cand.source.session_id.empty()) cand.source.session_id = slot.chunk->session_id;
            cand.source.first_turn = std::clamp(cand.source.first_turn, lo, hi);
            cand.source.last_turn = std::clamp(cand.source.last_turn, cand.source.first_turn, hi);
            out.candidates.push_back(std::move(cand));
        }
    }
    return out;
}

CanonicalizeResult canonicalize(const std::vector<FactCandidate>& candidates, MemoryStore& store) {
    CanonicalizeResult result;

    struct Group {
        std::string key;
        std::vector<const FactCandidate*> members;
    };
    std::vector<Group> groups;
    std::map<std::string, std::size_t> group_index;
    for (const FactCandidate& cand : candidates) {
        std::string key;
        try {
            key = canonical_key(cand.text);
        } catch (const InputError&) {
            result.skipped.push_back(cand.text);
            continue;
        }
        auto [it, fresh] = group_index.try_emplace(key, groups.size());
        if (fresh) groups.push_back(Group{key, {}});
        groups[it->second].members.push_back(&cand);
    }

    for (Group& g : groups) {
        // Representative: earliest anchor start, first seen on ties.
        const FactCandidate* rep = g.members.front();
        for (const FactCandidate* m : g.members) {
            if (m->anchor.start < rep->anchor.start) rep = m;
        }

        auto existing = store.fact_by_key.find(g.key);
        if (existing != store.fact_by_key.end()) {
            CanonicalFact& fact = store.facts.at(existing->second);
            for (const FactCandidate* m : g.members) {
                fact.source_refs.insert(m->source);
                result.merge_log.push_back(MergeLogEntry{g.key, fact.fact_id, m->text, true});
            }
            result.touched_existing.insert(fact.fact_id);
            continue;
        }

        CanonicalFact fact;
        fact.fact_id = store.ids.next_fact++;
        fact.text = rep->text;
        fact.canonical_key = g.key;
        fact.anchor = rep->anchor;
        for (const FactCandidate* m : g.members) {
            fact.anchor = fact.anchor.united(m->anchor);
            fact.source_refs.insert(m->source);
            fact.entities.insert(m->entities.begin(), m->entities.end());
            fact.topics.insert(m->topics.begin(), m->topics.end());
            if (m != rep)
                result.merge_log.push_back(MergeLogEntry{g.key, fact.fact_id, m->text, false});
        }
        std::set<std::string> normalized;
        for (const std::string& e : fact.entities) {
            std::string n = normalize_entity(e);
            if (!n.empty()) normalized.insert(n);
        }
        fact.entities = std::move(normalized);

        FactId fid = fact.fact_id;
        store.fact_by_key[g.key] = fid;
        store.facts.emplace(fid, std::move(fact));
        result.new_facts.push_back(fid);
    }
    return result;
}

void validate_session(const Session& session) {
    if (session.session_id.empty()) throw InputError("session without id");
    if (session.turns.empty()) throw InputError("session " + session.session_id + " has no turns");
    int expect = 1;
    Instant prev = session.turns.front().timestamp;
    for (const Turn& t : session.turns) {
        if (t.index != expect)
            throw InputError("session " + session.session_id + " has non-dense turn indices");
        if (t.timestamp < prev)
            throw InputError("session " + session.session_id + " has decreasing timestamps");
        prev = t.timestamp;
        ++expect;
    }
}

std::string render_cell_text(const std::vector<Turn>& turns) {
    std::string out;
    for (const Turn& t : turns) {
        if (!out.empty()) out += "\n";
        out += to_string(t.speaker);
        out += ": ";
        out += t.text;
    }
    return out;
}

IngestReport ingest_session(MemoryStore& store, const Session& session, Backends& backends,
                            ChunkFailurePolicy policy) {
    auto t0 = std::chrono::steady_clock::now();
    validate_session(session);
    if (store.registry.contains(session.session_id))
        throw PreconditionError("session already ingested: " + session.session_id +
                                " (delete it first)");

    IngestReport report;
    report.session_id = session.session_id;

    std::vector<ExtractionChunk> chunks = partition(session, store.config.chunk_turns);
    report.chunks = chunks.size();

    ExtractionResult extraction = extract_chunks(chunks, *backends.extractor,
                                                 store.config.extract_concurrency,
                                                 store.config.retry_limit);
    report.chunk_errors = extraction.errors;
    if (!extraction.errors.empty() && policy == ChunkFailurePolicy::abort) {
        throw TransientBackendError("extraction failed on " +
                                    std::to_string(extraction.errors.size()) + " chunk(s) of " +
                                    session.session_id);
    }
    report.candidates = extraction.candidates.size();

    CanonicalizeResult canon = canonicalize(extraction.candidates, store);
    report.facts_new = canon.new_facts.size();
    report.duplicates_merged = canon.merge_log.size();
    report.facts_touched_existing = canon.touched_existing.size();
    report.skipped_empty = canon.skipped.size();

    SessionArtifacts artifacts;
    for (FactId f : canon.new_facts) artifacts.facts.insert(f);
    for (FactId f : canon.touched_existing) artifacts.facts.insert(f);

    std::vector<RoutedRecord> records;
    if (report.candidates > 0) {
        // Materialize dialogue cells (one per chunk) and route.
        std::vector<DialogueCell> session_cells;
        for (const ExtractionChunk& c : chunks) {
            DialogueCell cell;
            cell.cell_id = store.ids.next_cell++;
            cell.session_id = session.session_id;
            cell.first_turn = c.turns.front().index;
            cell.last_turn = c.turns.back().index;
            cell.text = render_cell_text(c.turns);
            cell.anchor = c.anchor;
            artifacts.cells.insert(cell.cell_id);
            store.cells.emplace(cell.cell_id, cell);
            session_cells.push_back(std::move(cell));
        }

        std::set<CellId> cells_routed;
        for (FactId fid : canon.new_facts) {
            const CanonicalFact& fact = store.facts.at(fid);
            std::vector<float> vec;
            RouteResult routed = route(fact, session_cells, cells_routed, store.scenes,
                                       *backends.embedder, store.ids, &vec);
            for (RoutedRecord& r : routed.records) records.push_back(std::move(r));
            if (routed.scene_deferred) {
                report.scene_deferred = true;
                store.scene_pending.insert(fid);
                store.pending_fact_rows[fid] = {};  // re-embed at flush
            } else {
                store.pending_fact_rows[fid] = std::move(vec);
            }
        }
        // Facts yielded nothing routable (e.g. all facts deferred and no new
        // facts at all): session cells still enter the session tree when any
        // candidate survived.
        if (canon.new_facts.empty()) {
            for (const DialogueCell& cell : session_cells) {
                if (!cells_routed.insert(cell.cell_id).second) continue;
                RoutedRecord r;
                r.scope = session_scope(cell.session_id);
                r.payload = PayloadRef::cell(cell.cell_id);
                r.anchor = cell.anchor;
                records.push_back(std::move(r));
            }
        }
    }

    report.flush = store.apply_updates(records, backends);
    for (const RoutedRecord& r : records) {
        TreeId tid = store.tree_id_for(r.scope);
        if (tid != 0) artifacts.trees.insert(tid);
    }
    report.trees_touched.assign(artifacts.trees.begin(), artifacts.trees.end());

    Session stored = session;
    stored.arrival_seq = store.ids.next_arrival++;
    store.sessions[session.session_id] = std::move(stored);
    store.registry.register_session(session.session_id, std::move(artifacts));

    report.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace memforest
