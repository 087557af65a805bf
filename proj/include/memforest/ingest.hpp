#pragma once

// Write path: fixed-size chunk partitioning, concurrent extraction with
// per-chunk fault isolation, lexical canonicalization, then routing and
// materialization in one maintenance transaction.

#include <string>
#include <vector>

#include "memforest/ports.hpp"
#include "memforest/store.hpp"

namespace memforest {

struct ChunkError {
    std::size_t chunk_index = 0;
    std::string message;
    int attempts = 0;
};

struct ExtractionResult {
    std::vector<FactCandidate> candidates;  // ordered by (chunk_index, in-chunk order)
    std::vector<ChunkError> errors;
};

// Chunk j covers turns (j-1)*b+1 .. min(j*b, n); count = ceil(n/b).
std::vector<ExtractionChunk> partition(const Session& session, int chunk_turns);

// Chunks run independently up to the concurrency budget, each retried up to
// retry_limit times; failures surface per chunk without aborting siblings.
// Output order is canonical regardless of completion order.
ExtractionResult extract_chunks(const std::vector<ExtractionChunk>& chunks, Extractor& extractor,
                                int concurrency, int retry_limit);

struct MergeLogEntry {
    std::string key;
    FactId fact = 0;          // surviving fact
    std::string merged_text;  // collapsed candidate's text
    bool into_existing = false;
};

struct CanonicalizeResult {
    std::vector<FactId> new_facts;
    std::set<FactId> touched_existing;
    std::vector<MergeLogEntry> merge_log;  // one entry per collapsed candidate
    std::vector<std::string> skipped;      // empty-after-normalization texts
};

// Groups candidates by canonical_key: unions source refs/entities/topics,
// takes the interval union as anchor and the earliest-anchored member's text.
// Groups colliding with a stored fact merge into it instead of creating one.
CanonicalizeResult canonicalize(const std::vector<FactCandidate>& candidates, MemoryStore& store);

enum class ChunkFailurePolicy { skip_chunk, abort };

struct IngestReport {
    std::string session_id;
    std::size_t chunks = 0;
    std::size_t candidates = 0;  // non-empty candidates
    std::size_t facts_new = 0;
    std::size_t duplicates_merged = 0;
    std::size_t facts_touched_existing = 0;
    std::size_t skipped_empty = 0;
    std::vector<TreeId> trees_touched;
    FlushStats flush;
    std::vector<ChunkError> chunk_errors;
    bool scene_deferred = false;
    double wall_ms = 0.0;
};

void validate_session(const Session& session);

// partition -> extract_chunks -> canonicalize -> route -> apply_updates.
// The session becomes queryable as soon as this returns.
IngestReport ingest_session(MemoryStore& store, const Session& session, Backends& backends,
                            ChunkFailurePolicy policy = ChunkFailurePolicy::skip_chunk);

// One dialogue cell per extraction chunk, so session-tree leaves align with
// extraction units.
std::string render_cell_text(const std::vector<Turn>& turns);

}  // namespace memforest
