#pragma once

// Snapshot directory layout: newline-delimited JSON files, each with a
// format-version header record, plus a little-endian binary file for node
// embeddings. Save -> load -> save is byte-identical. Unknown format
// versions are rejected, not migrated.

#include <memory>
#include <string>

#include "memforest/store.hpp"

namespace memforest {

constexpr int kSnapshotFormatVersion = 1;

// sessions.jsonl, facts.jsonl, cells.jsonl, placement.jsonl, registry.jsonl,
// trees.jsonl, scenes.jsonl, fact_index.jsonl, embeddings.bin, meta.json
void save_snapshot(const MemoryStore& store, const std::string& dir);

std::unique_ptr<MemoryStore> load_snapshot(const std::string& dir);

bool snapshot_exists(const std::string& dir);

}  // namespace memforest
