#pragma once

// Ports for all model-dependent behavior. Every summarizer/embedder/extractor
// call in the engine goes through one of these interfaces, so the whole write
// and query path can run against the deterministic mocks.

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "memforest/substrate.hpp"

namespace memforest {

struct ExtractionChunk {
    std::string session_id;
    std::size_t chunk_index = 1;  // 1-based j
    std::vector<Turn> turns;      // contiguous slice, length <= b
    TemporalAnchor anchor;
};

struct FactCandidate {
    std::string text;
    TemporalAnchor anchor;
    std::set<std::string> entities;
    std::set<std::string> topics;
    SourceRef source;  // within the producing chunk's range
};

// Per-port call accounting. Counters are monotone; reset only between test
// phases. input/output units are port-specific (chars or tokens).
struct PortCounters {
    std::uint64_t calls = 0;
    std::uint64_t input_units = 0;
    std::uint64_t output_units = 0;
    std::uint64_t failures = 0;
};

class PortCallLedger {
public:
    enum Port { extractor, summarizer, embedder, chooser, planner, chat, kPortCount };

    void record(Port p, std::uint64_t in_units, std::uint64_t out_units) {
        counters_[p].calls.fetch_add(1, std::memory_order_relaxed);
        counters_[p].input_units.fetch_add(in_units, std::memory_order_relaxed);
        counters_[p].output_units.fetch_add(out_units, std::memory_order_relaxed);
    }
    void record_failure(Port p) {
        counters_[p].failures.fetch_add(1, std::memory_order_relaxed);
    }

    PortCounters snapshot(Port p) const {
        const auto& c = counters_[p];
        return PortCounters{c.calls.load(), c.input_units.load(), c.output_units.load(),
                            c.failures.load()};
    }
    std::uint64_t calls(Port p) const { return counters_[p].calls.load(); }
    std::uint64_t failures(Port p) const { return counters_[p].failures.load(); }

    void reset() {
        for (auto& c : counters_) {
            c.calls = 0;
            c.input_units = 0;
            c.output_units = 0;
            c.failures = 0;
        }
    }

private:
    struct AtomicCounters {
        std::atomic<std::uint64_t> calls{0};
        std::atomic<std::uint64_t> input_units{0};
        std::atomic<std::uint64_t> output_units{0};
        std::atomic<std::uint64_t> failures{0};
    };
    AtomicCounters counters_[kPortCount];
};

class Extractor {
public:
    virtual ~Extractor() = default;
    virtual std::vector<FactCandidate> extract(const ExtractionChunk& chunk) = 0;
};

class Summarizer {
public:
    virtual ~Summarizer() = default;
    // Ordered inputs; interval is the covered span, rendered into the summary.
    virtual std::string summarize(const std::vector<std::string>& texts,
                                  const TemporalAnchor& interval) = 0;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<float> embed(const std::string& text) = 0;
    virtual std::size_t dimension() const = 0;
};

// What an LLM browse step sees for one candidate child.
struct ChildDescriptor {
    NodeId node = 0;
    std::string summary;
    TemporalAnchor interval;
    bool is_leaf = false;
};

struct ChooseRequest {
    std::string subquery;
    std::vector<ChildDescriptor> children;
    std::size_t beam_width = 1;
};

struct ChooseResponse {
    std::vector<std::size_t> chosen;  // indices into children, <= beam_width
    bool stop = false;
};

class Chooser {
public:
    virtual ~Chooser() = default;
    virtual ChooseResponse choose(const ChooseRequest& request) = 0;
};

class Planner {
public:
    virtual ~Planner() = default;
    // One call covering all recalled roots; returns tree -> subquery.
    virtual std::map<TreeId, std::string> plan(
        const std::string& query,
        const std::vector<std::pair<TreeId, std::string>>& recalled_roots) = 0;
};

class Chat {
public:
    virtual ~Chat() = default;
    virtual std::string answer(const std::string& query,
                               const std::vector<std::string>& evidence) = 0;
};

// Bundle handed through the pipeline; ledger is shared by all ports.
struct Backends {
    std::shared_ptr<Extractor> extractor;
    std::shared_ptr<Summarizer> summarizer;
    std::shared_ptr<Embedder> embedder;
    std::shared_ptr<Chooser> chooser;
    std::shared_ptr<Planner> planner;
    std::shared_ptr<Chat> chat;
    std::shared_ptr<PortCallLedger> ledger;
};

}  // namespace memforest
