#pragma once

// Deterministic mock backends. These are the test oracle for the whole
// engine: rule-based extraction, concatenative summaries, feature-hash
// embeddings with an override table for pinned geometries, and scripted
// chooser/planner ports.

#include <functional>
#include <map>
#include <mutex>

#include "memforest/ports.hpp"

namespace memforest {

constexpr std::size_t kMockEmbeddingDim = 16;

// Keyword buckets used by the mock extractor to assign topical signals.
using TopicBuckets = std::map<std::string, std::vector<std::string>>;

TopicBuckets default_topic_buckets();

class MockExtractor : public Extractor {
public:
    explicit MockExtractor(std::shared_ptr<PortCallLedger> ledger,
                           TopicBuckets topics = default_topic_buckets());

    std::vector<FactCandidate> extract(const ExtractionChunk& chunk) override;

    // Fixture mode: replay candidates from a sidecar table keyed by
    // (session_id, chunk_index). Rule-based extraction is bypassed for keys
    // present in the table.
    void set_fixture(const std::string& session_id, std::size_t chunk_index,
                     std::vector<FactCandidate> candidates);

    // Test hook: chunks of these sessions fail until cleared.
    void fail_session(const std::string& session_id) { failing_.insert(session_id); }
    void clear_failures() { failing_.clear(); }

private:
    std::shared_ptr<PortCallLedger> ledger_;
    TopicBuckets topics_;
    std::map<std::pair<std::string, std::size_t>, std::vector<FactCandidate>> fixtures_;
    std::set<std::string> failing_;
};

class MockSummarizer : public Summarizer {
public:
    explicit MockSummarizer(std::shared_ptr<PortCallLedger> ledger, std::size_t max_chars = 240);

    std::string summarize(const std::vector<std::string>& texts,
                          const TemporalAnchor& interval) override;

    // Test hook: next `n` calls throw TransientBackendError.
    void fail_next(int n) { fail_next_ = n; }

private:
    std::shared_ptr<PortCallLedger> ledger_;
    std::size_t max_chars_;
    std::atomic<int> fail_next_{0};
};

class MockEmbedder : public Embedder {
public:
    explicit MockEmbedder(std::shared_ptr<PortCallLedger> ledger,
                          std::size_t dim = kMockEmbeddingDim);

    std::vector<float> embed(const std::string& text) override;
    std::size_t dimension() const override { return dim_; }

    // Pins an exact unit vector for a text, bypassing the feature hash.
    void set_override(const std::string& text, std::vector<float> vec);
    void fail_next(int n) { fail_next_ = n; }

private:
    std::shared_ptr<PortCallLedger> ledger_;
    std::size_t dim_;
    std::map<std::string, std::vector<float>> overrides_;
    mutable std::mutex mutex_;
    std::atomic<int> fail_next_{0};
};

// Keyword-overlap chooser: picks the children whose summaries share the most
// tokens with the subquery; deterministic, ties to lower index.
class MockChooser : public Chooser {
public:
    explicit MockChooser(std::shared_ptr<PortCallLedger> ledger);
    ChooseResponse choose(const ChooseRequest& request) override;

private:
    std::shared_ptr<PortCallLedger> ledger_;
};

// Replays a fixed queue of responses; used to pin browse paths in tests and
// fixtures. Runs out of script -> returns stop.
class ScriptedChooser : public Chooser {
public:
    ScriptedChooser(std::shared_ptr<PortCallLedger> ledger, std::vector<ChooseResponse> script);
    ChooseResponse choose(const ChooseRequest& request) override;

    void fail_next(int n) { fail_next_ = n; }

private:
    std::shared_ptr<PortCallLedger> ledger_;
    std::vector<ChooseResponse> script_;
    std::size_t next_ = 0;
    std::atomic<int> fail_next_{0};
};

// Templates "within <root summary head>: <query>" per recalled tree.
class MockPlanner : public Planner {
public:
    explicit MockPlanner(std::shared_ptr<PortCallLedger> ledger);
    std::map<TreeId, std::string> plan(
        const std::string& query,
        const std::vector<std::pair<TreeId, std::string>>& recalled_roots) override;

    void fail_next(int n) { fail_next_ = n; }

private:
    std::shared_ptr<PortCallLedger> ledger_;
    std::atomic<int> fail_next_{0};
};

class MockChat : public Chat {
public:
    explicit MockChat(std::shared_ptr<PortCallLedger> ledger);
    std::string answer(const std::string& query, const std::vector<std::string>& evidence) override;

private:
    std::shared_ptr<PortCallLedger> ledger_;
};

// Full mock bundle sharing one ledger.
Backends make_mock_backends(TopicBuckets topics = default_topic_buckets(),
                            std::size_t embedding_dim = kMockEmbeddingDim);

// Splits text into sentences on ./!/? boundaries, keeping the terminator.
std::vector<std::string> split_sentences(const std::string& text);

// Lowercased word tokens.
std::vector<std::string> tokenize_words(const std::string& text);

}  // namespace memforest
