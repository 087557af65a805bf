#include "memforest/mocks.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "memforest/errors.hpp"

namespace memforest {

namespace {

const std::set<std::string>& stopwords() {
    static const std::set<std::string> kStop = {
        "a",    "an",   "and",  "are",  "as",   "at",   "be",    "but",  "by",   "did",
        "do",   "for",  "from", "had",  "has",  "have", "he",    "her",  "his",  "how",
        "i",    "if",   "in",   "is",   "it",   "its",  "my",    "no",   "not",  "of",
        "on",   "or",   "our",  "she",  "so",   "that", "the",   "their", "then", "there",
        "they", "this", "to",   "was",  "we",   "were", "what",  "when", "where", "which",
        "who",  "will", "with", "you",  "your", "yes",  "ok",    "okay", "thanks", "hi",
        "hello",
        // Month names read as dates, not entity labels.
        "january", "february", "march", "april", "may", "june", "july", "august",
        "september", "october", "november", "december"};
    return kStop;
}

bool is_capitalized(const std::string& word) {
    return !word.empty() && std::isupper(static_cast<unsigned char>(word[0]));
}

std::string lower(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string strip_punct(const std::string& s) {
    std::string out;
    for (unsigned char c : s) {
        if (!std::ispunct(c)) out.push_back(static_cast<char>(c));
    }
    return out;
}

std::string first_clause(const std::string& text) {
    std::size_t cut = text.find_first_of(",.;");
    std::string head = cut == std::string::npos ? text : text.substr(0, cut);
    while (!head.empty() && std::isspace(static_cast<unsigned char>(head.front()))) head.erase(head.begin());
    while (!head.empty() && std::isspace(static_cast<unsigned char>(head.back()))) head.pop_back();
    return head;
}

}  // namespace

TopicBuckets default_topic_buckets() {
    return TopicBuckets{
        {"residence", {"moved", "move", "lives", "living", "house", "apartment", "relocated", "residence"}},
        {"work", {"job", "works", "working", "office", "project", "promoted", "hired", "career"}},
        {"health", {"doctor", "sick", "injury", "allergic", "diagnosed", "hospital", "medication"}},
        {"travel", {"trip", "visited", "flight", "vacation", "traveled", "tour"}},
        {"food", {"recipe", "cooked", "restaurant", "dinner", "vegetarian", "baking"}},
        {"hobby", {"guitar", "painting", "marathon", "chess", "gardening", "photography", "plays"}},
    };
}

std::vector<std::string> split_sentences(const std::string& text) {
    std::vector<std::string> out;
    std::string current;
    for (char c : text) {
        current.push_back(c);
        if (c == '.' || c == '!' || c == '?') {
            while (!current.empty() && std::isspace(static_cast<unsigned char>(current.front())))
                current.erase(current.begin());
            if (!current.empty()) out.push_back(current);
            current.clear();
        }
    }
    while (!current.empty() && std::isspace(static_cast<unsigned char>(current.front())))
        current.erase(current.begin());
    while (!current.empty() && std::isspace(static_cast<unsigned char>(current.back())))
        current.pop_back();
    if (!current.empty()) out.push_back(current);
    return out;
}

std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> out;
    std::string word;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            word.push_back(static_cast<char>(std::tolower(c)));
        } else if (!word.empty()) {
            out.push_back(word);
            word.clear();
        }
    }
    if (!word.empty()) out.push_back(word);
    return out;
}

MockExtractor::MockExtractor(std::shared_ptr<PortCallLedger> ledger, TopicBuckets topics)
    : ledger_(std::move(ledger)), topics_(std::move(topics)) {}

void MockExtractor::set_fixture(const std::string& session_id, std::size_t chunk_index,
                                std::vector<FactCandidate> candidates) {
    fixtures_[{session_id, chunk_index}] = std::move(candidates);
}

std::vector<FactCandidate> MockExtractor::extract(const ExtractionChunk& chunk) {
    if (failing_.count(chunk.session_id)) {
        if (ledger_) ledger_->record_failure(PortCallLedger::extractor);
        throw TransientBackendError("mock extractor configured to fail for " + chunk.session_id);
    }

    std::size_t in_units = 0;
    for (const Turn& t : chunk.turns) in_units += t.text.size();

    auto fit = fixtures_.find({chunk.session_id, chunk.chunk_index});
    if (fit != fixtures_.end()) {
        if (ledger_) ledger_->record(PortCallLedger::extractor, in_units, fit->second.size());
        return fit->second;
    }

    std::vector<FactCandidate> out;
    for (const Turn& turn : chunk.turns) {
        for (const std::string& sentence : split_sentences(turn.text)) {
            if (sentence.back() != '.') continue;  // declaratives only

            // Raw whitespace split keeps capitalization for entity detection.
            std::vector<std::string> raw;
            std::string word;
            for (char c : sentence) {
                if (std::isspace(static_cast<unsigned char>(c))) {
                    if (!word.empty()) raw.push_back(word);
                    word.clear();
                } else {
                    word.push_back(c);
                }
            }
            if (!word.empty()) raw.push_back(word);
            if (raw.size() < 3) continue;

            std::set<std::string> entities;
            for (const std::string& w : raw) {
                std::string clean = strip_punct(w);
                if (clean.empty() || !is_capitalized(clean)) continue;
                std::string lowered = lower(clean);
                if (stopwords().count(lowered)) continue;
                entities.insert(lowered);
            }
            if (entities.empty()) continue;

            std::set<std::string> topics;
            std::vector<std::string> tokens = tokenize_words(sentence);
            for (const auto& [bucket, keywords] : topics_) {
                for (const std::string& kw : keywords) {
                    if (std::find(tokens.begin(), tokens.end(), kw) != tokens.end()) {
                        topics.insert(bucket);
                        break;
                    }
                }
            }

            FactCandidate cand;
            cand.text = sentence;
            cand.anchor = chunk.anchor;
            cand.entities = std::move(entities);
            cand.topics = std::move(topics);
            cand.source = SourceRef{chunk.session_id,
                                    chunk.turns.front().index,
                                    chunk.turns.back().index};
            out.push_back(std::move(cand));
        }
    }
    if (ledger_) ledger_->record(PortCallLedger::extractor, in_units, out.size());
    return out;
}

MockSummarizer::MockSummarizer(std::shared_ptr<PortCallLedger> ledger, std::size_t max_chars)
    : ledger_(std::move(ledger)), max_chars_(max_chars) {}

std::string MockSummarizer::summarize(const std::vector<std::string>& texts,
                                      const TemporalAnchor& interval) {
    if (texts.empty()) throw PreconditionError("summarize requires at least one text");
    if (fail_next_.load() > 0) {
        fail_next_.fetch_sub(1);
        if (ledger_) ledger_->record_failure(PortCallLedger::summarizer);
        throw TransientBackendError("mock summarizer failure");
    }

    std::size_t in_units = 0;
    for (const auto& t : texts) in_units += t.size();

    std::string out = format_anchor(interval) + " ";
    bool first = true;
    for (const std::string& t : texts) {
        if (!first) out += "; ";
        out += first_clause(t);
        first = false;
    }
    if (out.size() > max_chars_) out.resize(max_chars_);
    if (ledger_) ledger_->record(PortCallLedger::summarizer, in_units, out.size());
    return out;
}

MockEmbedder::MockEmbedder(std::shared_ptr<PortCallLedger> ledger, std::size_t dim)
    : ledger_(std::move(ledger)), dim_(dim) {}

void MockEmbedder::set_override(const std::string& text, std::vector<float> vec) {
    if (vec.size() != dim_) throw ConfigError("override vector dimension mismatch");
    float norm = 0.0f;
    for (float v : vec) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0f) throw ConfigError("override vector must be nonzero");
    for (float& v : vec) v /= norm;
    std::lock_guard lock(mutex_);
    overrides_[text] = std::move(vec);
}

std::vector<float> MockEmbedder::embed(const std::string& text) {
    if (fail_next_.load() > 0) {
        fail_next_.fetch_sub(1);
        if (ledger_) ledger_->record_failure(PortCallLedger::embedder);
        throw TransientBackendError("mock embedder failure");
    }
    {
        std::lock_guard lock(mutex_);
        auto it = overrides_.find(text);
        if (it != overrides_.end()) {
            if (ledger_) ledger_->record(PortCallLedger::embedder, text.size(), dim_);
            return it->second;
        }
    }

    // Character trigram feature hash (FNV-1a) into dim_ buckets.
    std::vector<float> vec(dim_, 0.0f);
    std::string padded = "^" + lower(text) + "$";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
        std::uint64_t h = 1469598103934665603ULL;
        for (std::size_t j = i; j < i + 3; ++j) {
            h ^= static_cast<unsigned char>(padded[j]);
            h *= 1099511628211ULL;
        }
        vec[h % dim_] += (h >> 32) % 2 == 0 ? 1.0f : -1.0f;
    }
    float norm = 0.0f;
    for (float v : vec) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0f) {
        vec.assign(dim_, 0.0f);
        vec[0] = 1.0f;
    } else {
        for (float& v : vec) v /= norm;
    }
    if (ledger_) ledger_->record(PortCallLedger::embedder, text.size(), dim_);
    return vec;
}

MockChooser::MockChooser(std::shared_ptr<PortCallLedger> ledger) : ledger_(std::move(ledger)) {}

ChooseResponse MockChooser::choose(const ChooseRequest& request) {
    if (ledger_) ledger_->record(PortCallLedger::chooser, request.children.size(), 1);
    std::vector<std::string> query_tokens = tokenize_words(request.subquery);
    std::vector<std::pair<int, std::size_t>> scored;  // (-overlap, index)
    for (std::size_t i = 0; i < request.children.size(); ++i) {
        std::vector<std::string> child_tokens = tokenize_words(request.children[i].summary);
        int overlap = 0;
        for (const std::string& qt : query_tokens) {
            if (stopwords().count(qt)) continue;
            if (std::find(child_tokens.begin(), child_tokens.end(), qt) != child_tokens.end())
                ++overlap;
        }
        scored.emplace_back(-overlap, i);
    }
    std::sort(scored.begin(), scored.end());
    ChooseResponse resp;
    for (std::size_t i = 0; i < scored.size() && i < request.beam_width; ++i)
        resp.chosen.push_back(scored[i].second);
    std::sort(resp.chosen.begin(), resp.chosen.end());
    return resp;
}

ScriptedChooser::ScriptedChooser(std::shared_ptr<PortCallLedger> ledger,
                                 std::vector<ChooseResponse> script)
    : ledger_(std::move(ledger)), script_(std::move(script)) {}

ChooseResponse ScriptedChooser::choose(const ChooseRequest& request) {
    if (fail_next_.load() > 0) {
        fail_next_.fetch_sub(1);
        if (ledger_) ledger_->record_failure(PortCallLedger::chooser);
        throw TransientBackendError("scripted chooser failure");
    }
    if (ledger_) ledger_->record(PortCallLedger::chooser, request.children.size(), 1);
    if (next_ >= script_.size()) return ChooseResponse{{}, true};
    return script_[next_++];
}

MockPlanner::MockPlanner(std::shared_ptr<PortCallLedger> ledger) : ledger_(std::move(ledger)) {}

std::map<TreeId, std::string> MockPlanner::plan(
    const std::string& query, const std::vector<std::pair<TreeId, std::string>>& recalled_roots) {
    if (fail_next_.load() > 0) {
        fail_next_.fetch_sub(1);
        if (ledger_) ledger_->record_failure(PortCallLedger::planner);
        throw TransientBackendError("mock planner failure");
    }
    if (ledger_) ledger_->record(PortCallLedger::planner, recalled_roots.size(), recalled_roots.size());
    std::map<TreeId, std::string> out;
    for (const auto& [tree, summary] : recalled_roots) {
        std::vector<std::string> tokens = tokenize_words(summary);
        std::string head;
        for (std::size_t i = 0; i < tokens.size() && i < 4; ++i) {
            if (!head.empty()) head += " ";
            head += tokens[i];
        }
        out[tree] = "within " + head + ": " + query;
    }
    return out;
}

MockChat::MockChat(std::shared_ptr<PortCallLedger> ledger) : ledger_(std::move(ledger)) {}

std::string MockChat::answer(const std::string& query, const std::vector<std::string>& evidence) {
    if (ledger_) ledger_->record(PortCallLedger::chat, evidence.size(), 1);
    if (evidence.empty()) return "No evidence retrieved for: " + query;
    return "Based on retrieved evidence: " + evidence.front();
}

Backends make_mock_backends(TopicBuckets topics, std::size_t embedding_dim) {
    Backends b;
    b.ledger = std::make_shared<PortCallLedger>();
    b.extractor = std::make_shared<MockExtractor>(b.ledger, std::move(topics));
    b.summarizer = std::make_shared<MockSummarizer>(b.ledger);
    b.embedder = std::make_shared<MockEmbedder>(b.ledger, embedding_dim);
    b.chooser = std::make_shared<MockChooser>(b.ledger);
    b.planner = std::make_shared<MockPlanner>(b.ledger);
    b.chat = std::make_shared<MockChat>(b.ledger);
    return b;
}

}  // namespace memforest
