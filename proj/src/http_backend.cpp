#include "memforest/http_backend.hpp"

#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "memforest/errors.hpp"

namespace memforest {

using nlohmann::json;

namespace {

// Prompt templates ship with the binary; bump the version when wording
// changes so stored transcripts stay attributable.
constexpr const char* kPromptVersion = "prompts/v1";

constexpr const char* kExtractionPrompt = R"(You extract durable memory facts from a dialogue chunk.
Return a JSON array; each element: {"text": declarative statement,
"entities": [normalized entity labels], "topics": [topic labels]}.
Extract only information worth remembering across sessions.
Dialogue chunk:
)";

constexpr const char* kSummaryPrompt = R"(Summarize the following time-ordered memory notes into one
compact paragraph that preserves states and transitions with their dates.
Return JSON: {"summary": "..."}.
Notes:
)";

constexpr const char* kChooserPrompt = R"(You are navigating a temporal memory tree. Given the query and
the candidate children (index, covered interval, summary), return JSON:
{"chosen": [indices]} with at most the requested number of branches, or
{"stop": true} when the current evidence already answers the query.
)";

constexpr const char* kPlannerPrompt = R"(Given a user query and recalled memory trees (id + root summary),
write one targeted subquery per tree that steers browsing inside that tree.
Return JSON: {"subqueries": {"<tree_id>": "subquery"}}.
)";

std::string render_interval(const TemporalAnchor& a) {
    return format_anchor(a);
}

class HttpClient {
public:
    HttpClient(BackendConfig config, std::shared_ptr<PortCallLedger> ledger,
               HttpTransport transport)
        : config_(std::move(config)), ledger_(std::move(ledger)), transport_(std::move(transport)) {
        if (!transport_) transport_ = make_httplib_transport(config_);
    }

    // One chat call with strict JSON validation and a single repair retry.
    json chat_json(PortCallLedger::Port port, const std::string& system_prompt,
                   const std::string& user_content) {
        std::string repair;
        for (int attempt = 0; attempt < 2; ++attempt) {
            json body;
            body["model"] = config_.model;
            body["messages"] = json::array({json{{"role", "system"}, {"content", system_prompt}},
                                            json{{"role", "user"}, {"content", user_content + repair}}});
            body["temperature"] = 0.0;

            HttpResult result = post(port, "/v1/chat/completions", body.dump());
            try {
                json parsed = json::parse(result.body);
                record_usage(port, parsed);
                std::string content =
                    parsed.at("choices").at(0).at("message").at("content").get<std::string>();
                return json::parse(strip_fences(content));
            } catch (const json::exception& e) {
                if (ledger_) ledger_->record_failure(port);
                repair = "\nReturn only valid JSON, no prose.";
                if (attempt == 1)
                    throw PermanentBackendError(std::string("invalid JSON from backend after repair retry: ") +
                                                e.what());
            }
        }
        throw PermanentBackendError("unreachable");
    }

    std::vector<float> embedding(const std::string& text) {
        json body;
        body["model"] = config_.model;
        body["input"] = text;
        HttpResult result = post(PortCallLedger::embedder, "/v1/embeddings", body.dump());
        try {
            json parsed = json::parse(result.body);
            record_usage(PortCallLedger::embedder, parsed);
            std::vector<float> out;
            for (const auto& v : parsed.at("data").at(0).at("embedding"))
                out.push_back(v.get<float>());
            if (out.empty()) throw PermanentBackendError("empty embedding from backend");
            return out;
        } catch (const json::exception& e) {
            if (ledger_) ledger_->record_failure(PortCallLedger::embedder);
            throw PermanentBackendError(std::string("invalid embedding response: ") + e.what());
        }
    }

private:
    HttpResult post(PortCallLedger::Port port, const std::string& path, const std::string& body) {
        HttpResult result;
        try {
            result = transport_(path, body);
        } catch (const TransientBackendError&) {
            if (ledger_) ledger_->record_failure(port);
            throw;
        }
        if (result.status < 200 || result.status >= 300) {
            if (ledger_) ledger_->record_failure(port);
            if (result.status == 429 || result.status >= 500)
                throw TransientBackendError("backend returned HTTP " + std::to_string(result.status));
            throw PermanentBackendError("backend returned HTTP " + std::to_string(result.status));
        }
        return result;
    }

    void record_usage(PortCallLedger::Port port, const json& parsed) {
        std::uint64_t in = 0, out = 0;
        if (parsed.contains("usage")) {
            in = parsed["usage"].value("prompt_tokens", 0);
            out = parsed["usage"].value("completion_tokens", 0);
        }
        if (ledger_) ledger_->record(port, in, out);
    }

    static std::string strip_fences(const std::string& content) {
        std::string s = content;
        auto first = s.find("```");
        if (first != std::string::npos) {
            auto start = s.find('\n', first);
            auto last = s.rfind("```");
            if (start != std::string::npos && last > start) s = s.substr(start + 1, last - start - 1);
        }
        return s;
    }

    BackendConfig config_;
    std::shared_ptr<PortCallLedger> ledger_;
    HttpTransport transport_;
};

class HttpExtractor : public Extractor {
public:
    explicit HttpExtractor(std::shared_ptr<HttpClient> client) : client_(std::move(client)) {}

    std::vector<FactCandidate> extract(const ExtractionChunk& chunk) override {
        std::string content;
        for (const Turn& t : chunk.turns) {
            content += to_string(t.speaker);
            content += " (";
            content += format_instant(t.timestamp, t.precision);
            content += "): ";
            content += t.text;
            content += "\n";
        }
        json parsed = client_->chat_json(PortCallLedger::extractor, kExtractionPrompt, content);
        if (!parsed.is_array()) throw PermanentBackendError("extractor response is not a JSON array");
        std::vector<FactCandidate> out;
        for (const json& item : parsed) {
            FactCandidate cand;
            cand.text = item.at("text").get<std::string>();
            if (item.contains("entities"))
                for (const auto& e : item["entities"]) cand.entities.insert(e.get<std::string>());
            if (item.contains("topics"))
                for (const auto& t : item["topics"]) cand.topics.insert(t.get<std::string>());
            cand.anchor = chunk.anchor;
            cand.source = SourceRef{chunk.session_id, chunk.turns.front().index,
                                    chunk.turns.back().index};
            out.push_back(std::move(cand));
        }
        return out;
    }

private:
    std::shared_ptr<HttpClient> client_;
};

class HttpSummarizer : public Summarizer {
public:
    explicit HttpSummarizer(std::shared_ptr<HttpClient> client) : client_(std::move(client)) {}

    std::string summarize(const std::vector<std::string>& texts,
                          const TemporalAnchor& interval) override {
        std::string content = "Covered interval: " + render_interval(interval) + "\n";
        for (const std::string& t : texts) content += "- " + t + "\n";
        json parsed = client_->chat_json(PortCallLedger::summarizer, kSummaryPrompt, content);
        return parsed.at("summary").get<std::string>();
    }

private:
    std::shared_ptr<HttpClient> client_;
};

class HttpEmbedder : public Embedder {
public:
    explicit HttpEmbedder(std::shared_ptr<HttpClient> client) : client_(std::move(client)) {}

    std::vector<float> embed(const std::string& text) override {
        std::vector<float> out = client_->embedding(text);
        std::size_t expected = dim_.load();
        if (expected == 0) dim_.store(out.size());
        else if (out.size() != expected)
            throw PermanentBackendError("embedding dimension changed mid-run");
        return out;
    }

    std::size_t dimension() const override { return dim_.load(); }

private:
    std::shared_ptr<HttpClient> client_;
    mutable std::atomic<std::size_t> dim_{0};  // read from the first response
};

class HttpChooser : public Chooser {
public:
    explicit HttpChooser(std::shared_ptr<HttpClient> client) : client_(std::move(client)) {}

    ChooseResponse choose(const ChooseRequest& request) override {
        std::string content = "Query: " + request.subquery + "\nBeam width: " +
                              std::to_string(request.beam_width) + "\nChildren:\n";
        for (std::size_t i = 0; i < request.children.size(); ++i) {
            const ChildDescriptor& c = request.children[i];
            content += std::to_string(i) + ". " + render_interval(c.interval) + " " + c.summary + "\n";
        }
        json parsed = client_->chat_json(PortCallLedger::chooser, kChooserPrompt, content);
        ChooseResponse resp;
        resp.stop = parsed.value("stop", false);
        if (parsed.contains("chosen"))
            for (const auto& v : parsed["chosen"]) resp.chosen.push_back(v.get<std::size_t>());
        return resp;
    }

private:
    std::shared_ptr<HttpClient> client_;
};

class HttpPlanner : public Planner {
public:
    explicit HttpPlanner(std::shared_ptr<HttpClient> client) : client_(std::move(client)) {}

    std::map<TreeId, std::string> plan(
        const std::string& query,
        const std::vector<std::pair<TreeId, std::string>>& recalled_roots) override {
        std::string content = "Query: " + query + "\nTrees:\n";
        for (const auto& [tree, summary] : recalled_roots)
            content += std::to_string(tree) + ": " + summary + "\n";
        json parsed = client_->chat_json(PortCallLedger::planner, kPlannerPrompt, content);
        std::map<TreeId, std::string> out;
        if (parsed.contains("subqueries")) {
            for (auto it = parsed["subqueries"].begin(); it != parsed["subqueries"].end(); ++it)
                out[std::stoull(it.key())] = it->get<std::string>();
        }
        return out;
    }

private:
    std::shared_ptr<HttpClient> client_;
};

class HttpChat : public Chat {
public:
    explicit HttpChat(std::shared_ptr<HttpClient> client) : client_(std::move(client)) {}

    std::string answer(const std::string& query, const std::vector<std::string>& evidence) override {
        std::string content = "Question: " + query + "\nEvidence:\n";
        for (const std::string& e : evidence) content += "- " + e + "\n";
        json parsed = client_->chat_json(
            PortCallLedger::chat,
            "Answer the question from the evidence. Return JSON: {\"answer\": \"...\"}.", content);
        return parsed.at("answer").get<std::string>();
    }

private:
    std::shared_ptr<HttpClient> client_;
};

}  // namespace

HttpTransport make_httplib_transport(const BackendConfig& config) {
    std::string base_url = config.base_url;
    std::string token;
    if (!config.auth_env.empty()) {
        const char* value = std::getenv(config.auth_env.c_str());
        if (value) token = value;
    }
    int timeout_ms = config.timeout_ms;
    return [base_url, token, timeout_ms](const std::string& path,
                                         const std::string& body) -> HttpResult {
        httplib::Client client(base_url);
        client.set_connection_timeout(0, timeout_ms * 1000);
        client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
        httplib::Headers headers;
        if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
        auto result = client.Post(path, headers, body, "application/json");
        if (!result)
            throw TransientBackendError("network error calling " + base_url + path + ": " +
                                        httplib::to_string(result.error()));
        return HttpResult{result->status, result->body};
    };
}

HttpBackendSet make_http_backends(const BackendConfig& config,
                                  std::shared_ptr<PortCallLedger> ledger,
                                  HttpTransport transport) {
    auto client = std::make_shared<HttpClient>(config, std::move(ledger), std::move(transport));
    HttpBackendSet set;
    set.extractor = std::make_shared<HttpExtractor>(client);
    set.summarizer = std::make_shared<HttpSummarizer>(client);
    set.embedder = std::make_shared<HttpEmbedder>(client);
    set.chooser = std::make_shared<HttpChooser>(client);
    set.planner = std::make_shared<HttpPlanner>(client);
    set.chat = std::make_shared<HttpChat>(client);
    return set;
}

const char* prompt_template_version() {
    return kPromptVersion;
}

}  // namespace memforest
