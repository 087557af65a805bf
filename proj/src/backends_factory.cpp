#include "memforest/backends_factory.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "memforest/errors.hpp"
#include "memforest/http_backend.hpp"
#include "memforest/mocks.hpp"

namespace memforest {

using nlohmann::json;

namespace {

BackendConfig backend_config(const Config& config, const std::string& port) {
    auto it = config.backends.find(port);
    return it == config.backends.end() ? BackendConfig{} : it->second;
}

std::vector<ChooseResponse> load_chooser_script(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open chooser script: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json root = json::parse(ss.str());
    if (!root.is_array()) throw InputError("chooser script must be a JSON array");
    std::vector<ChooseResponse> script;
    for (const json& step : root) {
        ChooseResponse resp;
        resp.stop = step.value("stop", false);
        if (step.contains("chosen"))
            for (const auto& v : step["chosen"]) resp.chosen.push_back(v.get<std::size_t>());
        script.push_back(std::move(resp));
    }
    return script;
}

void load_extractor_fixture(MockExtractor& extractor, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open extractor fixture: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json root = json::parse(ss.str());
    for (auto sit = root.begin(); sit != root.end(); ++sit) {
        for (auto cit = sit->begin(); cit != sit->end(); ++cit) {
            std::vector<FactCandidate> candidates;
            for (const json& cj : *cit) {
                FactCandidate cand;
                cand.text = cj.at("text").get<std::string>();
                if (cj.contains("entities"))
                    for (const auto& e : cj["entities"]) cand.entities.insert(e.get<std::string>());
                if (cj.contains("topics"))
                    for (const auto& t : cj["topics"]) cand.topics.insert(t.get<std::string>());
                candidates.push_back(std::move(cand));
            }
            extractor.set_fixture(sit.key(), std::stoull(cit.key()), std::move(candidates));
        }
    }
}

}  // namespace

Backends make_backends(const Config& config) {
    TopicBuckets topics = default_topic_buckets();
    for (const auto& [bucket, words] : config.topics) topics[bucket] = words;

    Backends b = make_mock_backends(topics, config.embedding_dim);

    auto http_for = [&](const std::string& port) {
        return make_http_backends(backend_config(config, port), b.ledger);
    };

    BackendConfig ec = backend_config(config, "extractor");
    if (ec.kind == "http") {
        b.extractor = http_for("extractor").extractor;
    } else if (!ec.fixture_path.empty()) {
        auto mock = std::make_shared<MockExtractor>(b.ledger, topics);
        load_extractor_fixture(*mock, ec.fixture_path);
        b.extractor = mock;
    }

    if (backend_config(config, "summarizer").kind == "http")
        b.summarizer = http_for("summarizer").summarizer;
    if (backend_config(config, "embedder").kind == "http")
        b.embedder = http_for("embedder").embedder;

    BackendConfig cc = backend_config(config, "chooser");
    if (cc.kind == "http") {
        b.chooser = http_for("chooser").chooser;
    } else if (cc.kind == "scripted") {
        if (cc.script_path.empty()) throw ConfigError("scripted chooser needs script_path");
        b.chooser = std::make_shared<ScriptedChooser>(b.ledger, load_chooser_script(cc.script_path));
    }

    BackendConfig pc = backend_config(config, "planner");
    if (pc.kind == "http") b.planner = http_for("planner").planner;
    else if (pc.kind == "off") b.planner = nullptr;

    if (backend_config(config, "chat").kind == "http") b.chat = http_for("chat").chat;

    return b;
}

}  // namespace memforest
