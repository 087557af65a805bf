#include "memforest/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "memforest/errors.hpp"

namespace memforest {

using nlohmann::json;

int Config::branching_for(ScopeFamily family) const {
    auto it = branching.find(to_string(family));
    if (it != branching.end()) return it->second;
    it = branching.find("default");
    if (it != branching.end()) return it->second;
    return 8;
}

Config default_config() {
    return Config{};
}

ScoreCombiner combiner_from_string(const std::string& s) {
    if (s == "max") return ScoreCombiner::max;
    if (s == "mean") return ScoreCombiner::mean;
    if (s == "weighted") return ScoreCombiner::weighted;
    throw ConfigError("unknown score combiner: " + s);
}

const char* to_string(ScoreCombiner c) {
    switch (c) {
        case ScoreCombiner::max: return "max";
        case ScoreCombiner::mean: return "mean";
        case ScoreCombiner::weighted: return "weighted";
    }
    return "max";
}

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ConfigError("unknown config key '" + it.key() + "' in " + where);
    }
}

BackendConfig parse_backend(const json& obj, const std::string& where) {
    check_keys(obj, {"kind", "base_url", "model", "auth_env", "timeout_ms", "script_path", "fixture_path"}, where);
    BackendConfig b;
    b.kind = obj.value("kind", std::string("mock"));
    if (b.kind != "mock" && b.kind != "http" && b.kind != "scripted" && b.kind != "off")
        throw ConfigError("unknown backend kind '" + b.kind + "' in " + where);
    b.base_url = obj.value("base_url", std::string());
    b.model = obj.value("model", std::string());
    b.auth_env = obj.value("auth_env", std::string());
    b.timeout_ms = obj.value("timeout_ms", 30000);
    b.script_path = obj.value("script_path", std::string());
    b.fixture_path = obj.value("fixture_path", std::string());
    return b;
}

}  // namespace

Config parse_config_json(const std::string& json_text) {
    json root = json::parse(json_text, nullptr, true, true);  // allow comments
    if (!root.is_object()) throw ConfigError("config root must be an object");
    check_keys(root,
               {"chunk_turns", "branching_factor", "scene_threshold", "extract_concurrency",
                "flush_parallelism", "retry_limit", "embedding_dim", "retrieval", "backends",
                "topics"},
               "config");

    Config c = default_config();
    c.chunk_turns = root.value("chunk_turns", c.chunk_turns);
    if (c.chunk_turns < 1) throw ConfigError("chunk_turns must be >= 1");

    if (root.contains("branching_factor")) {
        const json& b = root["branching_factor"];
        if (b.is_number_integer()) {
            c.branching["default"] = b.get<int>();
        } else if (b.is_object()) {
            check_keys(b, {"default", "session", "entity", "scene"}, "branching_factor");
            for (auto it = b.begin(); it != b.end(); ++it) c.branching[it.key()] = it->get<int>();
        } else {
            throw ConfigError("branching_factor must be an integer or an object");
        }
        for (const auto& [name, k] : c.branching) {
            if (k < 2) throw ConfigError("branching_factor must be >= 2 (" + name + ")");
        }
    }

    c.scene_threshold = root.value("scene_threshold", c.scene_threshold);
    c.extract_concurrency = root.value("extract_concurrency", c.extract_concurrency);
    c.flush_parallelism = root.value("flush_parallelism", c.flush_parallelism);
    c.retry_limit = root.value("retry_limit", c.retry_limit);
    c.embedding_dim = root.value("embedding_dim", c.embedding_dim);
    if (c.extract_concurrency < 1) throw ConfigError("extract_concurrency must be >= 1");
    if (c.flush_parallelism < 1) throw ConfigError("flush_parallelism must be >= 1");

    if (root.contains("retrieval")) {
        const json& r = root["retrieval"];
        check_keys(r,
                   {"k_root", "k_fact", "k_trees", "beam_width", "leaf_budget", "step_budget",
                    "final_top_k", "combiner", "combiner_alpha"},
                   "retrieval");
        RetrievalConfig& rc = c.retrieval;
        rc.k_root = r.value("k_root", rc.k_root);
        rc.k_fact = r.value("k_fact", rc.k_fact);
        rc.k_trees = r.value("k_trees", rc.k_trees);
        rc.beam_width = r.value("beam_width", rc.beam_width);
        rc.leaf_budget = r.value("leaf_budget", rc.leaf_budget);
        rc.step_budget = r.value("step_budget", rc.step_budget);
        rc.final_top_k = r.value("final_top_k", rc.final_top_k);
        if (r.contains("combiner")) rc.combiner = combiner_from_string(r["combiner"].get<std::string>());
        rc.combiner_alpha = r.value("combiner_alpha", rc.combiner_alpha);
    }

    if (root.contains("backends")) {
        const json& b = root["backends"];
        check_keys(b, {"extractor", "summarizer", "embedder", "chooser", "planner", "chat"}, "backends");
        for (auto it = b.begin(); it != b.end(); ++it)
            c.backends[it.key()] = parse_backend(*it, "backends." + it.key());
    }

    if (root.contains("topics")) {
        for (auto it = root["topics"].begin(); it != root["topics"].end(); ++it)
            c.topics[it.key()] = it->get<std::vector<std::string>>();
    }

    return c;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_json(ss.str());
}

std::string dump_config_json(const Config& c) {
    json root;
    root["chunk_turns"] = c.chunk_turns;
    if (!c.branching.empty()) root["branching_factor"] = c.branching;
    root["scene_threshold"] = c.scene_threshold;
    root["extract_concurrency"] = c.extract_concurrency;
    root["flush_parallelism"] = c.flush_parallelism;
    root["retry_limit"] = c.retry_limit;
    root["embedding_dim"] = c.embedding_dim;
    json r;
    r["k_root"] = c.retrieval.k_root;
    r["k_fact"] = c.retrieval.k_fact;
    r["k_trees"] = c.retrieval.k_trees;
    r["beam_width"] = c.retrieval.beam_width;
    r["leaf_budget"] = c.retrieval.leaf_budget;
    r["step_budget"] = c.retrieval.step_budget;
    r["final_top_k"] = c.retrieval.final_top_k;
    r["combiner"] = to_string(c.retrieval.combiner);
    r["combiner_alpha"] = c.retrieval.combiner_alpha;
    root["retrieval"] = r;
    if (!c.topics.empty()) root["topics"] = c.topics;
    return root.dump(2);
}

}  // namespace memforest
