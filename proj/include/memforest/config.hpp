#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memforest/substrate.hpp"

namespace memforest {

enum class ScoreCombiner { max, mean, weighted };

struct RetrievalConfig {
    int k_root = 10;
    int k_fact = 20;
    int k_trees = 5;
    int beam_width = 2;
    int leaf_budget = 10;       // per tree
    int step_budget = 0;        // 0 = auto (2 * tree height)
    int final_top_k = 10;
    ScoreCombiner combiner = ScoreCombiner::max;
    double combiner_alpha = 0.5;  // weighted combiner only
};

struct BackendConfig {
    std::string kind = "mock";  // mock | http
    std::string base_url;
    std::string model;
    std::string auth_env;       // env var carrying the API key
    int timeout_ms = 30000;
    std::string script_path;    // scripted chooser fixtures
    std::string fixture_path;   // extractor sidecar fixtures
};

struct Config {
    int chunk_turns = 2;  // b
    std::map<std::string, int> branching;  // per tree family; default 8
    double scene_threshold = 0.60;
    int extract_concurrency = 4;
    int flush_parallelism = 4;
    int retry_limit = 2;
    std::size_t embedding_dim = 16;  // mock default; http reads from first response
    RetrievalConfig retrieval;
    std::map<std::string, BackendConfig> backends;  // extractor/summarizer/embedder/chooser/planner/chat
    std::map<std::string, std::vector<std::string>> topics;  // keyword buckets

    int branching_for(ScopeFamily family) const;
};

Config default_config();

// JSON config file; unknown keys rejected so typos fail loudly.
Config load_config(const std::string& path);
Config parse_config_json(const std::string& json_text);
std::string dump_config_json(const Config& config);

ScoreCombiner combiner_from_string(const std::string& s);
const char* to_string(ScoreCombiner c);

}  // namespace memforest
