#include "memforest/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "memforest/backends_factory.hpp"
#include "memforest/bench.hpp"
#include "memforest/errors.hpp"
#include "memforest/ingest.hpp"
#include "memforest/lifecycle.hpp"
#include "memforest/retrieval.hpp"
#include "memforest/session_io.hpp"
#include "memforest/snapshot.hpp"

namespace memforest::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// One store, one process: a lock file in the store directory enforces
// exclusive access.
class StoreLock {
public:
    explicit StoreLock(const std::string& dir) {
        fs::create_directories(dir);
        path_ = fs::path(dir) / ".lock";
        if (fs::exists(path_))
            throw PreconditionError("store is locked by another process: " + path_.string() +
                                    " (remove the lock file if that process is gone)");
        std::ofstream out(path_);
        out << "memforest\n";
    }
    ~StoreLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    StoreLock(const StoreLock&) = delete;
    StoreLock& operator=(const StoreLock&) = delete;

private:
    fs::path path_;
};

struct OutputOptions {
    bool compact = false;
    bool timestamps = false;
};

void emit(std::ostream& out, const json& j, const OutputOptions& opts) {
    out << (opts.compact ? j.dump() : j.dump(2)) << "\n";
}

json anchor_json(const TemporalAnchor& a) {
    return json{{"start", format_instant(a.start, a.precision)},
                {"end", format_instant(a.end, a.precision)},
                {"precision", to_string(a.precision)}};
}

json flush_json(const FlushStats& s, const OutputOptions& opts) {
    json j;
    j["structural_inserts"] = s.structural_inserts;
    j["trees_touched"] = s.trees_touched;
    j["nodes_refreshed"] = s.nodes_refreshed;
    j["summarizer_calls"] = s.summarizer_calls;
    j["embedder_calls"] = s.embedder_calls;
    j["passthrough_refreshes"] = s.passthrough_refreshes;
    j["max_dependency_depth"] = s.max_dependency_depth;
    json by_level = json::object();
    for (const auto& [level, count] : s.refreshed_by_level)
        by_level[std::to_string(level)] = count;
    j["refreshed_by_level"] = by_level;
    if (!s.errors.empty()) {
        json errors = json::array();
        for (const FlushError& e : s.errors)
            errors.push_back(json{{"tree", e.tree}, {"node", e.node}, {"message", e.message}});
        j["errors"] = errors;
    }
    if (opts.timestamps) {
        j["structural_ms"] = s.structural_ms;
        j["summary_ms"] = s.summary_ms;
        j["embed_ms"] = s.embed_ms;
    }
    return j;
}

json ingest_report_json(const IngestReport& r, const OutputOptions& opts) {
    json j;
    j["session_id"] = r.session_id;
    j["chunks"] = r.chunks;
    j["candidates"] = r.candidates;
    j["facts"] = r.facts_new;
    j["duplicates_merged"] = r.duplicates_merged;
    j["facts_touched_existing"] = r.facts_touched_existing;
    j["skipped_empty"] = r.skipped_empty;
    j["trees_touched"] = r.trees_touched;
    j["flush"] = flush_json(r.flush, opts);
    if (!r.chunk_errors.empty()) {
        json errors = json::array();
        for (const ChunkError& e : r.chunk_errors)
            errors.push_back(json{{"chunk", e.chunk_index}, {"message", e.message},
                                  {"attempts", e.attempts}});
        j["chunk_errors"] = errors;
    }
    if (r.scene_deferred) j["scene_deferred"] = true;
    if (opts.timestamps) j["wall_ms"] = r.wall_ms;
    return j;
}

json evidence_json(const EvidenceItem& e) {
    json refs = json::array();
    for (const SourceRef& r : e.source_refs)
        refs.push_back(json{{"session_id", r.session_id},
                            {"first_turn", r.first_turn},
                            {"last_turn", r.last_turn}});
    json j;
    j["text"] = e.text;
    j["anchor"] = anchor_json(e.anchor);
    j["source_refs"] = refs;
    j["score"] = e.score;
    return j;
}

json answer_context_json(const AnswerContext& ctx) {
    json j;
    j["query"] = ctx.query;
    j["mode"] = to_string(ctx.mode);
    json candidates = json::array();
    for (const RecallCandidate& c : ctx.candidates) {
        candidates.push_back(json{{"tree", c.tree},
                                  {"root_score", c.root_score},
                                  {"best_fact_score", c.best_fact_score},
                                  {"combined", c.combined},
                                  {"provenance", to_string(c.provenance)}});
    }
    j["candidates"] = candidates;
    json traces = json::array();
    for (const BrowseTrace& t : ctx.traces) {
        json steps = json::array();
        for (const BrowseStep& s : t.steps) {
            json step{{"node", s.node}, {"chosen", s.chosen}};
            if (s.chooser_fallback) step["chooser_fallback"] = true;
            if (s.stopped) step["stopped"] = true;
            steps.push_back(std::move(step));
        }
        json trace{{"tree", t.tree},
                   {"subquery", t.subquery},
                   {"visited", t.visited},
                   {"leaves", t.leaves},
                   {"steps", steps}};
        if (t.used_embedding_fallback) trace["used_embedding_fallback"] = true;
        traces.push_back(std::move(trace));
    }
    j["traces"] = traces;
    json evidence = json::array();
    for (const EvidenceItem& e : ctx.evidence) evidence.push_back(evidence_json(e));
    j["evidence"] = evidence;
    if (ctx.planner_fallback) j["planner_fallback"] = true;
    return j;
}

json stats_json(const StoreStats& s) {
    json heights = json::object();
    for (const auto& [tid, h] : s.heights) heights[std::to_string(tid)] = h;
    return json{{"sessions", s.sessions},
                {"facts", s.facts},
                {"cells", s.cells},
                {"trees_by_family", s.trees_by_family},
                {"nodes", s.nodes},
                {"dirty_nodes", s.dirty_nodes},
                {"scene_clusters", s.scene_clusters},
                {"node_rows", s.node_rows},
                {"root_rows", s.root_rows},
                {"fact_rows", s.fact_rows},
                {"max_height", s.max_height},
                {"heights", heights}};
}

Config effective_config(const std::string& config_path, const MemoryStore* store) {
    if (!config_path.empty()) return load_config(config_path);
    if (store) return store->config;
    return default_config();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << content;
}

int run_parsed(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"memforest: persistent agent memory engine"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string store_dir, config_path;
    OutputOptions opts;
    app.add_option("--store", store_dir, "store directory");
    app.add_option("--config", config_path, "config JSON file");
    app.add_flag("--json", opts.compact, "compact single-line JSON output");
    app.add_flag("--timestamps", opts.timestamps, "include wall-clock fields in output");

    auto* cmd_ingest = app.add_subcommand("ingest", "ingest a session file");
    std::string session_file;
    cmd_ingest->add_option("file", session_file, "session JSON file")->required();

    auto* cmd_query = app.add_subcommand("query", "retrieve evidence for a query");
    std::string query_text, mode_name = "llm+planner";
    int top_k = 0;
    bool with_answer = false;
    cmd_query->add_option("query", query_text, "query string")->required();
    cmd_query->add_option("--mode", mode_name,
                          "flat|root-only|emb|emb+planner|llm|llm+planner");
    cmd_query->add_option("--top-k", top_k, "final evidence budget");
    cmd_query->add_flag("--answer", with_answer, "forward evidence to the chat backend");

    auto* cmd_merge = app.add_subcommand("merge", "merge two stores into --store");
    std::string merge_a, merge_b;
    cmd_merge->add_option("first", merge_a, "first store directory")->required();
    cmd_merge->add_option("second", merge_b, "second store directory")->required();

    auto* cmd_delete = app.add_subcommand("delete", "delete one session");
    std::string delete_session_id;
    cmd_delete->add_option("session", delete_session_id, "session id")->required();

    auto* cmd_remat = app.add_subcommand("rematerialize", "regenerate derived artifacts");
    int new_k = 0;
    bool refresh_embeddings = false, refresh_summaries = false;
    std::vector<std::string> unsupported;
    cmd_remat->add_option("--k", new_k, "new branching factor");
    cmd_remat->add_flag("--refresh-embeddings", refresh_embeddings, "re-embed all artifacts");
    cmd_remat->add_flag("--refresh-summaries", refresh_summaries, "resummarize all nodes");
    cmd_remat->add_option("--chunk-turns", unsupported,
                          "unsupported: changing extraction settings needs re-ingestion");

    auto* cmd_stats = app.add_subcommand("stats", "store statistics");

    auto* cmd_bench = app.add_subcommand("bench", "write-path benchmark scenarios");
    std::string scenario, out_dir;
    std::vector<std::size_t> sizes;
    std::vector<int> ks{2, 4, 8, 16, 32, 64};
    std::size_t bench_n = 512, instances = 8;
    int bench_k = 8;
    double unit_cost = bench::kLlmCallCost;
    cmd_bench->add_option("--scenario", scenario, "lazy-vs-eager|level-parallel|k-sweep|migration")
        ->required();
    cmd_bench->add_option("--out-dir", out_dir, "directory for CSV output");
    cmd_bench->add_option("--sizes", sizes, "facts-per-tree sizes");
    cmd_bench->add_option("--ks", ks, "branching factors for k-sweep");
    cmd_bench->add_option("--n", bench_n, "facts per tree for k-sweep");
    cmd_bench->add_option("--k", bench_k, "branching factor");
    cmd_bench->add_option("--instances", instances, "instances for migration");
    cmd_bench->add_option("--unit-cost", unit_cost, "time units per port call");

    std::vector<std::string> argv = args;
    std::reverse(argv.begin(), argv.end());
    try {
        app.parse(argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            out << app.help();
            return 0;
        }
        err << "usage error: " << e.what() << "\n";
        return 1;
    }

    auto need_store = [&]() -> std::string {
        if (store_dir.empty()) throw ConfigError("--store is required for this command");
        return store_dir;
    };

    if (cmd_ingest->parsed()) {
        StoreLock lock(need_store());
        std::unique_ptr<MemoryStore> store;
        if (snapshot_exists(store_dir)) store = load_snapshot(store_dir);
        else store = std::make_unique<MemoryStore>(effective_config(config_path, nullptr));
        if (!config_path.empty()) store->config = load_config(config_path);
        Backends backends = make_backends(store->config);

        json reports = json::array();
        for (const Session& s : load_sessions_file(session_file))
            reports.push_back(ingest_report_json(ingest_session(*store, s, backends), opts));
        save_snapshot(*store, store_dir);
        emit(out, reports.size() == 1 ? reports.front() : json{{"reports", reports}}, opts);
        return 0;
    }

    if (cmd_query->parsed()) {
        std::unique_ptr<MemoryStore> store = load_snapshot(need_store());
        Config config = effective_config(config_path, store.get());
        if (top_k > 0) config.retrieval.final_top_k = top_k;
        Backends backends = make_backends(config);
        RetrieveMode mode = retrieve_mode_from_string(mode_name);
        AnswerContext ctx = retrieve(*store, query_text, mode, backends, config.retrieval);
        json j = answer_context_json(ctx);
        if (with_answer) {
            std::vector<std::string> evidence;
            for (const EvidenceItem& e : ctx.evidence) evidence.push_back(e.text);
            j["answer"] = backends.chat->answer(query_text, evidence);
        }
        emit(out, j, opts);
        return 0;
    }

    if (cmd_merge->parsed()) {
        StoreLock lock(need_store());
        std::unique_ptr<MemoryStore> a = load_snapshot(merge_a);
        std::unique_ptr<MemoryStore> b = load_snapshot(merge_b);
        Backends backends = make_backends(effective_config(config_path, a.get()));
        MergeOutcome outcome = merge(*a, *b, backends);
        save_snapshot(*outcome.store, store_dir);
        const MergeReport& r = outcome.report;
        emit(out,
             json{{"facts_copied", r.facts_copied},
                  {"facts_merged", r.facts_merged},
                  {"cells_copied", r.cells_copied},
                  {"sessions_copied", r.sessions_copied},
                  {"trees_copied", r.trees_copied},
                  {"trees_merged", r.trees_merged},
                  {"scene_clusters_matched", r.scene_clusters_matched},
                  {"scene_clusters_copied", r.scene_clusters_copied},
                  {"structural_inserts", r.structural_inserts},
                  {"leaves_skipped", r.leaves_skipped},
                  {"flush", flush_json(r.flush, opts)}},
             opts);
        return 0;
    }

    if (cmd_delete->parsed()) {
        StoreLock lock(need_store());
        std::unique_ptr<MemoryStore> store = load_snapshot(store_dir);
        Backends backends = make_backends(effective_config(config_path, store.get()));
        DeleteReport r = delete_session(*store, delete_session_id, backends);
        if (!r.known) err << "warning: unknown session " << delete_session_id << "\n";
        else save_snapshot(*store, store_dir);
        emit(out,
             json{{"session_id", r.session_id},
                  {"known", r.known},
                  {"facts_removed", r.facts_removed},
                  {"facts_retained", r.facts_retained},
                  {"cells_removed", r.cells_removed},
                  {"leaves_removed", r.leaves_removed},
                  {"trees_dropped", r.trees_dropped},
                  {"flush", flush_json(r.flush, opts)}},
             opts);
        return 0;
    }

    if (cmd_remat->parsed()) {
        if (!unsupported.empty())
            throw ConfigError(
                "unsupported migration: extraction settings require re-ingestion; supported "
                "migrations are --k, --refresh-embeddings, --refresh-summaries");
        StoreLock lock(need_store());
        std::unique_ptr<MemoryStore> store = load_snapshot(store_dir);
        Backends backends = make_backends(effective_config(config_path, store.get()));
        RematerializeOptions options;
        if (new_k > 0) options.branching_factor = new_k;
        options.refresh_embeddings = refresh_embeddings;
        options.refresh_summaries = refresh_summaries;
        RematerializeReport r = rematerialize(*store, options, backends);
        save_snapshot(*store, store_dir);
        emit(out,
             json{{"trees_rebuilt", r.trees_rebuilt},
                  {"embeddings_refreshed", r.embeddings_refreshed},
                  {"flush", flush_json(r.flush, opts)},
                  {"extractor_calls", backends.ledger->calls(PortCallLedger::extractor)}},
             opts);
        return 0;
    }

    if (cmd_stats->parsed()) {
        std::unique_ptr<MemoryStore> store = load_snapshot(need_store());
        emit(out, stats_json(store->stats()), opts);
        return 0;
    }

    if (cmd_bench->parsed()) {
        json metrics;
        std::string csv;
        if (scenario == "lazy-vs-eager") {
            if (sizes.empty()) sizes = {16, 64, 256, 1024};
            auto rows = bench::lazy_vs_eager(sizes, bench_k);
            csv = bench::to_csv(rows);
            json jrows = json::array();
            for (const auto& r : rows)
                jrows.push_back(json{{"facts", r.facts},
                                     {"eager_calls", r.eager_calls},
                                     {"lazy_calls", r.lazy_calls},
                                     {"eager_over_lazy", r.ratio}});
            metrics = json{{"scenario", scenario}, {"k", bench_k}, {"rows", jrows}};
        } else if (scenario == "level-parallel") {
            if (sizes.empty()) sizes = {64, 256, 1024};
            auto rows = bench::level_parallel(sizes, bench_k, unit_cost);
            csv = bench::to_csv(rows);
            json jrows = json::array();
            for (const auto& r : rows)
                jrows.push_back(json{{"facts", r.facts},
                                     {"summarizer_calls", r.summarizer_calls},
                                     {"critical_depth", r.critical_depth},
                                     {"serial_cost", r.serial_cost},
                                     {"parallel_cost", r.parallel_cost},
                                     {"speedup", r.speedup}});
            metrics = json{{"scenario", scenario}, {"k", bench_k}, {"unit_cost", unit_cost},
                           {"rows", jrows}};
        } else if (scenario == "k-sweep") {
            auto rows = bench::k_sweep(ks, bench_n);
            csv = bench::to_csv(rows);
            json jrows = json::array();
            for (const auto& r : rows)
                jrows.push_back(json{{"k", r.k},
                                     {"facts", r.facts},
                                     {"height", r.height},
                                     {"expected_height", r.expected_height},
                                     {"summarizer_calls", r.summarizer_calls},
                                     {"root_recall_proxy", r.root_recall_proxy}});
            metrics = json{{"scenario", scenario}, {"n", bench_n}, {"rows", jrows}};
        } else if (scenario == "migration") {
            auto rows = bench::migration(instances);
            csv = bench::to_csv(rows);
            json jrows = json::array();
            for (const auto& r : rows)
                jrows.push_back(json{{"n", r.n},
                                     {"seq_cost", r.seq_cost},
                                     {"mig_cost", r.mig_cost},
                                     {"seq_over_mig", r.ratio},
                                     {"seq_facts", r.seq_facts},
                                     {"mig_facts", r.mig_facts},
                                     {"seq_trees", r.seq_trees},
                                     {"mig_trees", r.mig_trees},
                                     {"fact_multisets_equal", r.fact_multisets_equal}});
            metrics = json{{"scenario", scenario}, {"instances", instances}, {"rows", jrows}};
        } else {
            throw ConfigError("unknown bench scenario: " + scenario +
                              " (expected lazy-vs-eager|level-parallel|k-sweep|migration)");
        }
        if (!out_dir.empty()) {
            fs::create_directories(out_dir);
            write_file(fs::path(out_dir) / (scenario + ".csv"), csv);
        }
        emit(out, metrics, opts);
        return 0;
    }

    err << "usage error: no subcommand\n";
    return 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        return run_parsed(args, out, err);
    } catch (const ConfigError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << "\n";
        return 2;
    } catch (const PreconditionError& e) {
        err << "input error: " << e.what() << "\n";
        return 2;
    } catch (const TransientBackendError& e) {
        err << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const PermanentBackendError& e) {
        err << "backend error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace memforest::cli
