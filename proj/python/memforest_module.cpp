// Python bindings over the main engine operations: open/create a store,
// ingest sessions, query, lifecycle maintenance and snapshots. Everything
// runs on the backends selected by the store config (mocks by default).

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "memforest/backends_factory.hpp"
#include "memforest/bench.hpp"
#include "memforest/errors.hpp"
#include "memforest/ingest.hpp"
#include "memforest/lifecycle.hpp"
#include "memforest/retrieval.hpp"
#include "memforest/session_io.hpp"
#include "memforest/snapshot.hpp"

namespace py = pybind11;
using namespace memforest;

namespace {

py::dict anchor_dict(const TemporalAnchor& a) {
    py::dict d;
    d["start"] = format_instant(a.start, a.precision);
    d["end"] = format_instant(a.end, a.precision);
    d["precision"] = to_string(a.precision);
    return d;
}

py::dict flush_dict(const FlushStats& s) {
    py::dict d;
    d["structural_inserts"] = s.structural_inserts;
    d["trees_touched"] = s.trees_touched;
    d["nodes_refreshed"] = s.nodes_refreshed;
    d["summarizer_calls"] = s.summarizer_calls;
    d["embedder_calls"] = s.embedder_calls;
    d["passthrough_refreshes"] = s.passthrough_refreshes;
    d["max_dependency_depth"] = s.max_dependency_depth;
    d["complete"] = s.complete();
    return d;
}

// One store plus its backends; the unit the bindings operate on.
class PyStore {
public:
    explicit PyStore(const std::string& config_json) {
        Config config = config_json.empty() ? default_config() : parse_config_json(config_json);
        store_ = std::make_unique<MemoryStore>(config);
        backends_ = make_backends(store_->config);
    }
    explicit PyStore(std::unique_ptr<MemoryStore> store) : store_(std::move(store)) {
        backends_ = make_backends(store_->config);
    }

    static PyStore load(const std::string& dir) { return PyStore(load_snapshot(dir)); }

    void save(const std::string& dir) const { save_snapshot(*store_, dir); }

    std::vector<py::dict> ingest_file(const std::string& path) {
        std::vector<py::dict> reports;
        for (const Session& s : load_sessions_file(path))
            reports.push_back(report_dict(ingest_session(*store_, s, backends_)));
        return reports;
    }

    std::vector<py::dict> ingest_json(const std::string& sessions_json) {
        std::vector<py::dict> reports;
        for (const Session& s : parse_sessions_json(sessions_json))
            reports.push_back(report_dict(ingest_session(*store_, s, backends_)));
        return reports;
    }

    py::dict query(const std::string& query_text, const std::string& mode, int top_k) {
        RetrievalConfig cfg = store_->config.retrieval;
        if (top_k > 0) cfg.final_top_k = top_k;
        AnswerContext ctx = retrieve(*store_, query_text, retrieve_mode_from_string(mode),
                                     backends_, cfg);
        py::dict d;
        d["query"] = ctx.query;
        d["mode"] = to_string(ctx.mode);
        py::list evidence;
        for (const EvidenceItem& e : ctx.evidence) {
            py::dict item;
            item["text"] = e.text;
            item["anchor"] = anchor_dict(e.anchor);
            item["score"] = e.score;
            py::list refs;
            for (const SourceRef& r : e.source_refs) {
                py::dict ref;
                ref["session_id"] = r.session_id;
                ref["first_turn"] = r.first_turn;
                ref["last_turn"] = r.last_turn;
                refs.append(ref);
            }
            item["source_refs"] = refs;
            evidence.append(item);
        }
        d["evidence"] = evidence;
        py::list candidates;
        for (const RecallCandidate& c : ctx.candidates) {
            py::dict cd;
            cd["tree"] = c.tree;
            cd["combined"] = c.combined;
            cd["provenance"] = to_string(c.provenance);
            candidates.append(cd);
        }
        d["candidates"] = candidates;
        return d;
    }

    py::dict delete_session_(const std::string& session_id) {
        DeleteReport r = memforest::delete_session(*store_, session_id, backends_);
        py::dict d;
        d["session_id"] = r.session_id;
        d["known"] = r.known;
        d["facts_removed"] = r.facts_removed;
        d["facts_retained"] = r.facts_retained;
        d["cells_removed"] = r.cells_removed;
        d["leaves_removed"] = r.leaves_removed;
        d["trees_dropped"] = r.trees_dropped;
        d["flush"] = flush_dict(r.flush);
        return d;
    }

    PyStore merge_with(const PyStore& other) const {
        Backends backends = make_backends(store_->config);
        MergeOutcome outcome = memforest::merge(*store_, *other.store_, backends);
        return PyStore(std::move(outcome.store));
    }

    py::dict rematerialize_(int k, bool refresh_embeddings, bool refresh_summaries) {
        RematerializeOptions options;
        if (k > 0) options.branching_factor = k;
        options.refresh_embeddings = refresh_embeddings;
        options.refresh_summaries = refresh_summaries;
        RematerializeReport r = memforest::rematerialize(*store_, options, backends_);
        py::dict d;
        d["trees_rebuilt"] = r.trees_rebuilt;
        d["embeddings_refreshed"] = r.embeddings_refreshed;
        d["flush"] = flush_dict(r.flush);
        return d;
    }

    py::dict stats() const {
        StoreStats s = store_->stats();
        py::dict d;
        d["sessions"] = s.sessions;
        d["facts"] = s.facts;
        d["cells"] = s.cells;
        d["trees_by_family"] = s.trees_by_family;
        d["nodes"] = s.nodes;
        d["dirty_nodes"] = s.dirty_nodes;
        d["scene_clusters"] = s.scene_clusters;
        d["max_height"] = s.max_height;
        return d;
    }

    py::dict ledger() const {
        py::dict d;
        const char* names[] = {"extractor", "summarizer", "embedder", "chooser", "planner", "chat"};
        for (int p = 0; p < PortCallLedger::kPortCount; ++p) {
            PortCounters c = backends_.ledger->snapshot(static_cast<PortCallLedger::Port>(p));
            py::dict pd;
            pd["calls"] = c.calls;
            pd["input_units"] = c.input_units;
            pd["output_units"] = c.output_units;
            pd["failures"] = c.failures;
            d[names[p]] = pd;
        }
        return d;
    }

    void check() const { store_->check_invariants(); }

private:
    static py::dict report_dict(const IngestReport& r) {
        py::dict d;
        d["session_id"] = r.session_id;
        d["chunks"] = r.chunks;
        d["candidates"] = r.candidates;
        d["facts"] = r.facts_new;
        d["duplicates_merged"] = r.duplicates_merged;
        d["facts_touched_existing"] = r.facts_touched_existing;
        d["trees_touched"] = r.trees_touched;
        d["flush"] = flush_dict(r.flush);
        return d;
    }

    std::unique_ptr<MemoryStore> store_;
    Backends backends_;
};

}  // namespace

PYBIND11_MODULE(_memforest, m) {
    m.doc() = "MemForest: persistent agent memory with scoped temporal trees";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<InputError>(m, "InputError");
    py::register_exception<PreconditionError>(m, "PreconditionError");

    py::class_<PyStore>(m, "Store")
        .def(py::init<const std::string&>(), py::arg("config_json") = "")
        .def_static("load", &PyStore::load, py::arg("dir"))
        .def("save", &PyStore::save, py::arg("dir"))
        .def("ingest_file", &PyStore::ingest_file, py::arg("path"))
        .def("ingest_json", &PyStore::ingest_json, py::arg("sessions_json"))
        .def("query", &PyStore::query, py::arg("query"), py::arg("mode") = "llm+planner",
             py::arg("top_k") = 0)
        .def("delete_session", &PyStore::delete_session_, py::arg("session_id"))
        .def("merge_with", &PyStore::merge_with, py::arg("other"))
        .def("rematerialize", &PyStore::rematerialize_, py::arg("k") = 0,
             py::arg("refresh_embeddings") = false, py::arg("refresh_summaries") = false)
        .def("stats", &PyStore::stats)
        .def("ledger", &PyStore::ledger)
        .def("check", &PyStore::check);

    m.def("canonical_key", &canonical_key, py::arg("text"));

    m.def(
        "bench_migration",
        [](std::size_t instances) {
            py::list rows;
            for (const auto& r : bench::migration(instances)) {
                py::dict d;
                d["n"] = r.n;
                d["seq_cost"] = r.seq_cost;
                d["mig_cost"] = r.mig_cost;
                d["ratio"] = r.ratio;
                d["seq_facts"] = r.seq_facts;
                d["mig_facts"] = r.mig_facts;
                d["seq_trees"] = r.seq_trees;
                d["mig_trees"] = r.mig_trees;
                rows.append(d);
            }
            return rows;
        },
        py::arg("instances") = 8);

    m.attr("__version__") = "0.1.0";
}
