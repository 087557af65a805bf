#include "memforest/snapshot.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "memforest/errors.hpp"

namespace memforest {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json anchor_json(const TemporalAnchor& a) {
    return json{{"start", a.start}, {"end", a.end}, {"precision", to_string(a.precision)}};
}

TemporalAnchor anchor_from(const json& j) {
    TemporalAnchor a;
    a.start = j.at("start").get<Instant>();
    a.end = j.at("end").get<Instant>();
    a.precision = precision_from_string(j.at("precision").get<std::string>());
    return a;
}

json payload_json(const PayloadRef& p) {
    return json{{"kind", p.kind == PayloadRef::Kind::fact ? "fact" : "cell"}, {"id", p.id}};
}

PayloadRef payload_from(const json& j) {
    PayloadRef p;
    p.kind = j.at("kind").get<std::string>() == "fact" ? PayloadRef::Kind::fact
                                                       : PayloadRef::Kind::cell;
    p.id = j.at("id").get<std::uint64_t>();
    return p;
}

json vector_json(const std::vector<float>& v) {
    json out = json::array();
    for (float x : v) out.push_back(static_cast<double>(x));
    return out;
}

std::vector<float> vector_from(const json& j) {
    std::vector<float> out;
    out.reserve(j.size());
    for (const auto& x : j) out.push_back(static_cast<float>(x.get<double>()));
    return out;
}

class JsonlWriter {
public:
    JsonlWriter(const fs::path& path, const std::string& file_tag) : out_(path, std::ios::binary) {
        if (!out_) throw InputError("cannot write " + path.string());
        json header{{"kind", "header"}, {"file", file_tag}, {"format_version", kSnapshotFormatVersion}};
        write(header);
    }
    void write(const json& record) { out_ << record.dump() << "\n"; }

private:
    std::ofstream out_;
};

std::vector<json> read_jsonl(const fs::path& path, const std::string& file_tag) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    std::vector<json> records;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        if (first) {
            first = false;
            if (j.value("kind", "") != "header" ||
                j.value("format_version", -1) != kSnapshotFormatVersion ||
                j.value("file", "") != file_tag) {
                throw InputError("unsupported snapshot format in " + path.string() +
                                 " (expected format_version " +
                                 std::to_string(kSnapshotFormatVersion) + ")");
            }
            continue;
        }
        records.push_back(std::move(j));
    }
    if (first) throw InputError("missing header record in " + path.string());
    return records;
}

constexpr char kEmbeddingMagic[4] = {'M', 'F', 'E', 'B'};

void write_embeddings(const fs::path& path, const std::map<NodeId, std::vector<float>>& rows,
                      std::uint32_t dim) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    std::uint32_t version = kSnapshotFormatVersion;
    std::uint64_t count = rows.size();
    out.write(kEmbeddingMagic, 4);
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& [nid, vec] : rows) {
        out.write(reinterpret_cast<const char*>(&nid), sizeof(nid));
        out.write(reinterpret_cast<const char*>(vec.data()),
                  static_cast<std::streamsize>(vec.size() * sizeof(float)));
    }
}

std::map<NodeId, std::vector<float>> read_embeddings(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    char magic[4];
    std::uint32_t version = 0, dim = 0;
    std::uint64_t count = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in || std::memcmp(magic, kEmbeddingMagic, 4) != 0)
        throw InputError("bad embeddings file header: " + path.string());
    if (version != static_cast<std::uint32_t>(kSnapshotFormatVersion))
        throw InputError("unsupported embeddings format version in " + path.string());
    std::map<NodeId, std::vector<float>> rows;
    for (std::uint64_t i = 0; i < count; ++i) {
        NodeId nid = 0;
        std::vector<float> vec(dim);
        in.read(reinterpret_cast<char*>(&nid), sizeof(nid));
        in.read(reinterpret_cast<char*>(vec.data()),
                static_cast<std::streamsize>(dim * sizeof(float)));
        if (!in) throw InputError("truncated embeddings file: " + path.string());
        rows.emplace(nid, std::move(vec));
    }
    return rows;
}

}  // namespace

bool snapshot_exists(const std::string& dir) {
    return fs::exists(fs::path(dir) / "meta.json");
}

void save_snapshot(const MemoryStore& store, const std::string& dir) {
    fs::create_directories(dir);
    const fs::path base(dir);

    {
        json meta;
        meta["format_version"] = kSnapshotFormatVersion;
        meta["ids"] = {{"fact", store.ids.next_fact},     {"cell", store.ids.next_cell},
                       {"node", store.ids.next_node},     {"tree", store.ids.next_tree},
                       {"cluster", store.ids.next_cluster}, {"arrival", store.ids.next_arrival}};
        meta["config"] = json::parse(dump_config_json(store.config));
        std::ofstream out(base / "meta.json", std::ios::binary);
        if (!out) throw InputError("cannot write meta.json");
        out << meta.dump(2) << "\n";
    }

    {
        JsonlWriter w(base / "sessions.jsonl", "sessions");
        for (const auto& [sid, s] : store.sessions) {
            json turns = json::array();
            for (const Turn& t : s.turns) {
                turns.push_back(json{{"index", t.index},
                                     {"speaker", to_string(t.speaker)},
                                     {"text", t.text},
                                     {"timestamp", t.timestamp},
                                     {"precision", to_string(t.precision)}});
            }
            w.write(json{{"kind", "session"},
                         {"session_id", sid},
                         {"arrival_seq", s.arrival_seq},
                         {"turns", turns}});
        }
    }

    {
        JsonlWriter w(base / "facts.jsonl", "facts");
        for (const auto& [fid, f] : store.facts) {
            json refs = json::array();
            for (const SourceRef& r : f.source_refs)
                refs.push_back(json{{"session_id", r.session_id},
                                    {"first_turn", r.first_turn},
                                    {"last_turn", r.last_turn}});
            w.write(json{{"kind", "fact"},
                         {"fact_id", fid},
                         {"text", f.text},
                         {"anchor", anchor_json(f.anchor)},
                         {"source_refs", refs},
                         {"entities", f.entities},
                         {"topics", f.topics},
                         {"canonical_key", f.canonical_key}});
        }
    }

    {
        JsonlWriter w(base / "cells.jsonl", "cells");
        for (const auto& [cid, c] : store.cells) {
            w.write(json{{"kind", "cell"},
                         {"cell_id", cid},
                         {"session_id", c.session_id},
                         {"first_turn", c.first_turn},
                         {"last_turn", c.last_turn},
                         {"text", c.text},
                         {"anchor", anchor_json(c.anchor)}});
        }
    }

    {
        JsonlWriter w(base / "placement.jsonl", "placement");
        for (const auto& [payload, locs] : store.placement.entries()) {
            json leaves = json::array();
            for (const LeafLocation& l : locs)
                leaves.push_back(json{{"tree", l.tree}, {"leaf", l.leaf}});
            w.write(json{{"kind", "placement"}, {"payload", payload_json(payload)}, {"leaves", leaves}});
        }
    }

    {
        JsonlWriter w(base / "registry.jsonl", "registry");
        for (const auto& [sid, a] : store.registry.entries()) {
            w.write(json{{"kind", "registry"},
                         {"session_id", sid},
                         {"facts", a.facts},
                         {"cells", a.cells},
                         {"trees", a.trees}});
        }
    }

    {
        JsonlWriter w(base / "trees.jsonl", "trees");
        std::map<NodeId, std::vector<float>> embeddings;
        for (const auto& [tid, tree] : store.trees) {
            w.write(json{{"kind", "tree"},
                         {"tree_id", tid},
                         {"family", to_string(tree.scope.family)},
                         {"key", tree.scope.key},
                         {"k", tree.k},
                         {"root", tree.root},
                         {"leaf_count", tree.leaf_count},
                         {"next_seq", tree.next_seq}});
        }
        for (const auto& [tid, tree] : store.trees) {
            for (const auto& [nid, n] : tree.nodes) {
                json rec{{"kind", "node"},
                         {"tree", tid},
                         {"node_id", nid},
                         {"level", n.level},
                         {"parent", n.parent},
                         {"interval", anchor_json(n.interval)},
                         {"max_key", json{{"start", n.max_key.start}, {"seq", n.max_key.seq}}},
                         {"dirty", n.dirty}};
                if (n.is_leaf()) rec["payload"] = payload_json(n.payload);
                else rec["children"] = n.children;
                if (n.summary) rec["summary"] = *n.summary;
                w.write(rec);
                if (n.embedding) embeddings.emplace(nid, *n.embedding);
            }
        }
        std::uint32_t dim = static_cast<std::uint32_t>(store.config.embedding_dim);
        for (const auto& [nid, vec] : embeddings) dim = static_cast<std::uint32_t>(vec.size());
        write_embeddings(base / "embeddings.bin", embeddings, dim);
    }

    {
        JsonlWriter w(base / "scenes.jsonl", "scenes");
        for (const auto& [cid, c] : store.scenes.clusters()) {
            w.write(json{{"kind", "scene"},
                         {"cluster_id", cid},
                         {"centroid", vector_json(c.centroid)},
                         {"members", c.members},
                         {"label", c.label}});
        }
        for (const auto& [fid, vec] : store.scenes.member_vectors)
            w.write(json{{"kind", "scene_member"}, {"fact", fid}, {"vector", vector_json(vec)}});
        for (FactId fid : store.scene_pending)
            w.write(json{{"kind", "scene_pending"}, {"fact", fid}});
    }

    {
        JsonlWriter w(base / "fact_index.jsonl", "fact_index");
        for (const auto& [key, row] : store.fact_index.rows())
            w.write(json{{"kind", "fact_row"}, {"fact", key}, {"vector", vector_json(row.vector)}});
        for (const auto& [fid, vec] : store.pending_fact_rows)
            w.write(json{{"kind", "pending_fact_row"}, {"fact", fid}, {"vector", vector_json(vec)}});
    }
}

std::unique_ptr<MemoryStore> load_snapshot(const std::string& dir) {
    const fs::path base(dir);
    if (!snapshot_exists(dir)) throw InputError("no snapshot at " + dir);

    json meta;
    {
        std::ifstream in(base / "meta.json", std::ios::binary);
        if (!in) throw InputError("cannot read meta.json");
        std::stringstream ss;
        ss << in.rdbuf();
        meta = json::parse(ss.str());
    }
    if (meta.value("format_version", -1) != kSnapshotFormatVersion)
        throw InputError("unsupported snapshot format_version (expected " +
                         std::to_string(kSnapshotFormatVersion) + ")");

    auto store = std::make_unique<MemoryStore>(parse_config_json(meta.at("config").dump()));
    const json& ids = meta.at("ids");
    store->ids.next_fact = ids.at("fact").get<std::uint64_t>();
    store->ids.next_cell = ids.at("cell").get<std::uint64_t>();
    store->ids.next_node = ids.at("node").get<std::uint64_t>();
    store->ids.next_tree = ids.at("tree").get<std::uint64_t>();
    store->ids.next_cluster = ids.at("cluster").get<std::uint64_t>();
    store->ids.next_arrival = ids.at("arrival").get<std::uint64_t>();

    for (const json& j : read_jsonl(base / "sessions.jsonl", "sessions")) {
        Session s;
        s.session_id = j.at("session_id").get<std::string>();
        s.arrival_seq = j.at("arrival_seq").get<std::uint64_t>();
        for (const json& tj : j.at("turns")) {
            Turn t;
            t.session_id = s.session_id;
            t.index = tj.at("index").get<int>();
            t.speaker = speaker_from_string(tj.at("speaker").get<std::string>());
            t.text = tj.at("text").get<std::string>();
            t.timestamp = tj.at("timestamp").get<Instant>();
            t.precision = precision_from_string(tj.at("precision").get<std::string>());
            s.turns.push_back(std::move(t));
        }
        store->sessions.emplace(s.session_id, std::move(s));
    }

    for (const json& j : read_jsonl(base / "facts.jsonl", "facts")) {
        CanonicalFact f;
        f.fact_id = j.at("fact_id").get<FactId>();
        f.text = j.at("text").get<std::string>();
        f.anchor = anchor_from(j.at("anchor"));
        for (const json& rj : j.at("source_refs"))
            f.source_refs.insert(SourceRef{rj.at("session_id").get<std::string>(),
                                           rj.at("first_turn").get<int>(),
                                           rj.at("last_turn").get<int>()});
        f.entities = j.at("entities").get<std::set<std::string>>();
        f.topics = j.at("topics").get<std::set<std::string>>();
        f.canonical_key = j.at("canonical_key").get<std::string>();
        store->fact_by_key[f.canonical_key] = f.fact_id;
        store->facts.emplace(f.fact_id, std::move(f));
    }

    for (const json& j : read_jsonl(base / "cells.jsonl", "cells")) {
        DialogueCell c;
        c.cell_id = j.at("cell_id").get<CellId>();
        c.session_id = j.at("session_id").get<std::string>();
        c.first_turn = j.at("first_turn").get<int>();
        c.last_turn = j.at("last_turn").get<int>();
        c.text = j.at("text").get<std::string>();
        c.anchor = anchor_from(j.at("anchor"));
        store->cells.emplace(c.cell_id, std::move(c));
    }

    for (const json& j : read_jsonl(base / "placement.jsonl", "placement")) {
        PayloadRef payload = payload_from(j.at("payload"));
        for (const json& lj : j.at("leaves"))
            store->placement.add(payload, LeafLocation{lj.at("tree").get<TreeId>(),
                                                       lj.at("leaf").get<NodeId>()});
    }

    for (const json& j : read_jsonl(base / "registry.jsonl", "registry")) {
        SessionArtifacts a;
        for (const auto& v : j.at("facts")) a.facts.insert(v.get<FactId>());
        for (const auto& v : j.at("cells")) a.cells.insert(v.get<CellId>());
        for (const auto& v : j.at("trees")) a.trees.insert(v.get<TreeId>());
        store->registry.register_session(j.at("session_id").get<std::string>(), std::move(a));
    }

    std::map<NodeId, std::vector<float>> embeddings = read_embeddings(base / "embeddings.bin");
    for (const json& j : read_jsonl(base / "trees.jsonl", "trees")) {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "tree") {
            MemTree tree;
            tree.id = j.at("tree_id").get<TreeId>();
            tree.scope = ScopeId{scope_family_from_string(j.at("family").get<std::string>()),
                                 j.at("key").get<std::string>()};
            tree.k = j.at("k").get<int>();
            tree.root = j.at("root").get<NodeId>();
            tree.leaf_count = j.at("leaf_count").get<std::size_t>();
            tree.next_seq = j.at("next_seq").get<std::uint64_t>();
            store->scope_to_tree[tree.scope] = tree.id;
            store->trees.emplace(tree.id, std::move(tree));
        } else if (kind == "node") {
            TreeId tid = j.at("tree").get<TreeId>();
            MemTree& tree = store->trees.at(tid);
            TreeNode n;
            n.id = j.at("node_id").get<NodeId>();
            n.level = j.at("level").get<int>();
            n.parent = j.at("parent").get<NodeId>();
            n.interval = anchor_from(j.at("interval"));
            n.max_key = LeafKey{j.at("max_key").at("start").get<Instant>(),
                                j.at("max_key").at("seq").get<std::uint64_t>()};
            n.dirty = j.at("dirty").get<bool>();
            if (j.contains("payload")) n.payload = payload_from(j.at("payload"));
            if (j.contains("children")) n.children = j.at("children").get<std::vector<NodeId>>();
            if (j.contains("summary")) n.summary = j.at("summary").get<std::string>();
            auto eit = embeddings.find(n.id);
            if (eit != embeddings.end()) n.embedding = eit->second;
            if (n.dirty) tree.dirty_set.insert(n.id);
            tree.nodes.emplace(n.id, std::move(n));
        } else {
            throw InputError("unknown record kind in trees.jsonl: " + kind);
        }
    }

    for (const json& j : read_jsonl(base / "scenes.jsonl", "scenes")) {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "scene") {
            SceneCluster c;
            c.cluster_id = j.at("cluster_id").get<ClusterId>();
            c.centroid = vector_from(j.at("centroid"));
            for (const auto& v : j.at("members")) c.members.insert(v.get<FactId>());
            c.label = j.at("label").get<std::string>();
            store->scenes.put_cluster(std::move(c));
        } else if (kind == "scene_member") {
            store->scenes.member_vectors[j.at("fact").get<FactId>()] = vector_from(j.at("vector"));
        } else if (kind == "scene_pending") {
            store->scene_pending.insert(j.at("fact").get<FactId>());
        } else {
            throw InputError("unknown record kind in scenes.jsonl: " + kind);
        }
    }
    store->scenes.threshold = store->config.scene_threshold;

    for (const json& j : read_jsonl(base / "fact_index.jsonl", "fact_index")) {
        const std::string kind = j.at("kind").get<std::string>();
        FactId fid = j.at("fact").get<FactId>();
        if (kind == "fact_row") {
            IndexRow row;
            row.key = fid;
            row.owner = 0;
            row.vector = vector_from(j.at("vector"));
            row.text = store->facts.at(fid).text;
            store->fact_index.put_prenormalized(std::move(row));
        } else if (kind == "pending_fact_row") {
            store->pending_fact_rows[fid] = vector_from(j.at("vector"));
        } else {
            throw InputError("unknown record kind in fact_index.jsonl: " + kind);
        }
    }

    // Derived node/root rows regenerate from the loaded trees.
    for (const auto& [tid, tree] : store->trees) {
        for (const auto& [nid, n] : tree.nodes) {
            if (!n.summary || !n.embedding) continue;
            IndexRow row;
            row.key = nid;
            row.owner = tid;
            row.vector = *n.embedding;
            row.text = *n.summary;
            store->node_index.upsert(std::move(row));
        }
        if (tree.root != 0) {
            const TreeNode& r = tree.node(tree.root);
            if (r.summary && r.embedding && !r.dirty) {
                IndexRow row;
                row.key = tid;
                row.owner = tid;
                row.vector = *r.embedding;
                row.text = *r.summary;
                store->root_index.upsert(std::move(row));
            }
        }
    }

    return store;
}

}  // namespace memforest
