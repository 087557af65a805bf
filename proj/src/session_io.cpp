#include "memforest/session_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "memforest/errors.hpp"

namespace memforest {

using nlohmann::json;

namespace {

Instant timestamp_from(const json& j, TimePrecision* precision) {
    if (j.is_number_integer()) {
        *precision = TimePrecision::second;
        return j.get<Instant>();
    }
    if (j.is_string()) return parse_instant(j.get<std::string>(), precision);
    throw InputError("timestamp must be an integer or a string");
}

Session parse_native_session(const json& j, std::size_t position) {
    Session s;
    s.session_id = j.value("session_id", std::string());
    if (s.session_id.empty()) s.session_id = "session-" + std::to_string(position + 1);
    s.arrival_seq = position + 1;

    Instant session_ts = 0;
    TimePrecision session_prec = TimePrecision::second;
    if (j.contains("timestamp")) session_ts = timestamp_from(j.at("timestamp"), &session_prec);

    if (!j.contains("turns") || !j.at("turns").is_array() || j.at("turns").empty())
        throw InputError("session " + s.session_id + " has no turns");

    int index = 1;
    for (const json& tj : j.at("turns")) {
        Turn t;
        t.session_id = s.session_id;
        t.index = index++;
        t.speaker = speaker_from_string(tj.value("role", std::string("user")));
        t.text = tj.value("content", std::string());
        if (tj.contains("timestamp")) {
            t.precision = TimePrecision::second;
            t.timestamp = timestamp_from(tj.at("timestamp"), &t.precision);
        } else {
            t.timestamp = session_ts;
            t.precision = session_prec;
        }
        s.turns.push_back(std::move(t));
    }
    return s;
}

std::vector<Session> parse_longmemeval(const json& root) {
    const json& sessions = root.at("haystack_sessions");
    const json& dates = root.at("haystack_dates");
    if (!sessions.is_array() || !dates.is_array() || sessions.size() != dates.size())
        throw InputError("haystack_sessions and haystack_dates must be arrays of equal length");
    const json* session_ids = root.contains("haystack_session_ids")
                                  ? &root.at("haystack_session_ids")
                                  : nullptr;

    std::vector<Session> out;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        json native;
        native["session_id"] = session_ids ? (*session_ids)[i].get<std::string>()
                                           : "haystack-" + std::to_string(i + 1);
        native["timestamp"] = dates[i].get<std::string>();
        json turns = json::array();
        for (const json& t : sessions[i]) {
            turns.push_back(json{{"role", t.value("role", "user")},
                                 {"content", t.value("content", "")}});
        }
        native["turns"] = turns;
        out.push_back(parse_native_session(native, i));
    }
    return out;
}

}  // namespace

std::vector<Session> parse_sessions_json(const std::string& text) {
    json root = json::parse(text);
    if (root.contains("haystack_sessions")) return parse_longmemeval(root);
    if (!root.contains("sessions") || !root.at("sessions").is_array())
        throw InputError("expected a top-level \"sessions\" array");
    std::vector<Session> out;
    std::size_t i = 0;
    for (const json& sj : root.at("sessions")) out.push_back(parse_native_session(sj, i++));
    return out;
}

std::vector<Session> load_sessions_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open session file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_sessions_json(ss.str());
    } catch (const json::exception& e) {
        throw InputError("malformed session file " + path + ": " + e.what());
    }
}

}  // namespace memforest
