#pragma once

#include <string>
#include <vector>

#include "memforest/substrate.hpp"

namespace memforest {

// Native input: { "sessions": [ { "session_id", "timestamp",
//   "turns": [ { "role", "content", "timestamp"? } ] } ] }.
// Turns without timestamps inherit the session timestamp. Files carrying
// "haystack_sessions"/"haystack_dates" are adapted from the LongMemEval-S
// layout into the same shape.
std::vector<Session> parse_sessions_json(const std::string& text);
std::vector<Session> load_sessions_file(const std::string& path);

}  // namespace memforest
