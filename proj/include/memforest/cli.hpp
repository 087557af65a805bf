#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace memforest::cli {

// memforest ingest|query|merge|delete|rematerialize|stats|bench
// Exit codes: 0 success, 1 usage, 2 input error, 3 backend error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace memforest::cli
