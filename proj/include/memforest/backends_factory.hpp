#pragma once

#include "memforest/config.hpp"
#include "memforest/ports.hpp"

namespace memforest {

// Builds the port bundle selected by config.backends: deterministic mocks by
// default, the HTTP adapter for kind=http, scripted chooser fixtures for
// kind=scripted, and a disabled planner for kind=off. All ports share one
// ledger.
Backends make_backends(const Config& config);

}  // namespace memforest
