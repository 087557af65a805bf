#pragma once

#include <stdexcept>
#include <string>

namespace memforest {

// Bad configuration value or unsupported mode.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input data (session files, snapshots, CLI arguments past parsing).
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated operation precondition (dirty store, unknown session, ...).
struct PreconditionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Backend call failed but may succeed on retry (network, timeout).
struct TransientBackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Backend call failed permanently (schema violation after repair retry).
struct PermanentBackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace memforest
