#pragma once

#include <stdexcept>
#include <string>

namespace cqb {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SolverError : std::runtime_error {
    explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

// A runtime check backed by one of the model's deterministic inequalities
// failed; this always indicates an implementation bug, never bad luck.
struct AssertionBreach : std::runtime_error {
    explicit AssertionBreach(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace cqb
