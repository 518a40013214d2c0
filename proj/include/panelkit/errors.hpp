#pragma once

#include <stdexcept>
#include <string>

namespace panelkit {

// Error categories map 1:1 onto CLI exit codes (see tools/).

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NetworkError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace panelkit
