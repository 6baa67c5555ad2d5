#pragma once

#include <stdexcept>
#include <string>

namespace protokd {

// Base for all library errors. Subclasses map onto CLI exit codes:
// ConfigError -> 2, everything else -> 1.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

struct UnboundInputError : Error {
    explicit UnboundInputError(const std::string& msg) : Error(msg) {}
};

struct DegenerateInputError : Error {
    explicit DegenerateInputError(const std::string& msg) : Error(msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct DivergenceError : Error {
    DivergenceError(const std::string& msg, int epoch_) : Error(msg), epoch(epoch_) {}
    int epoch;
};

}  // namespace protokd
