#pragma once

#include <stdexcept>
#include <string>

namespace nvc {

// Malformed input files or byte streams (bad magic, truncation, size mismatch).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input data that is structurally valid but unusable (NaN/Inf samples, constant volume).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller misuse: bad flag combinations, missing gradient targets, degenerate camera.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Internal contract violations (out-of-bounds index, shape mismatch).
struct LogicError : std::logic_error {
    explicit LogicError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace nvc
