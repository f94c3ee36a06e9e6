#pragma once

#include <stdexcept>
#include <string>

namespace relgraph {

// Raised for malformed or inconsistent input data (files, configs,
// shape mismatches between artifacts). Maps to CLI exit code 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a computation diverges or otherwise fails numerically.
// Maps to CLI exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Raised for bad command lines or unknown configuration keys.
// Maps to CLI exit code 1.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace relgraph
