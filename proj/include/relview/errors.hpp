#pragma once

#include <stdexcept>
#include <string>

namespace relview {

// Bad user input: unknown flag values, inconsistent options, malformed
// configuration. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable or semantically invalid data files. CLI exit code 3.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed line/field inside an otherwise readable file. Subtype of
// DataError so callers can catch either.
struct ParseError : DataError {
    ParseError(const std::string& file, long line, const std::string& msg)
        : DataError(file + ":" + std::to_string(line) + ": " + msg) {}
};

// Numerical breakdown that the algorithms cannot recover from
// (all-zero vote denominators, empty training pools...). CLI exit code 4.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace relview
