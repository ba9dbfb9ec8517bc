#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sirentrack {

// One exception type per failure category so the CLI can map categories to
// exit codes without string matching.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InputSizeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnsupportedFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CorruptFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShortInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VersionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed on-disk data; carries the byte offset where parsing failed.
struct FormatError : std::runtime_error {
    FormatError(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}

    std::size_t byte_offset;
};

}  // namespace sirentrack
