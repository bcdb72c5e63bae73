#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace botstream {

// Base class for everything thrown by this library.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A single malformed input record. Carries the 1-based position of the
// record in its stream (0 when unknown); batch loaders record the error
// and continue with the next record.
struct parse_error : error {
    explicit parse_error(const std::string& what, std::size_t ordinal = 0)
        : error(what), ordinal(ordinal) {}
    std::size_t ordinal;
};

// Bad configuration: unreadable files, version mismatch, invalid flags.
struct config_error : error {
    using error::error;
};

// Dataset-level problems: empty dataset, missing merge input.
struct data_error : error {
    using error::error;
};

// Invalid argument to an otherwise well-configured operation.
struct argument_error : error {
    using error::error;
};

struct train_error : error {
    using error::error;
};

struct metric_error : error {
    using error::error;
};

struct analysis_error : error {
    using error::error;
};

// Screen-name bigram model construction.
struct build_error : error {
    using error::error;
};

}  // namespace botstream
