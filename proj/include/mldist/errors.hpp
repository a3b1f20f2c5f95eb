#pragma once

#include <stdexcept>
#include <string>

namespace mldist {

// Base class for all toolkit errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad or missing configuration (files, flags, parameter ranges).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Endpoint unreachable or failing past the retry budget.
struct TransportError : Error {
    explicit TransportError(const std::string& msg) : Error(msg) {}
};

// Malformed records, unknown labels, violated preconditions.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Cross-file joins (doc_id, fingerprint) produced no usable rows.
struct JoinError : Error {
    explicit JoinError(const std::string& msg) : Error(msg) {}
};

}  // namespace mldist
