#pragma once

#include <stdexcept>
#include <string>

namespace gridlm {

// Invalid configuration, shape mismatch, or precondition violation. CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or other numeric failure. CLI exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation called on an object in the wrong state (full cache, empty cell set, ...).
struct StateError : std::runtime_error {
    explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Query outside the support of a distribution (zero-probability context).
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace gridlm
