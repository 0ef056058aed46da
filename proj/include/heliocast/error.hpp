#pragma once

#include <stdexcept>
#include <string>

namespace heliocast {

/// Invalid argument or state that violates an operation's contract.
class DomainError : public std::runtime_error {
public:
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Missing, corrupt or inconsistent input data (CLI exit code 3).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Optimization failure such as divergence or NaN loss (CLI exit code 4).
class TrainingFault : public std::runtime_error {
public:
    explicit TrainingFault(const std::string& what) : std::runtime_error(what) {}
};

} // namespace heliocast
