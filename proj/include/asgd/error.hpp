#pragma once

#include <stdexcept>
#include <string>

namespace asgd {

/// Caller broke an operation's precondition (empty set, bad dimension, ...).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The simulated system broke a rule of the cluster-based model. Always a bug.
class ModelViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Scenario or algorithm configuration rejected during validation.
/// `path()` names the offending field, e.g. "algorithm.N".
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string path, const std::string& message)
        : std::invalid_argument(path + ": " + message), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace asgd
