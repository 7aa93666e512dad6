#pragma once

#include <stdexcept>
#include <string>

namespace relcollab {

/// Invalid or inconsistent configuration (bad counts, malformed shapes, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Missing or malformed input data (empty pools, unreadable datasets, ...).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A training step failed; carries the step index for diagnostics.
class StepError : public std::runtime_error {
public:
    StepError(int64_t step, const std::string& msg)
        : std::runtime_error("step " + std::to_string(step) + ": " + msg), step_(step) {}
    int64_t step() const { return step_; }

private:
    int64_t step_;
};

}  // namespace relcollab
