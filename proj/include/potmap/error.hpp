#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace potmap {

/// Invalid input. `field` names the offending parameter using the dotted path
/// of the request contract (e.g. "kernel.portee_km"), or is empty.
class ValidationError : public std::invalid_argument {
public:
    ValidationError(std::string field, const std::string& message)
        : std::invalid_argument(message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A request that is well-formed but mathematically unusable, such as a
/// Pareto exponent for which the mean-range integral diverges.
class UnprocessableError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TimeoutError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace potmap
