#pragma once

#include <stdexcept>
#include <string>

namespace fedgkd {

/// Operand dimensions disagree. The message carries both shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid experiment or component configuration, raised before any training starts.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Malformed or out-of-range input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A NaN/Inf appeared where a finite value is required.
class NumericError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace fedgkd
