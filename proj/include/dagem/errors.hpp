#pragma once

#include <stdexcept>
#include <string>

namespace dagem {

/// Failure categories. The CLI maps them onto process exit codes.
enum class ErrorKind {
    Config = 2,
    Data = 3,
    Numerical = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Invalid configuration, model description or DAG structure.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

/// Malformed, misaligned or statistically unusable input data.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

/// Degenerate variances, singular moments and similar numerical breakdowns.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

}  // namespace dagem
