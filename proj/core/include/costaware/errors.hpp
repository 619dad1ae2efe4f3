#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace costaware {

// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t line);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class RangeError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class InsufficientDataError : public Error { using Error::Error; };
class DegenerateInputError : public Error { using Error::Error; };
class DegenerateBlockError : public Error { using Error::Error; };
class LinAlgError : public Error { using Error::Error; };
class PsdError : public Error { using Error::Error; };
class InfeasibleError : public Error { using Error::Error; };
class BracketError : public Error { using Error::Error; };
class MetricError : public Error { using Error::Error; };
class BacktestError : public Error { using Error::Error; };
class SamplerError : public Error { using Error::Error; };

// Raised when an iterative solver hits its iteration cap. Carries the best
// iterate seen so callers can decide whether to fall back on it.
class IterationError : public Error {
public:
    IterationError(const std::string& message, Eigen::VectorXd best, double residual);
    const Eigen::VectorXd& best_iterate() const noexcept { return best_; }
    double residual() const noexcept { return residual_; }

private:
    Eigen::VectorXd best_;
    double residual_;
};

}  // namespace costaware
