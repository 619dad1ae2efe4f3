#include "costaware/errors.hpp"

#include <utility>

namespace costaware {

ParseError::ParseError(const std::string& message, std::size_t line)
    : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

IterationError::IterationError(const std::string& message, Eigen::VectorXd best, double residual)
    : Error(message), best_(std::move(best)), residual_(residual) {}

}  // namespace costaware
