#pragma once

#include <stdexcept>
#include <string>

namespace proxyshift {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& msg) : Error(msg) {}
};

struct InsufficientDataError : Error {
    explicit InsufficientDataError(const std::string& msg) : Error(msg) {}
};

// Optimizer hit its iteration cap; carries the final gradient infinity-norm.
struct ConvergenceError : Error {
    ConvergenceError(const std::string& msg, double grad_norm_)
        : Error(msg + " (grad inf-norm " + std::to_string(grad_norm_) + ")"),
          grad_norm(grad_norm_) {}
    double grad_norm;
};

struct DegenerateWeightsError : Error {
    explicit DegenerateWeightsError(const std::string& msg) : Error(msg) {}
};

struct UnidentifiedError : Error {
    explicit UnidentifiedError(const std::string& msg) : Error(msg) {}
};

struct BootstrapDegenerateError : Error {
    explicit BootstrapDegenerateError(const std::string& msg) : Error(msg) {}
};

struct EnumerationError : Error {
    explicit EnumerationError(const std::string& msg) : Error(msg) {}
};

struct DegenerateMechanismError : Error {
    explicit DegenerateMechanismError(const std::string& msg) : Error(msg) {}
};

struct InfeasibleTargetsError : Error {
    explicit InfeasibleTargetsError(const std::string& msg) : Error(msg) {}
};

struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t line_)
        : Error(msg + " (line " + std::to_string(line_) + ")"), line(line_) {}
    std::size_t line;
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// A pipeline step failed; `step` names which one.
struct PipelineError : Error {
    PipelineError(const std::string& step_, const std::string& msg)
        : Error("[" + step_ + "] " + msg), step(step_) {}
    std::string step;
};

}  // namespace proxyshift
