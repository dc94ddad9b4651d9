#pragma once

#include <stdexcept>
#include <string>

namespace nvrelax {

// Base class for all library errors so callers can catch everything from
// this library with a single handler.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Argument outside the mathematical domain of an operation (T <= 0, dt < 0, ...).
struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Mismatched array shapes or wavelength grids.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Input carries no usable signal (all-zero spectrum, empty basis, ...).
struct DegenerateInputError : Error {
    explicit DegenerateInputError(const std::string& msg) : Error(msg) {}
};

struct InsufficientDataError : Error {
    explicit InsufficientDataError(const std::string& msg) : Error(msg) {}
};

// Nonlinear fit failed to converge; carries the iteration diagnostics.
struct FitError : Error {
    FitError(const std::string& msg, int iterations_, double last_cost_)
        : Error(msg + " (iterations=" + std::to_string(iterations_) +
                ", last_cost=" + std::to_string(last_cost_) + ")"),
          iterations(iterations_),
          last_cost(last_cost_) {}
    int iterations = 0;
    double last_cost = 0.0;
};

// Degenerate or inconsistent calibration data (kappa series, ratio mapping).
struct CalibrationError : Error {
    explicit CalibrationError(const std::string& msg) : Error(msg) {}
};

// Count ratio outside the validity range of a calibrated mapping.
struct CalibrationRangeError : Error {
    explicit CalibrationRangeError(const std::string& msg) : Error(msg) {}
};

// Structurally invalid pulse sequence or trace (missing half, bad window).
struct SequenceError : Error {
    explicit SequenceError(const std::string& msg) : Error(msg) {}
};

// Singular design matrix in a linear fit (e.g. all x identical).
struct SingularDesignError : Error {
    explicit SingularDesignError(const std::string& msg) : Error(msg) {}
};

// Config-file or data-file parse problem; message names the offending key/line.
struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace nvrelax
