#pragma once

#include <stdexcept>
#include <string>

namespace fmkit {

// Error taxonomy shared by the library and the CLI. The CLI maps these to
// process exit codes: config/argument -> 2, io -> 3, numeric/simulation -> 4,
// incompatibility -> 5.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ArgumentError : std::runtime_error {
    explicit ArgumentError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Out-of-range inputs: SNR outside a scheduler's range, antipodal sphere
// pairs, and similar.
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// A conversion or rate hit a vanishing denominator (sigma_t = 0, kappa_t = 1,
// Table-entry coefficient denominators below 1e-12, ...).
struct SingularityError : std::runtime_error {
    explicit SingularityError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite state encountered while integrating.
struct SimulationError : std::runtime_error {
    explicit SimulationError(const std::string& what) : std::runtime_error(what) {}
};

// Requested operation is undefined for the model/path combination
// (e.g. score conversions on a non-Gaussian source path).
struct IncompatibilityError : std::runtime_error {
    explicit IncompatibilityError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fmkit
