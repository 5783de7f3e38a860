#pragma once

#include <stdexcept>
#include <string>

namespace voltvar {

enum class ErrorKind {
    input,           // malformed files, bad arguments
    topology,        // disconnected or non-radial feeder
    singular_line,   // zero-impedance line
    dimension,       // vector/matrix size mismatch
    domain,          // argument outside its admissible set
    model_invalid,   // sensitivity blocks not positive definite
    numerical_rank,  // singular reduced admittance
    divergence,      // iterative solver or training blew up
    infeasible,      // ORPF infeasible or voltage collapse
    non_contraction, // fixed-point iteration stagnated
    nonsmooth_point  // Jacobian requested where the clamp is active
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// Input-side failures map to CLI exit code 2, numerical failures to 1.
    bool is_input_error() const noexcept
    {
        switch (kind_) {
        case ErrorKind::input:
        case ErrorKind::topology:
        case ErrorKind::singular_line:
        case ErrorKind::dimension:
        case ErrorKind::domain:
        case ErrorKind::model_invalid:
            return true;
        default:
            return false;
        }
    }

private:
    ErrorKind kind_;
};

} // namespace voltvar
