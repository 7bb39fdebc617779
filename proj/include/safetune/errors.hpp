#pragma once

#include <stdexcept>
#include <string>

namespace safetune {

/// Raised when a covariance system cannot be factorized, even after jitter escalation.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when the safe set is nonempty but contains neither a potential
/// maximizer nor an expander, so no evaluation point can be proposed.
class AlgorithmStalled : public std::runtime_error {
public:
    explicit AlgorithmStalled(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace safetune
