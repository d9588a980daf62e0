#pragma once

#include <stdexcept>
#include <string>

namespace pdflow {

/// Dimension or precondition mismatch between caller-supplied data.
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Query outside the domain of a schedule or trajectory.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Parameter configuration outside the domain any convergence regime covers.
struct RegimeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failure (quadrature did not converge, non-finite value, ...).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A KKT certificate failed verification.
struct CertificateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Problem factory could not produce a valid instance.
struct FactoryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Not enough data to carry out a fit or estimate.
struct InsufficientDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace pdflow
