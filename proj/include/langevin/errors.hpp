#pragma once
// Exception types shared across the library. Plain bad arguments use
// std::invalid_argument / std::domain_error directly; the types below cover
// failure modes that tests and callers want to tell apart.

#include <stdexcept>

namespace langevin {

// Linear algebra or integration lost enough precision that the result cannot
// be trusted (covariance not PSD after jitter, non-finite chain state, ...).
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Inputs are well-formed but outside the regime a formula is stated for
// (wrong friction for a bound, step size above a precondition, ...).
struct regime_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A claimed certificate (eigenvalue floor, contraction rate) failed on the
// checked grid.
struct certification_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shift schedule evaluated where it is undefined (t = T with no tail offset).
struct schedule_error : std::domain_error {
    using std::domain_error::domain_error;
};

// Bad or missing configuration entry.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace langevin
