//! Numerical tolerances shared across the crate.

/// Input validation: probability sums, discount path sums, density normalization.
pub const VALIDATION: f64 = 1e-12;

/// Derived identities: tower property, integration by parts, recursion checks.
pub const IDENTITY: f64 = 1e-9;

/// Tolerance scaled by the magnitude of the compared quantities.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
