//! Numerical tolerances shared by the matrix routines and the divergences.

/// Every numeric guard used by the crate lives here so tests can tighten them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative floor for the smallest eigenvalue of a PSD input:
    /// `min_eig >= -psd_relative * max(1, max_eig)`.
    pub psd_relative: f64,
    /// Divergence results in `[-negative_guard, 0)` are clamped to 0;
    /// anything more negative is a numerical error.
    pub negative_guard: f64,
    /// Default regularization scale applied to estimated covariances.
    pub eps_scale: f64,
    /// Maximum QL sweeps per eigenvalue before giving up.
    pub max_ql_iterations: usize,
}

pub const DEFAULT_TOLERANCES: Tolerances = Tolerances {
    psd_relative: 1e-10,
    negative_guard: 1e-9,
    eps_scale: 1e-8,
    max_ql_iterations: 60,
};

impl Default for Tolerances {
    fn default() -> Self {
        DEFAULT_TOLERANCES
    }
}
