use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("covariance matrix is singular")]
    SingularCovariance,

    #[error("state is not pure (symplectic defect {defect:e}); use the mixed-state formula")]
    NotPure { defect: f64 },

    #[error("mode split is not a product state (cross-block norm {cross_norm:e})")]
    NonProductState { cross_norm: f64 },

    #[error(
        "quadrature on [{a}, {b}] did not converge: estimate {estimate:e}, error {error:e} after {evaluations} evaluations"
    )]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
        evaluations: usize,
    },

    #[error("spectral tail beyond the truncation cutoff is {bound:e}, above 1e-12")]
    TailTooLarge { bound: f64 },

    #[error("root not bracketed after expanding to {reached}")]
    RootNotBracketed { reached: f64 },

    #[error("Volterra solver did not converge: step {h} and its half differ by {diff:e} (tol {tol:e})")]
    SolverNonConvergence { h: f64, diff: f64, tol: f64 },

    #[error("Volterra solver unstable at t = {t}: |u| = {modulus}")]
    SolverInstability { t: f64, modulus: f64 },

    #[error("branch-cut quadrature at t = {t} did not converge (error {error:e}); try t <= {suggested_t_max}")]
    OscillatoryQuadrature { t: f64, error: f64, suggested_t_max: f64 },

    #[error("no bound state exists for these parameters")]
    NoBoundState,
}

impl Error {
    /// True for failures of a numerical method (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::InvalidParameter { .. } | Error::DimensionMismatch { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
