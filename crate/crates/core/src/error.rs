use thiserror::Error;

/// Failures of the extension pipeline.
///
/// Variants that correspond to a violated standing assumption name that
/// assumption in their message so scenario reports can say which one broke.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate frame: smallest singular value {sigma_min:e} below tolerance {tol:e} (map too distorted for the small-distortion assumption)")]
    DegenerateFrame { sigma_min: f64, tol: f64 },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("degenerate set: scale {measure:e} too small to normalize")]
    DegenerateSet { measure: f64 },

    #[error("point out of range: d(x) = {distance:e}, admissible range (0, {limit:e}]")]
    OutOfRange { distance: f64, limit: f64 },

    #[error("no interior witness ball at {point:?}: best ratios |z-x|/d = {c1:e}, r/d = {c2:e} (geometry-of-E assumption fails)")]
    NoWitness { point: Vec<f64>, c1: f64, c2: f64 },

    #[error("cube budget exceeded: more than {cap} cubes")]
    BudgetExceeded { cap: usize },

    #[error("measured distortion {measured:e} exceeds budget {budget:e} (geometry-of-phi assumption fails)")]
    DistortionBudgetExceeded { measured: f64, budget: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "Newton inversion did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },
}

impl Error {
    /// True for errors that signal a failed standing assumption rather than a
    /// malformed input.
    pub fn is_assumption_failure(&self) -> bool {
        matches!(
            self,
            Error::DegenerateFrame { .. }
                | Error::NoWitness { .. }
                | Error::DistortionBudgetExceeded { .. }
                | Error::BudgetExceeded { .. }
                | Error::NoConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
