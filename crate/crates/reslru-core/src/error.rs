use thiserror::Error;

use crate::model::BasisLabel;

/// Every failure the numerical layer can report.
#[derive(Debug, Clone, PartialEq, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dressed label {label} is ambiguous (overlap {overlap:.3} below 0.25)")]
    LabelAmbiguity { label: BasisLabel, overlap: f64 },

    #[error("gap is monotone over the scan window; no avoided crossing in range")]
    NoCrossingInRange,

    #[error("degenerate denominator `{what}` = {value:.3e} rad/s")]
    DegenerateDenominator { what: &'static str, value: f64 },

    #[error("iteration did not converge after {iterations} steps")]
    NoConvergence { iterations: usize },

    #[error("eigensolver did not converge")]
    EigenNoConvergence,

    #[error("thermal occupation {nbar} outside the two-level regime (< 0.2)")]
    OutOfRegime { nbar: f64 },

    #[error("integrator step failure at t = {t:.4e} s")]
    StepFailure { t: f64 },

    #[error("trace drifted by {drift:.3e}")]
    TraceDrift { drift: f64 },

    #[error("pulse duration {t_p:.4e} s exceeds slot {t_slot:.4e} s")]
    PulseTooLong { t_p: f64, t_slot: f64 },

    #[error("population {value:.3e} is not positive; cannot invert decay")]
    NonPositivePopulation { value: f64 },

    #[error("coherence {value:.3e} is not positive; cannot invert decay")]
    NonPositiveCoherence { value: f64 },

    #[error("no root: effective coupling at the range maximum is below kappa/4")]
    NoRoot,

    #[error("overdamped: g_tilde {g_tilde:.4e} <= kappa/4 {quarter_kappa:.4e}")]
    Overdamped { g_tilde: f64, quarter_kappa: f64 },

    #[error("no landscape point satisfies the leakage threshold")]
    NoCandidate,

    #[error("sample budget {budget} is smaller than the initial grid {grid}")]
    BudgetTooSmall { budget: usize, grid: usize },

    #[error("seepage rate is zero; lifetime undefined")]
    ZeroSeepage,

    #[error("invalid probability distribution (sum {sum:.6})")]
    InvalidDistribution { sum: f64 },

    #[error("invalid LRU rates: {reason}")]
    InvalidRates { reason: &'static str },

    #[error("fit diverged: {reason}")]
    FitDiverged { reason: &'static str },
}

pub type Result<T> = core::result::Result<T, Error>;
