//! Error type shared by the core modules.
//!
//! The variants mirror the failure modes the contracts care about: domain
//! violations (bad ε, r, exponents), resolution problems (grids that cannot
//! resolve a mollifier), normalization drift, phase-space support escaping
//! the velocity box, sizes that blow past an LP budget, and non-finite state.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Parameter outside its mathematical domain (message says which and why).
    #[error("domain error: {0}")]
    Domain(String),

    /// Grid too coarse for the requested scale.
    #[error("resolution error: {what} needs at least {needed} cells, grid has {got}")]
    Resolution {
        what: String,
        needed: usize,
        got: usize,
    },

    /// A quantity that must be a probability mass / mean-one density is not.
    #[error("normalization error: {what} = {value}, expected {expected} (|Δ| > {tol})")]
    Normalization {
        what: String,
        value: f64,
        expected: f64,
        tol: f64,
    },

    /// Phase-space support reached the velocity boundary.
    #[error("support escape: boundary-layer mass {boundary_mass:.3e} at t = {time}; enlarge the velocity box (suggested vmax ≥ {suggested_vmax})")]
    SupportEscape {
        time: f64,
        boundary_mass: f64,
        suggested_vmax: f64,
    },

    /// Problem size exceeds a stated budget.
    #[error("size overflow: {what} = {size} exceeds budget {budget}; {hint}")]
    SizeOverflow {
        what: String,
        size: usize,
        budget: usize,
        hint: String,
    },

    /// NaN/∞ appeared in state.
    #[error("non-finite state: {0}")]
    NonFinite(String),

    /// Time step too large for the oscillation or the advection.
    #[error("time-step error: {0}")]
    TimeStep(String),

    /// Numeric overflow in a weighted sum (analytic norms and the like).
    #[error("overflow: {0}")]
    Overflow(String),

    /// Sampler rejected too often to be usable.
    #[error("sampler efficiency {efficiency:.4} below threshold {threshold}; change the envelope ({hint})")]
    SamplerEfficiency {
        efficiency: f64,
        threshold: f64,
        hint: String,
    },

    /// A calculation that only exists for some dimensions was asked elsewhere.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// Two objects that must share discretization parameters do not.
    #[error("mismatch: {0}")]
    Mismatch(String),

    /// The LP solver could not complete (cap hit, infeasible balance, ...).
    #[error("transport solver failure: {0}")]
    Solver(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub fn domain(msg: impl Into<String>) -> Self {
        CoreError::Domain(msg.into())
    }

    pub fn non_finite(msg: impl Into<String>) -> Self {
        CoreError::NonFinite(msg.into())
    }

    pub fn mismatch(msg: impl Into<String>) -> Self {
        CoreError::Mismatch(msg.into())
    }
}
