//! Numerical core for a quasineutral Vlasov–Poisson laboratory.
//!
//! Everything lives on the unit torus T^d with fundamental domain
//! [-1/2, 1/2)^d. The model family is the regularized N-particle system
//!
//! ```text
//!   dx_i/dt = v_i,
//!   dv_i/dt = (1/N) Σ_{j≠i} ε^{-2} (χ_r ∗ χ_r ∗ K)(x_i − x_j),
//! ```
//!
//! its mean-field PDE (∂t f + v·∇x f + E·∇v f = 0 with −ε²ΔU = ρ_f − 1,
//! E = −∇U), the quasineutral scaling ε → 0, plasma-oscillation correctors,
//! and Wasserstein diagnostics connecting all of the above.
//!
//! Module map:
//! * [`kernels`] — torus Green/force kernels, mollifiers, spectral tables
//! * [`particles`] — ODE ensembles, leapfrog, direct/PIC/spectral forces
//! * [`vlasov`] — d=1 semi-Lagrangian phase-space solver and rescalings
//! * [`transport`] — exact/sliced Wasserstein distances and measure ops
//! * [`correctors`] — oscillation corrector fields R_ε and filtering data
//! * [`regimes`] — admissibility schedules and quantitative bounds
//! * [`grid`] — shared FFT/interpolation helpers on periodic grids

pub mod correctors;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod particles;
pub mod regimes;
pub mod transport;
pub mod vlasov;

pub use error::CoreError;

/// Everything downstream returns this.
pub type Result<T> = std::result::Result<T, CoreError>;
