//! Parameter regimes: the exponents, schedules, and Gronwall-type bounds
//! that decide whether a given (N, ε, r) triple sits inside the window where
//! the combined mean-field + quasineutral limit is provable, plus the
//! quantitative growth factors the stability argument produces.
//!
//! Everything here is a pure calculator on [`RegimeParams`]. None of the
//! multiplicative constants carry canonical values — they are existential in
//! the analysis — so they are explicit config fields defaulting to 1, meant
//! to be fitted once against a reference run and then frozen (see
//! [`fit_dominating_constant`]). Reports always record the constants used.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

/// The unnamed multiplicative constants of the analysis. All default to 1;
/// calibrate against a reference run before reading any bound as absolute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegimeConstants {
    /// Generic Gronwall/stability constant C.
    pub c: f64,
    /// Horizon-dependent constant C_T (density bound, r-ceiling).
    pub c_t: f64,
    /// Secondary constant C_2 (kept for config compatibility of reports).
    pub c_2: f64,
    /// Typicality ε-floor constant A.
    pub a: f64,
    /// Typicality r-floor constant A_T.
    pub a_t: f64,
    /// Concentration threshold constant κ (P(W ≥ κx) ≤ …).
    pub kappa: f64,
    /// Concentration rate constant c (inside the exponential).
    pub c_small: f64,
}

impl Default for RegimeConstants {
    fn default() -> Self {
        RegimeConstants {
            c: 1.0,
            c_t: 1.0,
            c_2: 1.0,
            a: 1.0,
            a_t: 1.0,
            kappa: 1.0,
            c_small: 1.0,
        }
    }
}

/// Full parameter point. `n_particles` is real-valued: the schedules treat
/// N as a scale, not a count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    pub d: usize,
    pub eps: f64,
    pub r: f64,
    pub n_particles: f64,
    /// Velocity-support growth exponent: support radius ε^{-γ}.
    pub gamma: f64,
    /// 2D density-bound exponent; must exceed 2 (unused in d = 1, 3).
    pub delta: f64,
    /// Time horizon T.
    pub t_horizon: f64,
    /// Placement exponent η (initial-data quality).
    pub eta: f64,
    /// Intermediate exponent η′ ∈ (β, η).
    pub eta_prime: f64,
    /// Typicality rate slack α > 0 in the r-floor N^{-1/(d(d+2)) + α}.
    pub alpha: f64,
    /// Growth-budget exponent β (the admissible growth is r^{-β}).
    pub beta: f64,
    /// Anisotropy weight λ of the position-weighted distance; λ² > 2.
    pub lambda: f64,
    pub constants: RegimeConstants,
}

impl RegimeParams {
    /// A consistent desk-scale parameter point for dimension `d`.
    pub fn reference(d: usize) -> Self {
        RegimeParams {
            d,
            eps: 0.5,
            r: 1e-3,
            n_particles: 1e4,
            gamma: 1.0,
            delta: 2.5,
            t_horizon: 1.0,
            eta: 0.5,
            eta_prime: 0.3,
            alpha: 0.01,
            beta: 0.1,
            lambda: 1.5,
            constants: RegimeConstants::default(),
        }
    }

    /// Checks the structural invariants every calculator relies on.
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(CoreError::domain(format!(
                "dimension d = {}, expected 1, 2 or 3",
                self.d
            )));
        }
        for (name, v) in [
            ("eps", self.eps),
            ("r", self.r),
            ("n_particles", self.n_particles),
            ("gamma", self.gamma),
            ("t_horizon", self.t_horizon),
            ("eta", self.eta),
            ("eta_prime", self.eta_prime),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CoreError::domain(format!(
                    "{name} = {v}, expected positive and finite"
                )));
            }
        }
        if self.n_particles <= 1.0 {
            return Err(CoreError::domain(format!(
                "n_particles = {}, expected > 1 (the ε-floor divides by log N)",
                self.n_particles
            )));
        }
        if self.d == 2 && self.delta <= 2.0 {
            return Err(CoreError::domain(format!(
                "delta = {}, the 2D density exponent must exceed 2",
                self.delta
            )));
        }
        if !(self.beta < self.eta_prime && self.eta_prime < self.eta) {
            return Err(CoreError::domain(format!(
                "exponents must satisfy beta < eta_prime < eta, got {} / {} / {}",
                self.beta, self.eta_prime, self.eta
            )));
        }
        if self.lambda * self.lambda <= 2.0 {
            return Err(CoreError::domain(format!(
                "lambda = {}, the anisotropic distance needs lambda^2 > 2",
                self.lambda
            )));
        }
        if self.d >= 2 {
            let cap = 1.0 / (self.d as f64 * (self.d as f64 + 2.0));
            if self.alpha >= cap {
                return Err(CoreError::domain(format!(
                    "alpha = {} turns the r-floor non-decreasing; need alpha < {cap}",
                    self.alpha
                )));
            }
        }
        Ok(())
    }
}

// ─── exponents and schedules ──────────────────────────────────────────────

/// The density-bound exponent ζ: max{γ, δ} in d = 2, max{γ, 38/3} in d = 3.
/// Not defined in d = 1, where the limit density is controlled directly.
pub fn zeta(d: usize, gamma: f64, delta: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(CoreError::domain(format!("gamma = {gamma}, expected > 0")));
    }
    match d {
        1 => Err(CoreError::domain(
            "zeta is not applicable in d = 1; no regularization exponent is needed there",
        )),
        2 => {
            if delta <= 2.0 {
                return Err(CoreError::domain(format!(
                    "delta = {delta}, the 2D density exponent must exceed 2"
                )));
            }
            Ok(gamma.max(delta))
        }
        3 => Ok(gamma.max(38.0 / 3.0)),
        _ => Err(CoreError::domain(format!(
            "dimension d = {d}, expected 1, 2 or 3"
        ))),
    }
}

/// The perturbation budget φ(ε): how far (in W2) the data may sit from its
/// analytic core. In d = 1 this is Cε^{-1}e^{-C/ε}; in d = 2, 3 it is
/// double-exponential in ε^{-1}. We implement the decreasing reading
/// exp[-exp(+C ε^{-s})] — the variant with the inner sign flipped tends to
/// 1 instead of 0 as ε → 0, which contradicts the budget's purpose.
pub fn perturbation_budget(d: usize, eps: f64, gamma: f64, delta: f64, c: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(CoreError::domain(format!("eps = {eps}, expected > 0")));
    }
    match d {
        1 => Ok(c / eps * (-c / eps).exp()),
        2 => {
            if delta <= 2.0 {
                return Err(CoreError::domain(format!(
                    "delta = {delta}, the 2D density exponent must exceed 2"
                )));
            }
            let s = 2.0 * (1.0 + delta.max(gamma));
            Ok((-(c * eps.powf(-s)).exp()).exp())
        }
        3 => {
            let s = 2.0 + (38.0f64).max(3.0 * gamma);
            Ok((-(c * eps.powf(-s)).exp()).exp())
        }
        _ => Err(CoreError::domain(format!(
            "dimension d = {d}, expected 1, 2 or 3"
        ))),
    }
}

/// Every schedule the limit theorems impose on a parameter point, plus the
/// joint admissibility verdict. The regularization-driven entries (ζ, M,
/// r-window, placement budget) are `None` in d = 1, where the particle
/// system runs unregularized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedules {
    pub zeta: Option<f64>,
    /// Density ceiling M = C_T ε^{-ζd}.
    pub m_density: Option<f64>,
    /// r must stay below exp(-C_T ε^{-2-dζ}).
    pub r_max: Option<f64>,
    /// r must stay above A_T N^{-1/(d(d+2)) + α} for typical data.
    pub r_min: Option<f64>,
    /// ε must stay above A / log N.
    pub eps_min: f64,
    /// Perturbation budget φ(ε).
    pub phi: f64,
    /// Placement quality scale ε^{-γ} r^{1 + d/2 + η/2} the initial W2 is
    /// measured against.
    pub placement_budget: Option<f64>,
    pub admissible: bool,
    /// Human-readable reasons whenever `admissible` is false.
    pub violations: Vec<String>,
}

/// Evaluates all schedules at the given parameter point.
pub fn schedules(p: &RegimeParams) -> Result<Schedules> {
    p.validate()?;
    let eps_min = p.constants.a / p.n_particles.ln();
    let phi = perturbation_budget(p.d, p.eps, p.gamma, p.delta, p.constants.c)?;
    let mut violations = Vec::new();
    if p.eps < eps_min {
        violations.push(format!(
            "eps = {} below the typicality floor {eps_min:.6}",
            p.eps
        ));
    }

    let (z, m_density, r_max, r_min, placement) = if p.d == 1 {
        (None, None, None, None, None)
    } else {
        let d = p.d as f64;
        let z = zeta(p.d, p.gamma, p.delta)?;
        let m = p.constants.c_t * p.eps.powf(-z * d);
        let r_max = (-p.constants.c_t * p.eps.powf(-2.0 - d * z)).exp();
        let r_min = p.constants.a_t * p.n_particles.powf(-1.0 / (d * (d + 2.0)) + p.alpha);
        let placement = p.eps.powf(-p.gamma) * p.r.powf(1.0 + d / 2.0 + p.eta / 2.0);
        if p.r >= r_max {
            violations.push(format!("r = {} at or above the ceiling {r_max:.3e}", p.r));
        }
        if p.r < r_min {
            violations.push(format!("r = {} below the typicality floor {r_min:.3e}", p.r));
        }
        (Some(z), Some(m), Some(r_max), Some(r_min), Some(placement))
    };

    Ok(Schedules {
        zeta: z,
        m_density,
        r_max,
        r_min,
        eps_min,
        phi,
        placement_budget: placement,
        admissible: violations.is_empty(),
        violations,
    })
}

// ─── Gronwall-type bounds ─────────────────────────────────────────────────

/// Quantitative output of the stability estimates at time `t`, evaluated
/// with the measured density history (M is its running sup, which is
/// exactly the role the density ceiling plays in the estimates).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GronwallBounds {
    /// 1D stability exponent α(t) = √2 t + 8 ∫₀ᵗ ‖ρ(s)‖_∞ ds.
    pub alpha_exponent: f64,
    /// 1D weak-strong factor ε^{-1} e^{ε^{-1} α(t)} multiplying W1(0).
    pub bound_1d: f64,
    /// Density sup actually used as M.
    pub m_density: f64,
    /// Optimal anisotropy λ = C ε^{-1} |log r|^{1/2} M^{1/2}.
    pub lambda_opt: f64,
    /// Matching optimal Gronwall split α = C ε^{-2} |log r| M / λ.
    pub alpha_opt: f64,
    /// Growth factor e^{C ε^{-1} |log r|^{1/2} M^{1/2} t}.
    pub growth_factor: f64,
    /// Regularized-vs-bare drift C ε^{-3/2} M^{3/4} r |log r|^{-1/4}
    /// times the growth factor.
    pub rur_bound: f64,
}

/// Evaluates the stability machinery against a density history sampled
/// uniformly on [0, t] (trapezoid rule; a single sample is read as a
/// constant-in-time density).
pub fn gronwall_bounds(
    p: &RegimeParams,
    sup_density_history: &[f64],
    t: f64,
) -> Result<GronwallBounds> {
    p.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(CoreError::domain(format!("t = {t}, expected >= 0")));
    }
    if sup_density_history.is_empty() {
        return Err(CoreError::domain("density history is empty"));
    }
    for &v in sup_density_history {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(CoreError::domain(format!(
                "density history contains {v}, expected finite and >= 0"
            )));
        }
    }
    if p.r >= 1.0 {
        return Err(CoreError::domain(format!(
            "r = {}, the bounds need |log r| with r < 1",
            p.r
        )));
    }

    let n = sup_density_history.len();
    let integral = if t == 0.0 {
        0.0
    } else if n == 1 {
        sup_density_history[0] * t
    } else {
        let h = t / (n - 1) as f64;
        let mut acc = 0.5 * (sup_density_history[0] + sup_density_history[n - 1]);
        for &v in &sup_density_history[1..n - 1] {
            acc += v;
        }
        acc * h
    };
    let alpha_exponent = std::f64::consts::SQRT_2 * t + 8.0 * integral;
    let bound_1d = p.eps.recip() * (alpha_exponent / p.eps).exp();

    let m = sup_density_history.iter().fold(0.0f64, |a, &b| a.max(b));
    let log_r = -p.r.ln(); // |log r|, positive for r < 1
    let c = p.constants.c;
    let lambda_opt = c / p.eps * log_r.sqrt() * m.sqrt();
    let alpha_opt = c * p.eps.powi(-2) * log_r * m / lambda_opt;
    let rate = c / p.eps * log_r.sqrt() * m.sqrt();
    let growth_factor = if t == 0.0 { 1.0 } else { (rate * t).exp() };
    let rur_bound =
        c * p.eps.powf(-1.5) * m.powf(0.75) * p.r * log_r.powf(-0.25) * growth_factor;

    Ok(GronwallBounds {
        alpha_exponent,
        bound_1d,
        m_density: m,
        lambda_opt,
        alpha_opt,
        growth_factor,
        rur_bound,
    })
}

// ─── concentration ────────────────────────────────────────────────────────

/// Sampling concentration for empirical measures of N draws from a measure
/// on [-1,1]^m: an upper bound for P(W_p^p ≥ κx). Three branches depending
/// on how p compares to m/2, all cut off to zero for x > 1.
pub fn concentration_bound(
    m: u32,
    p: u32,
    x: f64,
    n: f64,
    constants: &RegimeConstants,
) -> Result<f64> {
    if m == 0 || p == 0 {
        return Err(CoreError::domain(format!(
            "concentration bound needs positive m, p; got m = {m}, p = {p}"
        )));
    }
    if !(x > 0.0 && x.is_finite()) {
        return Err(CoreError::domain(format!("x = {x}, expected > 0")));
    }
    if !(n >= 1.0 && n.is_finite()) {
        return Err(CoreError::domain(format!("n = {n}, expected >= 1")));
    }
    if x > 1.0 {
        return Ok(0.0);
    }
    let (c_out, c_in) = (constants.c, constants.c_small);
    let exponent = if 2 * p > m {
        c_in * n * x * x
    } else if 2 * p == m {
        let y = x / (2.0 + 1.0 / x).ln();
        c_in * n * y * y
    } else {
        c_in * n * x.powf(m as f64 / p as f64)
    };
    Ok(c_out * (-exponent).exp())
}

// ─── calibration and reports ──────────────────────────────────────────────

/// Fits the single multiplicative constant of an inequality-type bound:
/// the smallest C with C · predicted_i ≥ observed_i for every i. Evaluate
/// the bound once with its constant at 1, feed the pairs here, freeze the
/// result in config.
pub fn fit_dominating_constant(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if predicted.len() != observed.len() || predicted.is_empty() {
        return Err(CoreError::mismatch(format!(
            "calibration needs matching non-empty series, got {} predictions / {} observations",
            predicted.len(),
            observed.len()
        )));
    }
    let mut c = 0.0f64;
    for (&p, &o) in predicted.iter().zip(observed) {
        if !(p > 0.0 && p.is_finite()) || !(o >= 0.0 && o.is_finite()) {
            return Err(CoreError::domain(format!(
                "calibration pair ({p}, {o}) out of domain"
            )));
        }
        c = c.max(o / p);
    }
    Ok(c)
}

/// Everything a run needs to record about its parameter point.
#[derive(Debug, Clone, Serialize)]
pub struct RegimeReport {
    pub inputs: RegimeParams,
    pub schedules: Schedules,
}

/// Assembles the JSON regime report: inputs, derived schedules, verdict,
/// constants (inside `inputs`).
pub fn regime_report_json(p: &RegimeParams) -> Result<String> {
    let report = RegimeReport {
        inputs: p.clone(),
        schedules: schedules(p)?,
    };
    serde_json::to_string_pretty(&report)
        .map_err(|e| CoreError::domain(format!("report serialization failed: {e}")))
}
