//! Flat, typed run configuration.
//!
//! One TOML file per run; every key is a scalar or a flat array, so configs
//! diff cleanly and there is nothing to merge. `seed` is the only key
//! without a default — a run that does not pin its randomness is not a run
//! we want to archive. Unknown keys are rejected rather than ignored.
//!
//! Schema (defaults in parentheses):
//!
//! ```toml
//! experiment = "meanfield"   # meanfield | quasineutral | combined | lemmas
//!                            # | concentration | lipschitz
//! seed = 7                   # required
//!
//! # regime point; t_end doubles as the horizon T
//! dim = 1                    # (1)
//! eps = 0.5                  # (0.5)
//! r = 0.0                    # (0.0 — unregularized, d=1 only)
//! gamma = 1.0                # (1.0)   velocity-support exponent
//! delta = 2.5                # (2.5)   2D density exponent, > 2
//! eta = 0.5                  # (0.5)   placement exponent
//! eta_prime = 0.3            # (0.3)   β < η' < η
//! alpha = 0.01               # (0.01)  typicality slack
//! beta = 0.1                 # (0.1)   growth budget exponent
//! lambda = 1.5               # (1.5)   anisotropy weight, λ² > 2
//!
//! # analysis constants (1.0 unless calibrated)
//! const_c = 1.0
//! const_c_t = 1.0
//! const_c2 = 1.0
//! const_a = 1.0
//! const_a_t = 1.0
//! const_kappa = 1.0
//! const_c_small = 1.0
//!
//! # initial data: density 1 + a·cos(2πx), compact velocity bump
//! f0_amplitude = 0.1         # (0.1)
//! f0_scales_with_eps = false # (false) true: a = f0_amplitude · ε
//! f0_v0 = 0.0                # (0.0)
//! f0_v_width = 0.4           # (0.4)
//!
//! # phase-space grid and time stepping
//! mx = 64                    # (64)
//! mv = 256                   # (256)
//! vmax = 1.0                 # (1.0)
//! dt = 0.0                   # (0.0 — auto: ε/20)
//! t_end = 1.0                # (1.0)
//! snapshots = 11             # (11) distance evaluation points incl. t = 0
//!
//! # sweeps and replication
//! n_sweep = [1000, 4000, 16000]
//! eps_sweep = [0.2, 0.1, 0.05]
//! r_sweep = []               # lipschitz; empty = 2^-4 … 2^-10
//! seeds = 5                  # (5) Monte-Carlo replicas per sweep point
//! trials = 1000              # (1000) lemma-suite trials per family
//! resamples = 200            # (200) concentration resample count
//! sample_size = 500          # (500) concentration empirical-measure size
//! force_modes = 64           # (64) spectral force cutoff when r = 0
//!
//! # metric and output
//! metric_p = 1               # (1) Wasserstein order for the sweep tables
//! out_dir = "runs"           # (runs)
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vplab_core::regimes::{schedules, RegimeConstants, RegimeParams, Schedules};

use crate::error::LabError;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Meanfield,
    Quasineutral,
    Combined,
    Lemmas,
    Concentration,
    Lipschitz,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExperimentKind::Meanfield => "meanfield",
            ExperimentKind::Quasineutral => "quasineutral",
            ExperimentKind::Combined => "combined",
            ExperimentKind::Lemmas => "lemmas",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::Lipschitz => "lipschitz",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,

    // regime point
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_eta")]
    pub eta: f64,
    #[serde(default = "d_eta_prime")]
    pub eta_prime: f64,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_lambda")]
    pub lambda: f64,

    // analysis constants
    #[serde(default = "d_one")]
    pub const_c: f64,
    #[serde(default = "d_one")]
    pub const_c_t: f64,
    #[serde(default = "d_one")]
    pub const_c2: f64,
    #[serde(default = "d_one")]
    pub const_a: f64,
    #[serde(default = "d_one")]
    pub const_a_t: f64,
    #[serde(default = "d_one")]
    pub const_kappa: f64,
    #[serde(default = "d_one")]
    pub const_c_small: f64,

    // initial data
    #[serde(default = "d_f0_amplitude")]
    pub f0_amplitude: f64,
    #[serde(default)]
    pub f0_scales_with_eps: bool,
    #[serde(default)]
    pub f0_v0: f64,
    #[serde(default = "d_f0_v_width")]
    pub f0_v_width: f64,

    // grid and stepping
    #[serde(default = "d_mx")]
    pub mx: usize,
    #[serde(default = "d_mv")]
    pub mv: usize,
    #[serde(default = "d_one")]
    pub vmax: f64,
    #[serde(default)]
    pub dt: f64,
    #[serde(default = "d_one")]
    pub t_end: f64,
    #[serde(default = "d_snapshots")]
    pub snapshots: usize,

    // sweeps and replication
    #[serde(default)]
    pub n_sweep: Vec<u64>,
    #[serde(default)]
    pub eps_sweep: Vec<f64>,
    #[serde(default)]
    pub r_sweep: Vec<f64>,
    #[serde(default = "d_seeds")]
    pub seeds: usize,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default = "d_resamples")]
    pub resamples: usize,
    #[serde(default = "d_sample_size")]
    pub sample_size: usize,
    #[serde(default = "d_force_modes")]
    pub force_modes: usize,

    // metric and output
    #[serde(default = "d_metric_p")]
    pub metric_p: u32,
    #[serde(default = "d_out_dir")]
    pub out_dir: String,
}

fn d_dim() -> usize {
    1
}
fn d_eps() -> f64 {
    0.5
}
fn d_gamma() -> f64 {
    1.0
}
fn d_delta() -> f64 {
    2.5
}
fn d_eta() -> f64 {
    0.5
}
fn d_eta_prime() -> f64 {
    0.3
}
fn d_alpha() -> f64 {
    0.01
}
fn d_beta() -> f64 {
    0.1
}
fn d_lambda() -> f64 {
    1.5
}
fn d_one() -> f64 {
    1.0
}
fn d_f0_amplitude() -> f64 {
    0.1
}
fn d_f0_v_width() -> f64 {
    0.4
}
fn d_mx() -> usize {
    64
}
fn d_mv() -> usize {
    256
}
fn d_snapshots() -> usize {
    11
}
fn d_seeds() -> usize {
    5
}
fn d_trials() -> usize {
    1000
}
fn d_resamples() -> usize {
    200
}
fn d_sample_size() -> usize {
    500
}
fn d_force_modes() -> usize {
    64
}
fn d_metric_p() -> u32 {
    1
}
fn d_out_dir() -> String {
    "runs".to_string()
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            LabError::config(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
            .map_err(|e| LabError::config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Stock settings for the given experiment — exactly what a two-line
    /// TOML file would produce, so the defaults cannot drift apart.
    pub fn baseline(kind: ExperimentKind, seed: u64) -> Result<Self> {
        Self::from_toml(&format!("experiment = \"{kind}\"\nseed = {seed}"))
            .map_err(|e| LabError::config(format!("baseline config: {e}")))
    }

    /// The regime point this config describes, for the admissibility verdict
    /// and the bound calculators. N defaults to the largest sweep entry so
    /// the verdict covers the most demanding point.
    pub fn regime_params(&self) -> RegimeParams {
        let n = self
            .n_sweep
            .iter()
            .copied()
            .max()
            .map(|n| n as f64)
            .unwrap_or(1e4);
        RegimeParams {
            d: self.dim,
            eps: self.eps,
            r: self.r,
            n_particles: n,
            gamma: self.gamma,
            delta: self.delta,
            t_horizon: self.t_end,
            eta: self.eta,
            eta_prime: self.eta_prime,
            alpha: self.alpha,
            beta: self.beta,
            lambda: self.lambda,
            constants: self.regime_constants(),
        }
    }

    pub fn regime_constants(&self) -> RegimeConstants {
        RegimeConstants {
            c: self.const_c,
            c_t: self.const_c_t,
            c_2: self.const_c2,
            a: self.const_a,
            a_t: self.const_a_t,
            kappa: self.const_kappa,
            c_small: self.const_c_small,
        }
    }

    /// Structural sanity of everything the regime calculators do not cover.
    pub fn validate(&self) -> Result<()> {
        if self.mx < 4 || self.mv < 4 {
            return Err(LabError::config(format!(
                "grid {}x{} too small; need at least 4 nodes per axis",
                self.mx, self.mv
            )));
        }
        if !(self.vmax > 0.0 && self.vmax.is_finite()) {
            return Err(LabError::config(format!("vmax = {}", self.vmax)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(LabError::config(format!("t_end = {}", self.t_end)));
        }
        if !(self.dt >= 0.0 && self.dt.is_finite()) {
            return Err(LabError::config(format!(
                "dt = {} (0 selects the automatic step)",
                self.dt
            )));
        }
        if self.snapshots < 2 {
            return Err(LabError::config(
                "snapshots < 2: a sweep needs at least start and end",
            ));
        }
        if !(self.f0_amplitude.is_finite() && self.f0_amplitude.abs() < 1.0) {
            return Err(LabError::config(format!(
                "f0_amplitude = {}: |a| < 1 keeps the density positive",
                self.f0_amplitude
            )));
        }
        if !(self.f0_v_width > 0.0 && self.f0_v_width.is_finite()) {
            return Err(LabError::config(format!(
                "f0_v_width = {}",
                self.f0_v_width
            )));
        }
        if self.seeds == 0 {
            return Err(LabError::config("seeds = 0: nothing would run"));
        }
        if self.metric_p == 0 || self.metric_p > 2 {
            return Err(LabError::config(format!(
                "metric_p = {}: only W1 and W2 are wired up",
                self.metric_p
            )));
        }
        // the regime calculators check the exponent relations
        self.regime_params().validate()?;
        Ok(())
    }

    /// Evaluates the schedules and refuses inadmissible points unless forced.
    /// Returns the verdict either way so the report can echo it.
    pub fn ensure_admissible(&self, force: bool) -> Result<Schedules> {
        let verdict = schedules(&self.regime_params())?;
        if !verdict.admissible && !force {
            return Err(LabError::Inadmissible(verdict.violations.join("; ")));
        }
        Ok(verdict)
    }

    /// Time step for a PDE or particle run at scale `eps`: the configured
    /// value, or ε/20 (a fifth of the shortest oscillation period 2πε).
    pub fn effective_dt(&self, eps: f64) -> f64 {
        if self.dt > 0.0 {
            self.dt
        } else {
            eps / 20.0
        }
    }

    /// Perturbation amplitude at scale `eps`.
    pub fn amplitude_for(&self, eps: f64) -> f64 {
        if self.f0_scales_with_eps {
            self.f0_amplitude * eps
        } else {
            self.f0_amplitude
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml("experiment = \"lemmas\"\nseed = 3\n").unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Lemmas);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.dim, 1);
        assert_eq!(cfg.eps, 0.5);
        assert_eq!(cfg.r, 0.0);
        assert_eq!(cfg.mx, 64);
        assert_eq!(cfg.trials, 1000);
        assert_eq!(cfg.out_dir, "runs");
        cfg.validate().unwrap();
    }

    #[test]
    fn seed_is_mandatory() {
        let err = ExperimentConfig::from_toml("experiment = \"lemmas\"\n").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml(
            "experiment = \"lemmas\"\nseed = 1\nsneed = 2\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("sneed"), "{err}");
    }

    #[test]
    fn amplitude_scaling_and_auto_step() {
        let mut cfg =
            ExperimentConfig::from_toml("experiment = \"quasineutral\"\nseed = 1\n").unwrap();
        cfg.f0_scales_with_eps = true;
        cfg.f0_amplitude = 0.5;
        assert_eq!(cfg.amplitude_for(0.1), 0.05);
        assert_eq!(cfg.effective_dt(0.1), 0.005);
        cfg.dt = 0.25;
        assert_eq!(cfg.effective_dt(0.1), 0.25);
    }

    #[test]
    fn inadmissible_point_is_refused_unless_forced() {
        let mut cfg =
            ExperimentConfig::from_toml("experiment = \"meanfield\"\nseed = 1\n").unwrap();
        // push ε below the typicality floor A / log N
        cfg.const_a = 40.0;
        cfg.n_sweep = vec![1000];
        let err = cfg.ensure_admissible(false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("typicality floor"), "{msg}");
        assert!(msg.contains("--force"), "{msg}");

        let verdict = cfg.ensure_admissible(true).unwrap();
        assert!(!verdict.admissible);
        assert!(!verdict.violations.is_empty());
    }

    #[test]
    fn config_echo_survives_a_json_round_trip() {
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"combined\"\nseed = 9\nn_sweep = [1024, 2048]\n",
        )
        .unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }
}
