//! Mean-field convergence at fixed ε: the N-particle system against its
//! d = 1 PDE reference, swept over N.
//!
//! For each N in the sweep and each replica seed, the particles start from
//! i.i.d. samples of the same perturbed-bump profile the PDE evolves, run
//! under the identically-regularized spectral force, and the phase-space
//! W1 between the empirical measure and the PDE snapshot is recorded on a
//! shared snapshot schedule. The verdicts are trend-based: the per-N median
//! of sup_t W1 must fall as N grows, with a fitted log-log slope at or
//! below the Monte-Carlo −0.3.

use rayon::prelude::*;
use vplab_core::particles::{evolve, sample_initial, EnsembleParams, InitialDensity, SpectralForce};
use vplab_core::vlasov::{perturbed_bump_grid, run_vp, VpRunConfig};

use super::{
    derive_seed, distance_opts, ensure_sweep_admissible, eval_grid, open_report, r_opt,
    steps_and_stride, GridDistancePipeline,
};
use crate::config::ExperimentConfig;
use crate::error::LabError;
use crate::report::{RunReport, Table};
use crate::stats::{linear_fit, median, strictly_decreasing};
use crate::Result;

pub fn run_meanfield(cfg: &ExperimentConfig, force: bool) -> Result<RunReport> {
    if cfg.dim != 1 {
        return Err(LabError::config(
            "meanfield needs dim = 1: that is the only dimension with a PDE reference",
        ));
    }
    if cfg.n_sweep.is_empty() {
        return Err(LabError::config("meanfield needs a nonempty n_sweep"));
    }
    let mut report = open_report(cfg, force)?;
    // the verdict must hold at every sweep point, not just the largest N
    let points: Vec<_> = cfg
        .n_sweep
        .iter()
        .map(|&n| {
            let mut p = cfg.regime_params();
            p.n_particles = n as f64;
            p
        })
        .collect();
    let forced_violations = ensure_sweep_admissible(&points, force)?;
    if !forced_violations.is_empty() {
        report.forced = true;
        report.diag("forced_violations", &forced_violations);
    }

    let eps = cfg.eps;
    let a = cfg.amplitude_for(eps);
    let dt = cfg.effective_dt(eps);
    let (n_steps, stride) = steps_and_stride(cfg.t_end, dt, cfg.snapshots);

    // PDE reference, shared by every N and replica
    let f0 = perturbed_bump_grid(
        cfg.mx,
        cfg.mv,
        cfg.vmax,
        eps,
        r_opt(cfg.r),
        a,
        cfg.f0_v0,
        cfg.f0_v_width,
    )?;
    let traj = run_vp(
        &f0,
        &VpRunConfig {
            t_end: n_steps as f64 * dt,
            dt,
            snapshot_every: stride,
            probe_index: cfg.mx / 4,
        },
    )?;
    report.step_count += n_steps as u64;

    // one distance pipeline per snapshot: N-trends at fixed t never mix
    // discretizations
    let opts = distance_opts(cfg.metric_p);
    let mut pipelines = Vec::with_capacity(traj.snapshots.len());
    for snap in &traj.snapshots {
        pipelines.push(GridDistancePipeline::new(&eval_grid(&snap.grid)?, opts)?);
    }

    let density = InitialDensity::PerturbedBump {
        a,
        v0: vec![cfg.f0_v0],
        v_width: cfg.f0_v_width,
    };

    // fan out over (N, replica); each job is internally deterministic
    let jobs: Vec<(u64, u64)> = cfg
        .n_sweep
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| {
            (0..cfg.seeds as u64).map(move |k| (n, derive_seed(cfg.seed, (i as u64) << 32 | k)))
        })
        .collect();

    let results: Vec<(Vec<f64>, u64)> = jobs
        .par_iter()
        .map(|&(n, seed)| -> Result<(Vec<f64>, u64)> {
            let params = EnsembleParams::new(1, n as usize, eps, cfg.r)?;
            let mut ens = sample_initial(&density, params, seed)?;
            let force_op = if cfg.r > 0.0 {
                SpectralForce::new(eps, cfg.r)?
            } else {
                SpectralForce::with_modes(eps, 0.0, cfg.force_modes)?
            };
            let mut w1 = Vec::with_capacity(traj.snapshots.len());
            let mut done = 0usize;
            for (snap, pipe) in traj.snapshots.iter().zip(&pipelines) {
                let target = snap.step;
                if target > done {
                    evolve(&mut ens, dt, target - done, |e| force_op.force(e))?;
                    done = target;
                }
                w1.push(pipe.distance(&ens.phase_cloud()?)?);
            }
            Ok((w1, done as u64))
        })
        .collect::<Result<Vec<_>>>()?;

    // tables: the full time series, then the per-N summary
    let mut series = Table::new("w1_timeseries", &["n", "replica", "t", "w1"]);
    let mut idx = 0;
    for &n in &cfg.n_sweep {
        for k in 0..cfg.seeds {
            let (w1, steps) = &results[idx];
            report.step_count += steps;
            for (s, &w) in w1.iter().enumerate() {
                series.push(vec![n as f64, k as f64, traj.snapshots[s].grid.time, w]);
            }
            idx += 1;
        }
    }
    report.push_table(series);

    let mut summary = Table::new("w1_vs_n", &["n", "w1_sup_median", "w1_sup_min", "w1_sup_max"]);
    let mut medians = Vec::new();
    idx = 0;
    for &n in &cfg.n_sweep {
        let sups: Vec<f64> = (0..cfg.seeds)
            .map(|_| {
                let s = results[idx].0.iter().cloned().fold(0.0f64, f64::max);
                idx += 1;
                s
            })
            .collect();
        let med = median(&sups)?;
        let lo = sups.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sups.iter().cloned().fold(0.0f64, f64::max);
        summary.push(vec![n as f64, med, lo, hi]);
        medians.push(med);
    }
    report.push_table(summary);

    report.check(
        "w1-medians-decreasing",
        strictly_decreasing(&medians),
        format!("median sup_t W1 over N = {:?}: {medians:?}", cfg.n_sweep),
    );
    if cfg.n_sweep.len() >= 2 {
        let ln_n: Vec<f64> = cfg.n_sweep.iter().map(|&n| (n as f64).ln()).collect();
        let ln_w: Vec<f64> = medians.iter().map(|w| w.ln()).collect();
        let (_, slope) = linear_fit(&ln_n, &ln_w)?;
        report.diag("w1_slope_vs_log_n", slope);
        report.check(
            "w1-slope",
            slope <= -0.3,
            format!("fitted d log W1 / d log N = {slope:.3} (Monte-Carlo rate ≈ −0.5)"),
        );
    }
    report.diag("pde_max_undershoot", traj.max_undershoot);
    report.diag("pde_max_mass_drift", traj.max_mass_drift);
    report.finish();
    Ok(report)
}
