//! Quasineutral sweep: the d = 1 PDE at shrinking ε against the stationary
//! homogeneous limit profile g0, with and without oscillation filtering.
//!
//! For each ε the perturbed profile evolves to the horizon; at each snapshot
//! the state is coarse-grained, quantized, and measured against g0 twice —
//! raw, and with the corrector profile R(t, x) subtracted from the velocities
//! first. Filtering must beat the raw distance at every ε, and the filtered
//! sup over time must shrink as ε does. The electric-field probe series
//! additionally locates the plasma-oscillation frequency, which has to sit
//! at 1/ε.
//!
//! The unperturbed profile (amplitude 0) is exactly stationary, so every
//! distance must sit at the solver floor; the spectrum check is skipped
//! because a flat probe series has no frequency to measure.

use rayon::prelude::*;
use vplab_core::correctors::{corrector_init, corrector_r, OscillationFrequency};
use vplab_core::transport::{filter_measure, quantize_grid};
use vplab_core::vlasov::{dominant_frequency, perturbed_bump_grid, run_vp, VpRunConfig};

use super::{
    distance_opts, ensure_sweep_admissible, eval_grid, open_report, r_opt, steps_and_stride,
    GridDistancePipeline,
};
use crate::config::ExperimentConfig;
use crate::error::LabError;
use crate::report::{RunReport, Table};
use crate::stats::strictly_decreasing;
use crate::Result;

/// Distances at or below this are read as "exactly stationary up to solver
/// noise": quantization weights drift by O(1e-13) per step through the clip
/// and renormalize cycle, and the transport problem turns that into an
/// equally tiny W1.
const STATIONARY_FLOOR: f64 = 1e-9;

struct EpsOutcome {
    times: Vec<f64>,
    w1_raw: Vec<f64>,
    w1_filtered: Vec<f64>,
    omega: Option<f64>,
    steps: u64,
}

pub fn run_quasineutral(cfg: &ExperimentConfig, force: bool) -> Result<RunReport> {
    if cfg.dim != 1 {
        return Err(LabError::config(
            "quasineutral needs dim = 1: filtering and the PDE reference are one-dimensional",
        ));
    }
    if cfg.eps_sweep.is_empty() {
        return Err(LabError::config("quasineutral needs a nonempty eps_sweep"));
    }
    let mut eps_sweep = cfg.eps_sweep.clone();
    eps_sweep.sort_by(|a, b| b.partial_cmp(a).expect("finite eps"));

    let mut report = open_report(cfg, force)?;
    let points: Vec<_> = eps_sweep
        .iter()
        .map(|&eps| {
            let mut p = cfg.regime_params();
            p.eps = eps;
            p
        })
        .collect();
    let forced_violations = ensure_sweep_admissible(&points, force)?;
    if !forced_violations.is_empty() {
        report.forced = true;
        report.diag("forced_violations", &forced_violations);
    }

    let outcomes: Vec<EpsOutcome> = eps_sweep
        .par_iter()
        .map(|&eps| one_eps(cfg, eps))
        .collect::<Result<Vec<_>>>()?;

    let mut series = Table::new("w1_timeseries", &["eps", "t", "w1_raw", "w1_filtered"]);
    let mut sweep = Table::new(
        "w1_vs_eps",
        &["eps", "w1_raw_sup", "w1_filtered_sup", "filtered_over_raw"],
    );
    let mut spectrum = Table::new("spectrum", &["eps", "omega", "omega_times_eps"]);
    let mut filtered_sups = Vec::new();

    for (&eps, out) in eps_sweep.iter().zip(&outcomes) {
        report.step_count += out.steps;
        for ((&t, &raw), &filt) in out.times.iter().zip(&out.w1_raw).zip(&out.w1_filtered) {
            series.push(vec![eps, t, raw, filt]);
        }
        let raw_sup = out.w1_raw.iter().cloned().fold(0.0f64, f64::max);
        let filt_sup = out.w1_filtered.iter().cloned().fold(0.0f64, f64::max);
        let ratio = if raw_sup > 0.0 { filt_sup / raw_sup } else { 0.0 };
        sweep.push(vec![eps, raw_sup, filt_sup, ratio]);
        filtered_sups.push(filt_sup);
        if let Some(omega) = out.omega {
            spectrum.push(vec![eps, omega, omega * eps]);
        }

        if cfg.amplitude_for(eps) == 0.0 {
            report.check(
                "stationary-floor",
                raw_sup <= STATIONARY_FLOOR && filt_sup <= STATIONARY_FLOOR,
                format!(
                    "eps = {eps}: unperturbed profile stayed within {raw_sup:.2e} of g0 \
                     (floor {STATIONARY_FLOOR:.0e})"
                ),
            );
        } else {
            report.check(
                "filtered-below-raw",
                filt_sup < raw_sup,
                format!("eps = {eps}: sup_t W1 filtered {filt_sup:.4} vs raw {raw_sup:.4}"),
            );
            if let Some(omega) = out.omega {
                report.check(
                    "spectrum-at-1-over-eps",
                    (omega * eps - 1.0).abs() <= 0.1,
                    format!("eps = {eps}: dominant ω = {omega:.3}, ω·ε = {:.4}", omega * eps),
                );
            }
        }
    }

    if eps_sweep.len() >= 2 && eps_sweep.iter().all(|&e| cfg.amplitude_for(e) > 0.0) {
        report.check(
            "filtered-decreasing-in-eps",
            strictly_decreasing(&filtered_sups),
            format!("filtered sup_t W1 along eps = {eps_sweep:?}: {filtered_sups:?}"),
        );
    }

    report.push_table(series);
    report.push_table(sweep);
    report.push_table(spectrum);
    report.finish();
    Ok(report)
}

fn one_eps(cfg: &ExperimentConfig, eps: f64) -> Result<EpsOutcome> {
    let a = cfg.amplitude_for(eps);
    let dt = cfg.effective_dt(eps);
    let (n_steps, stride) = steps_and_stride(cfg.t_end, dt, cfg.snapshots);

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
    let g0 = perturbed_bump_grid(
        cfg.mx,
        cfg.mv,
        cfg.vmax,
        eps,
        r_opt(cfg.r),
        0.0,
        cfg.f0_v0,
        cfg.f0_v_width,
    )?;
    let corrector = corrector_init(&f0)?;

    let traj = run_vp(
        &f0,
        &VpRunConfig {
            t_end: n_steps as f64 * dt,
            dt,
            snapshot_every: stride,
            probe_index: cfg.mx / 4,
        },
    )?;

    let pipe = GridDistancePipeline::new(&eval_grid(&g0)?, distance_opts(cfg.metric_p))?;
    let mut times = Vec::with_capacity(traj.snapshots.len());
    let mut w1_raw = Vec::with_capacity(traj.snapshots.len());
    let mut w1_filtered = Vec::with_capacity(traj.snapshots.len());
    for snap in &traj.snapshots {
        let (cloud, _) = quantize_grid(&eval_grid(&snap.grid)?)?;
        let (r_profile, _) =
            corrector_r(&corrector, snap.grid.time, OscillationFrequency::InverseEps)?;
        let filtered = filter_measure(&cloud, &r_profile.values)?;
        times.push(snap.grid.time);
        w1_raw.push(pipe.distance(&cloud)?);
        w1_filtered.push(pipe.distance(&filtered)?);
    }

    // a flat probe series (unperturbed run) has no spectral peak to locate
    let omega = if a == 0.0 {
        None
    } else {
        Some(dominant_frequency(&traj.probe_e, dt)?)
    };

    Ok(EpsOutcome {
        times,
        w1_raw,
        w1_filtered,
        omega,
        steps: n_steps as u64,
    })
}
