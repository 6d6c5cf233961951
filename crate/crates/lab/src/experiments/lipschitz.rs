//! Measures the Lipschitz constant of the mollified force map h ↦ χ_r∗K∗h
//! over a sweep of mollifier radii and checks the logarithmic law
//! L(r) ≤ C·|ln r|·(1 + ‖h‖_∞).
//!
//! One dimension is supported but uninteresting: there the force gradient
//! is a difference of bounded averages, so L(r) stays flat and the law
//! holds with room to spare. The genuine phenomenon — growth like |ln r|
//! and no faster — needs dimension two, which is what the stock config
//! pins. Two checks probe it from both sides:
//!
//! * `log-law-domination` — the dominating constant fitted on the coarse
//!   half of the sweep must keep dominating the fine half (within 5 %); a
//!   superlogarithmic L(r) fails this extrapolation;
//! * `no-superlogarithmic-growth` — the quadratic coefficient of L against
//!   |ln r| must not be meaningfully positive relative to the linear term.
//!
//! Radii are powers of two down to the resolution floor of the spectral
//! grid (each radius needs `MIN_CELLS_PER_R` cells).

use vplab_core::kernels::{
    lipschitz_estimate, mollified_force_table, MollifierSpec, MIN_CELLS_PER_R,
};
use vplab_core::regimes::fit_dominating_constant;

use super::open_report;
use crate::config::ExperimentConfig;
use crate::report::{RunReport, Table};
use crate::{LabError, Result};

/// Spectral grid per dimension; d = 2 pays m² memory, so it runs coarser.
const M_1D: usize = 4096;
const M_2D: usize = 2048;

/// Slack for the coarse-half constant on the fine half.
const DOMINATION_SLACK: f64 = 1.05;
/// Curvature beyond this fraction of the linear slope counts as
/// superlogarithmic. The measured d = 2 curvature is slightly *negative*
/// (the growth saturates as r approaches the grid scale), so a small
/// positive allowance only absorbs fit noise.
const CURVATURE_FRACTION: f64 = 0.05;

pub fn run_lipschitz(cfg: &ExperimentConfig, force: bool) -> Result<RunReport> {
    let mut report = open_report(cfg, force)?;
    let (d, m) = match cfg.dim {
        1 => (1, M_1D),
        2 => (2, M_2D),
        d => {
            return Err(LabError::config(format!(
                "force tables are built for dim 1 or 2, got {d}"
            )))
        }
    };

    let radii = if cfg.r_sweep.is_empty() {
        default_radii(m)
    } else {
        let mut rs = cfg.r_sweep.clone();
        rs.sort_by(|a, b| b.partial_cmp(a).expect("radii are finite"));
        rs
    };
    if radii.len() < 4 {
        return Err(LabError::config(format!(
            "a curvature fit needs at least 4 radii, got {}",
            radii.len()
        )));
    }

    let h = density(d, m);
    let h_sup = h.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    report.diag_f64("density_sup", h_sup);

    // sequential: each table holds O(d·m^d) spectra and the FFTs inside
    // already use the whole machine
    let mut log_abs = Vec::new();
    let mut measured = Vec::new();
    let mut predicted = Vec::new();
    for &r in &radii {
        let table = mollified_force_table(d, m, cfg.eps, Some(MollifierSpec::new(r)?))?;
        let lip = lipschitz_estimate(&table, &h)?;
        log_abs.push(r.ln().abs());
        measured.push(lip);
        predicted.push(r.ln().abs() * (1.0 + h_sup));
    }

    // constant from the coarse half, verdict on the fine half
    let half = radii.len() / 2;
    let c_coarse = fit_dominating_constant(&predicted[..half], &measured[..half])?;
    let c_all = fit_dominating_constant(&predicted, &measured)?;
    let mut fine_ok = true;
    let mut worst_ratio = 0.0_f64;
    for i in half..radii.len() {
        let ratio = measured[i] / (c_coarse * predicted[i]);
        worst_ratio = worst_ratio.max(ratio);
        fine_ok &= ratio <= DOMINATION_SLACK;
    }
    report.check(
        "log-law-domination",
        fine_ok,
        format!(
            "C = {c_coarse:.4} fitted on r >= {:.5}; worst fine-half ratio {worst_ratio:.4}",
            radii[half - 1]
        ),
    );

    let (_, a1, a2) = crate::stats::quadratic_fit(&log_abs, &measured)?;
    let curvature_ok = a2 <= CURVATURE_FRACTION * a1.abs().max(1e-12);
    report.check(
        "no-superlogarithmic-growth",
        curvature_ok,
        format!("quadratic coefficient {a2:.4e} against linear slope {a1:.4e}"),
    );

    let mut table = Table::new(
        "lipschitz_vs_r",
        &["r", "log_abs", "lip_measured", "predicted_unit", "ratio"],
    );
    for i in 0..radii.len() {
        table.push(vec![
            radii[i],
            log_abs[i],
            measured[i],
            predicted[i],
            measured[i] / predicted[i],
        ]);
    }
    report.push_table(table);
    report.diag_f64("c_fit_all", c_all);
    report.diag_f64("c_fit_coarse", c_coarse);
    report.diag_f64("curvature", a2);

    report.finish();
    Ok(report)
}

/// Powers of two from 2⁻⁴ down to the finest radius the grid resolves.
fn default_radii(m: usize) -> Vec<f64> {
    let mut rs = Vec::new();
    let mut k = 4u32;
    loop {
        let r = 2.0_f64.powi(-(k as i32));
        if r * m as f64 < MIN_CELLS_PER_R as f64 {
            break;
        }
        rs.push(r);
        k += 1;
    }
    rs
}

/// Fixed smooth density with an O(1) oscillation; symmetric in the axes so
/// the flat storage order cannot matter.
fn density(d: usize, m: usize) -> Vec<f64> {
    let tau = std::f64::consts::TAU;
    match d {
        1 => (0..m)
            .map(|i| {
                let x = -0.5 + i as f64 / m as f64;
                1.0 + 0.5 * (tau * x).cos() + 0.3 * (3.0 * tau * x).sin()
            })
            .collect(),
        _ => (0..m * m)
            .map(|idx| {
                let x = -0.5 + (idx / m) as f64 / m as f64;
                let y = -0.5 + (idx % m) as f64 / m as f64;
                1.0 + 0.5 * (tau * x).cos() * (tau * y).cos()
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radii_respect_resolution_floor() {
        let rs = default_radii(2048);
        assert_eq!(rs.first().copied(), Some(0.0625));
        for &r in &rs {
            assert!(r * 2048.0 >= MIN_CELLS_PER_R as f64);
        }
        assert!(rs.len() >= 4);
    }
}
