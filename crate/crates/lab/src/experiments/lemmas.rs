//! Randomized trials of every inequality lemma the distances rely on, plus
//! the exhaustive-enumeration oracle for the exact transport solver.
//!
//! Families (each run `trials` times with its own seed stream):
//! * `lp-vs-enumeration` — W2 between ≤ 6 uniform atoms vs brute force over
//!   all pairings (an optimal coupling of uniform equal-size clouds is a
//!   permutation, so enumeration is exact);
//! * `mollification-contraction` — W_p(χ_r∗μ, χ_r∗ν) ≤ W_p(μ, ν);
//! * `self-mollification` — W2(μ, χ_r∗μ) ≤ r;
//! * `filtering-factor` — W1(ν̃₁, ν̃₂) ≤ (1 + ‖∇R‖_∞) W1(ν₁, ν₂), with an
//!   R ≡ 0 equality branch woven in every 20th trial;
//! * `velocity-scaling` — W_p(ν₁, ν₂) ≤ R·W_p(S_R ν₁, S_R ν₂) for R > 1;
//! * `loeper` — ‖∇(Ψ₁−Ψ₂)‖_{L²} ≤ ε^{-2} max‖h‖_∞^{1/2} W2(h₁, h₂) for
//!   band-limited densities, with the exact spectral gradient.
//!
//! A violation is a margin beyond the stated tolerance; the suite reports
//! counts and the worst margin per family, and every count must be zero.
//! When `resamples > 0` the concentration check joins the report as an
//! extra family (see the `concentration` module); `resamples = 0` keeps
//! the suite to the six deterministic-tolerance families.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use vplab_core::grid::{freq, real_to_spectrum, FftCache};
use vplab_core::kernels::MollifierSpec;
use vplab_core::transport::{
    filter_measure, mollify_measure, scale_measure, w2_discrete, wp_1d_density, wp_discrete,
    DistanceOpts, GroundMetric, MollifyMode, WeightedPointCloud,
};

use super::{derive_seed, open_report};
use crate::config::ExperimentConfig;
use crate::report::{RunReport, Table};
use crate::Result;

/// Slack for LP round-off in the inequality families.
const LP_TOL: f64 = 1e-8;
/// The enumeration oracle must match to strict round-off.
const ORACLE_TOL: f64 = 1e-10;
/// The Loeper comparison pits a spectral integral against a cell-based W2;
/// the discrete mismatch is relative, not absolute.
const LOEPER_REL: f64 = 1e-3;

struct FamilyOutcome {
    name: &'static str,
    trials: usize,
    violations: usize,
    worst_margin: f64,
}

pub fn run_lemma_suite(cfg: &ExperimentConfig, force: bool) -> Result<RunReport> {
    let mut report = open_report(cfg, force)?;
    let trials = cfg.trials;

    let families: Vec<fn(u64, usize) -> FamilyOutcome> = vec![
        lp_vs_enumeration,
        mollification_contraction,
        self_mollification,
        filtering_factor,
        velocity_scaling,
        loeper,
    ];
    let outcomes: Vec<FamilyOutcome> = families
        .par_iter()
        .enumerate()
        .map(|(i, family)| family(derive_seed(cfg.seed, i as u64), trials))
        .collect();

    let mut table = Table::new(
        "lemma_trials",
        &["family_id", "trials", "violations", "worst_margin"],
    );
    let mut names = Vec::new();
    for (i, out) in outcomes.iter().enumerate() {
        table.push(vec![
            i as f64,
            out.trials as f64,
            out.violations as f64,
            out.worst_margin,
        ]);
        names.push(out.name);
        report.check(
            &format!("lemma-{}", out.name),
            out.violations == 0,
            format!(
                "{} trials, {} violations, worst margin {:.2e}",
                out.trials, out.violations, out.worst_margin
            ),
        );
    }
    report.push_table(table);
    report.diag("family_names", &names);

    if cfg.resamples > 0 {
        super::concentration::append_concentration(cfg, &mut report)?;
    }

    report.finish();
    Ok(report)
}

fn phase_cloud(rng: &mut ChaCha8Rng, n: usize, xspan: f64, vspan: f64) -> WeightedPointCloud {
    let pts: Vec<f64> = (0..n)
        .flat_map(|_| {
            [
                rng.random_range(-xspan..xspan),
                rng.random_range(-vspan..vspan),
            ]
        })
        .collect();
    let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    WeightedPointCloud::new(2, 1, pts, w).expect("cloud inputs are in range")
}

fn enumerate_pairings(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        enumerate_pairings(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

fn lp_vs_enumeration(seed: u64, trials: usize) -> FamilyOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let n = rng.random_range(2..=6usize);
        let a_pts: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-0.4..0.4)).collect();
        let b_pts: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-0.4..0.4)).collect();
        let a = WeightedPointCloud::phase_uniform(1, a_pts.clone()).expect("in range");
        let b = WeightedPointCloud::phase_uniform(1, b_pts.clone()).expect("in range");
        let (w2, _) = w2_discrete(&a, &b, GroundMetric::EuclideanFundamental)
            .expect("small problems solve");
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        enumerate_pairings(&mut perm, 0, &mut |p| {
            let cost: f64 = p
                .iter()
                .enumerate()
                .map(|(i, &j)| {
                    let dx = a_pts[2 * i] - b_pts[2 * j];
                    let dv = a_pts[2 * i + 1] - b_pts[2 * j + 1];
                    (dx * dx + dv * dv) / n as f64
                })
                .sum();
            best = best.min(cost);
        });
        let margin = (w2 - best.sqrt()).abs() - ORACLE_TOL;
        worst = worst.max(margin);
        if margin > 0.0 {
            violations += 1;
        }
    }
    FamilyOutcome { name: "lp-vs-enumeration", trials, violations, worst_margin: worst }
}

fn mollification_contraction(seed: u64, trials: usize) -> FamilyOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..trials {
        let r = rng.random_range(0.02..0.08);
        let moll = MollifierSpec::new(r).expect("r in range");
        let a = phase_cloud(&mut rng, rng.random_range(2..7), 0.35, 1.0);
        let b = phase_cloud(&mut rng, rng.random_range(2..7), 0.35, 1.0);
        let mode = MollifyMode::Deterministic { points_per_axis: 3 + trial % 3 };
        let (ma, _) = mollify_measure(&a, &moll, mode).expect("mollification succeeds");
        let (mb, _) = mollify_measure(&b, &moll, mode).expect("mollification succeeds");
        let p = if trial % 2 == 0 { 1 } else { 2 };
        let opts = DistanceOpts { p, metric: GroundMetric::EuclideanFundamental };
        let (before, _) = wp_discrete(&a, &b, opts).expect("solves");
        let (after, _) = wp_discrete(&ma, &mb, opts).expect("solves");
        let margin = after - before - LP_TOL;
        worst = worst.max(margin);
        if margin > 0.0 {
            violations += 1;
        }
    }
    FamilyOutcome { name: "mollification-contraction", trials, violations, worst_margin: worst }
}

fn self_mollification(seed: u64, trials: usize) -> FamilyOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..trials {
        let r = rng.random_range(0.01..0.08);
        let moll = MollifierSpec::new(r).expect("r in range");
        let a = phase_cloud(&mut rng, rng.random_range(2..8), 0.3, 1.0);
        let mode = if trial % 3 == 0 {
            MollifyMode::Stochastic { seed: rng.random() }
        } else {
            MollifyMode::Deterministic { points_per_axis: 3 + trial % 3 }
        };
        let (ma, _) = mollify_measure(&a, &moll, mode).expect("mollification succeeds");
        let (w, _) = wp_discrete(&a, &ma, DistanceOpts::w2()).expect("solves");
        let margin = w - r - LP_TOL;
        worst = worst.max(margin);
        if margin > 0.0 {
            violations += 1;
        }
    }
    FamilyOutcome { name: "self-mollification", trials, violations, worst_margin: worst }
}

fn filtering_factor(seed: u64, trials: usize) -> FamilyOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 64;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..trials {
        // every 20th trial exercises the R ≡ 0 equality branch
        let zero_field = trial % 20 == 0;
        let (c1, c2, p1, p2) = if zero_field {
            (0.0, 0.0, 0.0, 0.0)
        } else {
            (
                rng.random_range(-0.4..0.4),
                rng.random_range(-0.2..0.2),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        };
        let tau = std::f64::consts::TAU;
        let r_field: Vec<f64> = (0..m)
            .map(|i| {
                let t = tau * (-0.5 + i as f64 / m as f64);
                c1 * (t + p1).sin() + c2 * (2.0 * t + p2).cos()
            })
            .collect();
        // analytic sup |R'| on a fine sample
        let grad_sup = (0..4096)
            .map(|i| {
                let t = tau * (-0.5 + i as f64 / 4096.0);
                (c1 * tau * (t + p1).cos() - c2 * 2.0 * tau * (2.0 * t + p2).sin()).abs()
            })
            .fold(0.0_f64, f64::max);

        let a = phase_cloud(&mut rng, rng.random_range(2..9), 0.45, 1.0);
        let b = phase_cloud(&mut rng, rng.random_range(2..9), 0.45, 1.0);
        let fa = filter_measure(&a, &r_field).expect("filter applies");
        let fb = filter_measure(&b, &r_field).expect("filter applies");
        let (before, _) = wp_discrete(&a, &b, DistanceOpts::w1()).expect("solves");
        let (after, _) = wp_discrete(&fa, &fb, DistanceOpts::w1()).expect("solves");
        // the cubic interpolation of the trig field overshoots the analytic
        // gradient by strictly less than the sampling slack folded into
        // LP_TOL-scale margins at these amplitudes
        let margin = if zero_field {
            (after - before).abs() - 1e-12
        } else {
            after - (1.0 + grad_sup) * before - LP_TOL
        };
        worst = worst.max(margin);
        if margin > 0.0 {
            violations += 1;
        }
    }
    FamilyOutcome { name: "filtering-factor", trials, violations, worst_margin: worst }
}

fn velocity_scaling(seed: u64, trials: usize) -> FamilyOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..trials {
        let r_scale = rng.random_range(1.0..4.0);
        let a = phase_cloud(&mut rng, rng.random_range(2..8), 0.45, 1.0);
        let b = phase_cloud(&mut rng, rng.random_range(2..8), 0.45, 1.0);
        let sa = scale_measure(&a, r_scale).expect("scale applies");
        let sb = scale_measure(&b, r_scale).expect("scale applies");
        let p = if trial % 2 == 0 { 1 } else { 2 };
        let opts = DistanceOpts { p, metric: GroundMetric::EuclideanFundamental };
        let (lhs, _) = wp_discrete(&a, &b, opts).expect("solves");
        let (scaled, _) = wp_discrete(&sa, &sb, opts).expect("solves");
        let margin = lhs - r_scale * scaled - LP_TOL;
        worst = worst.max(margin);
        if margin > 0.0 {
            violations += 1;
        }
    }
    FamilyOutcome { name: "velocity-scaling", trials, violations, worst_margin: worst }
}

fn loeper(seed: u64, trials: usize) -> FamilyOutcome {
    let m = 128;
    let cache = FftCache::new(m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let eps = [0.3, 0.5, 1.0][rng.random_range(0..3)];
        let mut mk = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let a1 = rng.random_range(0.15..0.35);
            let a2 = rng.random_range(0.0..0.15);
            let ph1 = rng.random_range(0.0..std::f64::consts::TAU);
            let ph2 = rng.random_range(0.0..std::f64::consts::TAU);
            (0..m)
                .map(|i| {
                    let t = std::f64::consts::TAU * (-0.5 + i as f64 / m as f64);
                    1.0 + a1 * (t + ph1).cos() + a2 * (3.0 * t + ph2).cos()
                })
                .collect()
        };
        let h1 = mk(&mut rng);
        let h2 = mk(&mut rng);
        let spec1 = real_to_spectrum(&h1, &cache);
        let spec2 = real_to_spectrum(&h2, &cache);
        let dx = 1.0 / m as f64;
        // Parseval: ‖∇(Ψ₁−Ψ₂)‖² = Σ_{k≠0} |ĥ₁−ĥ₂|² / (4π²k²ε⁴)
        let mut grad2 = 0.0;
        for idx in 0..m {
            let k = freq(idx, m);
            if k == 0 {
                continue;
            }
            let dh = (spec1[idx] - spec2[idx]).norm() * dx;
            let denom = 2.0 * std::f64::consts::PI * k as f64 * eps * eps;
            grad2 += (dh / denom) * (dh / denom);
        }
        let lhs = grad2.sqrt();
        let hmax = h1.iter().chain(&h2).fold(0.0_f64, |acc, &v| acc.max(v));
        let w2 = wp_1d_density(&h1, &h2, 2).expect("density distance solves");
        let rhs = hmax.sqrt() * w2 / (eps * eps);
        let margin = lhs - rhs * (1.0 + LOEPER_REL) - 1e-13;
        worst = worst.max(margin);
        if margin > 0.0 {
            violations += 1;
        }
    }
    FamilyOutcome { name: "loeper", trials, violations, worst_margin: worst }
}
