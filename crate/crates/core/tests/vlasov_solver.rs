//! End-to-end checks of the semi-Lagrangian Vlasov solver: oscillation
//! frequency against the spectral analysis, energy bookkeeping, the
//! quasineutral rescaling identity and density control over an ε-sweep.

use vplab_core::vlasov::{
    dominant_frequency, perturbed_bump_grid, rescale_solution, run_vp, VpRunConfig,
};

/// sup |a - b| over two distributions.
fn sup_diff(a: &vplab_core::vlasov::PhaseSpaceGrid, b: &vplab_core::vlasov::PhaseSpaceGrid) -> f64 {
    a.f.iter()
        .zip(b.f.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max)
}

#[test]
fn plasma_oscillation_frequency_tracks_one_over_epsilon() {
    // Small sinusoidal perturbation of a homogeneous bump. The linearized
    // system rings at ω ≈ 1/ε (thermal corrections enter at O(ε²) for this
    // profile), so the probe series must peak there.
    let eps = 0.1;
    let f0 = perturbed_bump_grid(64, 256, 1.0, eps, None, 0.05, 0.0, 0.4).unwrap();
    let dt = eps / 20.0;
    let n_steps = 1005usize; // ≈ 8 oscillation periods
    let cfg = VpRunConfig {
        t_end: n_steps as f64 * dt,
        dt,
        snapshot_every: 0,
        probe_index: 16, // x = -1/4, an antinode of the mode-1 field
    };
    let traj = run_vp(&f0, &cfg).unwrap();
    let omega = dominant_frequency(&traj.probe_e, dt).unwrap();
    eprintln!(
        "omega*eps = {:.4}, mass drift {:.3e}, undershoot {:.3e}",
        omega * eps,
        traj.max_mass_drift,
        traj.max_undershoot
    );
    assert!(
        (omega * eps - 1.0).abs() <= 0.1,
        "measured omega*eps = {:.4}, expected 1 +- 0.1",
        omega * eps
    );
    // Compactly supported data has a steep edge layer, so cubic interpolation
    // undershoots at the 1e-4 level on this grid (measured 2.9e-4); the
    // per-step renormalization keeps the induced mass defect near 1e-6.
    assert!(traj.max_mass_drift <= 1e-5, "mass drift {:.3e}", traj.max_mass_drift);
    assert!(traj.max_undershoot <= 1e-3, "undershoot {:.3e}", traj.max_undershoot);
}

#[test]
fn energy_is_conserved_without_regularization() {
    // Kinetic + field energy is an invariant of the bare (r = 0) system.
    // The discrete drift has two sources: O(dt²) splitting and cubic
    // interpolation damping; the bounds below are the measured levels for
    // each resolution, with headroom.
    let run = |mx: usize, mv: usize, dt: f64| -> (f64, f64) {
        let f0 = perturbed_bump_grid(mx, mv, 1.0, 0.5, None, 0.3, 0.0, 0.5).unwrap();
        let cfg = VpRunConfig { t_end: 1.0, dt, snapshot_every: 0, probe_index: 0 };
        let traj = run_vp(&f0, &cfg).unwrap();
        let e0 = traj.total_energy(0);
        let drift = (0..traj.times.len())
            .map(|s| (traj.total_energy(s) - e0).abs())
            .fold(0.0f64, f64::max);
        (drift / e0.abs(), traj.max_undershoot)
    };
    let (coarse, u1) = run(64, 128, 0.02);
    let (fine, u2) = run(128, 256, 0.02);
    eprintln!("energy drift: coarse {coarse:.3e}, fine {fine:.3e}; undershoot {u1:.2e}/{u2:.2e}");
    // Measured: 8.0e-4 on 64x128, 1.2e-4 on 128x256 (interpolation-limited,
    // contracts by ~6x per doubling).
    assert!(coarse <= 2e-3, "coarse-grid energy drift {coarse:.3e}");
    assert!(fine <= 3e-4, "fine-grid energy drift {fine:.3e}");
}

#[test]
fn evolve_then_rescale_matches_rescale_then_evolve() {
    // 𝓕(t,x,v) = ε^{-1} f(εt, x, v/ε) maps solutions of the ε-system to
    // solutions of the unit system. The discrete scheme commutes with this
    // rescaling exactly in exact arithmetic (every substep scales), so the
    // gap is pure rounding noise: bitwise zero for dyadic ε, a few ulps
    // otherwise — far below any solver tolerance.
    let check = |eps: f64, tol: f64| {
        let f0 = perturbed_bump_grid(64, 128, 1.0, eps, None, 0.2, 0.0, 0.3).unwrap();
        let dt = 0.005;
        let n = 25usize;
        let cfg = VpRunConfig {
            t_end: n as f64 * dt,
            dt,
            snapshot_every: 0,
            probe_index: 0,
        };
        let evolved = run_vp(&f0, &cfg).unwrap();
        let route_a = rescale_solution(evolved.final_grid(), None).unwrap();

        let g0 = rescale_solution(&f0, None).unwrap();
        let dt_unit = dt / eps;
        let cfg_unit = VpRunConfig {
            t_end: n as f64 * dt_unit,
            dt: dt_unit,
            snapshot_every: 0,
            probe_index: 0,
        };
        let route_b = run_vp(&g0, &cfg_unit).unwrap();
        let gap = sup_diff(&route_a, route_b.final_grid());
        let scale = route_a.f.iter().fold(0.0f64, |m, &z| m.max(z.abs()));
        eprintln!("eps = {eps}: rescaling gap {:.3e} (sup f = {scale:.3})", gap);
        assert!(
            gap <= tol * scale,
            "eps = {eps}: routes differ by {gap:.3e}, sup f = {scale:.3e}"
        );
    };
    check(0.5, 1e-14);
    check(0.4, 1e-11);
}

#[test]
fn sup_density_stays_bounded_over_the_quasineutral_sweep() {
    // Quasineutral-scaled perturbations (amplitude ∝ ε): the density sup
    // must stay O(1) uniformly in ε, i.e. the fitted constant
    // C = sup_t ||ρ(t)||_∞ is stable across the sweep.
    let mut fitted = Vec::new();
    for &eps in &[0.2f64, 0.1, 0.05] {
        let f0 = perturbed_bump_grid(64, 256, 1.0, eps, None, 0.5 * eps, 0.0, 0.4).unwrap();
        let dt = eps / 20.0;
        let n = (1.0 / dt).round() as usize;
        let cfg = VpRunConfig {
            t_end: n as f64 * dt,
            dt,
            snapshot_every: 0,
            probe_index: 16,
        };
        let traj = run_vp(&f0, &cfg).unwrap();
        let sup = traj.sup_density.iter().fold(0.0f64, |m, &z| m.max(z));
        fitted.push(sup);
    }
    eprintln!("fitted density constants: {fitted:?}");
    // Measured: [1.100, 1.053, 1.026] — the initial sup 1 + 0.5ε, barely
    // amplified by the dynamics.
    let hi = fitted.iter().fold(0.0f64, |m, &z| m.max(z));
    let lo = fitted.iter().fold(f64::INFINITY, |m, &z| m.min(z));
    assert!(hi <= 1.5, "density sup {hi:.3} left the O(1) band");
    assert!(
        hi / lo <= 1.15,
        "fitted constants spread {:.3} over the sweep ({fitted:?})",
        hi / lo
    );
}
