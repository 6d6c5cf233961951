//! Long-run dynamics checks for the particle module: symplectic energy
//! behavior against halved-time-step oracles, cross-method force agreement
//! at the documented sizes, and end-to-end determinism.

use vplab_core::kernels::{mollified_force_table, MollifierSpec};
use vplab_core::particles::{
    evolve, force_direct, force_pic, sample_initial, DepositScheme, EnsembleParams,
    InitialDensity, ParticleEnsemble, SpectralForce,
};

/// Largest |E(t) − E(0)| / |E(0)| along a trajectory, sampled every
/// `sample_every` steps. The force and the energy belong to the same
/// truncated-mode Hamiltonian, so what is measured is pure integrator drift.
fn spectral_drift(
    ens0: &ParticleEnsemble,
    spectral: &SpectralForce,
    dt: f64,
    n_steps: usize,
    sample_every: usize,
) -> f64 {
    let mut ens = ens0.clone();
    let e0 = spectral.energy(&ens).unwrap().total;
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < n_steps {
        let chunk = sample_every.min(n_steps - done);
        evolve(&mut ens, dt, chunk, |e| spectral.force(e)).unwrap();
        done += chunk;
        let e = spectral.energy(&ens).unwrap().total;
        worst = worst.max((e - e0).abs() / e0.abs());
    }
    worst
}

#[test]
fn bound_pair_energy_drift_is_second_order() {
    // two particles oscillating about the antipodal equilibrium
    let eps = 0.5;
    let r = 1.0 / 16.0;
    let params = EnsembleParams::new(1, 2, eps, r).unwrap();
    let ens = ParticleEnsemble::new(params, vec![0.2, -0.2], vec![0.0, 0.0]).unwrap();
    let spectral = SpectralForce::new(eps, r).unwrap();

    let dt = 1e-3;
    let drift = spectral_drift(&ens, &spectral, dt, 1000, 20);
    assert!(drift <= 1e-6, "bound-pair drift {drift:.3e} over 10³ steps");

    // halving dt must cut the drift by ~4 (leapfrog is O(dt²));
    // same physical horizon, twice the steps
    let drift_half = spectral_drift(&ens, &spectral, dt / 2.0, 2000, 40);
    let ratio = drift / drift_half;
    assert!(
        (3.5..=4.5).contains(&ratio),
        "drift ratio {ratio} (coarse {drift:.3e}, fine {drift_half:.3e})"
    );
}

#[test]
fn sampled_ensemble_energy_drift_is_second_order() {
    // the standard 1D case: N = 256 bump-sampled particles, T = 1
    let eps = 0.5;
    let r = 1.0 / 32.0;
    let params = EnsembleParams::new(1, 256, eps, r).unwrap();
    let f0 = InitialDensity::PerturbedBump {
        a: 0.5,
        v0: vec![0.0],
        v_width: 0.5,
    };
    let ens = sample_initial(&f0, params, 2024).unwrap();
    let spectral = SpectralForce::new(eps, r).unwrap();

    let dt = 1e-3;
    let drift = spectral_drift(&ens, &spectral, dt, 1000, 25);
    assert!(drift <= 1e-5, "N=256 drift {drift:.3e} over T = 1");

    let drift_half = spectral_drift(&ens, &spectral, dt / 2.0, 2000, 50);
    let ratio = drift / drift_half;
    assert!(
        (3.5..=4.5).contains(&ratio),
        "drift ratio {ratio} (coarse {drift:.3e}, fine {drift_half:.3e})"
    );
}

#[test]
fn direct_and_pic_agree_at_the_largest_documented_size() {
    let eps = 0.5;
    let r = 1.0 / 16.0;
    let params = EnsembleParams::new(1, 512, eps, r).unwrap();
    let f0 = InitialDensity::PerturbedBump {
        a: 0.4,
        v0: vec![0.0],
        v_width: 0.4,
    };
    let ens = sample_initial(&f0, params, 7).unwrap();
    // 16 cells per r keeps both interpolations inside the 1e-3 band
    let table = mollified_force_table(1, 256, eps, Some(MollifierSpec::new(r).unwrap())).unwrap();
    let direct = force_direct(&ens, &table).unwrap();
    let pic = force_pic(&ens, &table, DepositScheme::CloudInCell).unwrap();
    let num: f64 = direct
        .iter()
        .zip(pic.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let den: f64 = direct.iter().map(|a| a * a).sum();
    let rel = (num / den).sqrt();
    assert!(rel <= 1e-3, "relative L² gap {rel} at N = 512");
}

#[test]
fn trajectories_are_reproducible_end_to_end() {
    let eps = 0.5;
    let r = 1.0 / 16.0;
    let params = EnsembleParams::new(1, 128, eps, r).unwrap();
    let f0 = InitialDensity::PerturbedBump {
        a: 0.5,
        v0: vec![0.1],
        v_width: 0.3,
    };
    let spectral = SpectralForce::new(eps, r).unwrap();

    let run = || {
        let mut ens = sample_initial(&f0, params, 314).unwrap();
        evolve(&mut ens, 1e-3, 200, |e| spectral.force(e)).unwrap();
        ens
    };
    let a = run();
    let b = run();
    // same seed, same config: bitwise equality, thread pool or not
    assert_eq!(a.positions, b.positions);
    assert_eq!(a.velocities, b.velocities);
    assert_eq!(a.time, b.time);
}
