//! The regularized N-particle system: seeded sampling from named initial
//! densities, force evaluation (pairwise, particle-in-cell, and truncated
//! Fourier), symplectic stepping, and the regularized interaction energy.
//!
//! Layout: particle-major flattening, `state[i * d + a]` is component `a` of
//! particle `i`. Positions live on the torus and are wrapped to [-1/2, 1/2)^d
//! after every update; velocities are unconstrained reals.
//!
//! Three force paths evaluate (approximations of) the same pair sum
//! a_i = (1/N) Σ_{j≠i} ε^{-2}(χ_r∗χ_r∗K)(x_i − x_j):
//!
//! * [`force_direct`] — O(N²) over pairs, kernel-table interpolation (exact
//!   1D closed form when r = 0). Reference path for cross-validation.
//! * [`force_pic`] — deposit / spectral solve / gather on the table grid,
//!   O(N + M^d log M). Production path for large N.
//! * [`SpectralForce`] — truncated Fourier sum with grid-free χ̂ quadrature.
//!   This one is the exact gradient of a computable Hamiltonian
//!   ([`SpectralForce::energy`]), so leapfrog drift against that energy is
//!   pure O(dt²) with no interpolation noise floor; used by the energy
//!   conservation diagnostics.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::CoreError;
use crate::grid::{fftn, wrap_unit};
use crate::Result;
use crate::kernels::{bump_radial, green_kernel_1d, KernelTable, MollifierSpec, MAX_R};
use crate::transport::WeightedPointCloud;

use std::f64::consts::PI;

/// Physical and size parameters shared by an ensemble and its kernel tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleParams {
    pub dim: usize,
    pub n: usize,
    pub eps: f64,
    /// Mollification radius; 0 means the unregularized system.
    pub r: f64,
}

impl EnsembleParams {
    pub fn new(dim: usize, n: usize, eps: f64, r: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(CoreError::domain(format!(
                "dimension d = {dim}, expected 1..=3"
            )));
        }
        if n == 0 {
            return Err(CoreError::domain("ensemble needs N >= 1 particles"));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(CoreError::domain(format!("eps = {eps}, expected eps > 0")));
        }
        if !(0.0..MAX_R).contains(&r) {
            return Err(CoreError::domain(format!(
                "mollifier radius r = {r}, expected 0 <= r < {MAX_R}"
            )));
        }
        Ok(EnsembleParams { dim, n, eps, r })
    }
}

/// Positions and velocities of N particles on T^d × R^d at a given time.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub params: EnsembleParams,
    /// Particle-major positions in [-1/2, 1/2)^d, length N·d.
    pub positions: Vec<f64>,
    /// Particle-major velocities, length N·d.
    pub velocities: Vec<f64>,
    pub time: f64,
    /// How the ensemble was produced (sampler family, seed), for run records.
    pub provenance: Option<String>,
}

impl ParticleEnsemble {
    pub fn new(params: EnsembleParams, positions: Vec<f64>, velocities: Vec<f64>) -> Result<Self> {
        let len = params.n * params.dim;
        if positions.len() != len || velocities.len() != len {
            return Err(CoreError::mismatch(format!(
                "state length {} / {} does not match N·d = {len}",
                positions.len(),
                velocities.len()
            )));
        }
        let mut ens = ParticleEnsemble {
            params,
            positions,
            velocities,
            time: 0.0,
            provenance: None,
        };
        ens.wrap_positions();
        ens.check_finite()?;
        Ok(ens)
    }

    /// Wrap every position component into the fundamental domain.
    pub fn wrap_positions(&mut self) {
        for x in self.positions.iter_mut() {
            *x = wrap_unit(*x);
        }
    }

    /// Error naming the first particle with a non-finite component.
    pub fn check_finite(&self) -> Result<()> {
        let d = self.params.dim;
        for (slot, (x, v)) in self
            .positions
            .iter()
            .zip(self.velocities.iter())
            .enumerate()
        {
            if !(x.is_finite() && v.is_finite()) {
                return Err(CoreError::non_finite(format!(
                    "particle {} at t = {} (x = {x}, v = {v})",
                    slot / d,
                    self.time
                )));
            }
        }
        if !self.time.is_finite() {
            return Err(CoreError::non_finite(format!("time = {}", self.time)));
        }
        Ok(())
    }

    /// Total momentum Σ_i v_i, one entry per component.
    pub fn total_momentum(&self) -> Vec<f64> {
        let d = self.params.dim;
        let mut p = vec![0.0; d];
        for chunk in self.velocities.chunks_exact(d) {
            for (a, v) in chunk.iter().enumerate() {
                p[a] += v;
            }
        }
        p
    }

    /// Empirical measure on T^d × R^d as a uniformly weighted cloud
    /// (interleaved x then v per atom), ready for the transport metrics.
    pub fn phase_cloud(&self) -> Result<WeightedPointCloud> {
        let d = self.params.dim;
        let mut pts = Vec::with_capacity(self.params.n * 2 * d);
        for i in 0..self.params.n {
            pts.extend_from_slice(&self.positions[i * d..(i + 1) * d]);
            pts.extend_from_slice(&self.velocities[i * d..(i + 1) * d]);
        }
        WeightedPointCloud::phase_uniform(d, pts)
    }

    /// Spatial marginal of the empirical measure.
    pub fn spatial_cloud(&self) -> Result<WeightedPointCloud> {
        WeightedPointCloud::spatial_uniform(self.params.dim, self.positions.clone())
    }
}

// ---------------------------------------------------------------------------
// Initial sampling
// ---------------------------------------------------------------------------

/// Named initial phase-space densities with implementable samplers. All
/// spatial families modulate the first axis only; the remaining axes are
/// uniform on the torus.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDensity {
    /// Uniform on T^d × [-1/2, 1/2]^d.
    Uniform,
    /// Spatial density 1 + a·cos(2πx₁); every velocity exactly v0.
    Monokinetic { a: f64, v0: Vec<f64> },
    /// Spatial density 1 + a·cos(2πx₁); velocity v0 + v_width·U with U drawn
    /// from the normalized radial bump profile on the unit ball.
    PerturbedBump { a: f64, v0: Vec<f64>, v_width: f64 },
}

impl InitialDensity {
    fn cos_amplitude(&self) -> f64 {
        match self {
            InitialDensity::Uniform => 0.0,
            InitialDensity::Monokinetic { a, .. } | InitialDensity::PerturbedBump { a, .. } => *a,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let a = self.cos_amplitude();
        if !(a.is_finite() && a.abs() < 1.0) {
            return Err(CoreError::domain(format!(
                "spatial perturbation a = {a}, expected |a| < 1 so the density stays positive"
            )));
        }
        let v0 = match self {
            InitialDensity::Uniform => None,
            InitialDensity::Monokinetic { v0, .. } => Some(v0),
            InitialDensity::PerturbedBump { v0, v_width, .. } => {
                if !(v_width.is_finite() && *v_width > 0.0) {
                    return Err(CoreError::domain(format!(
                        "velocity bump width {v_width}, expected > 0"
                    )));
                }
                Some(v0)
            }
        };
        if let Some(v0) = v0 {
            if v0.len() != dim {
                return Err(CoreError::mismatch(format!(
                    "v0 has {} components, ensemble dimension is {dim}",
                    v0.len()
                )));
            }
            if v0.iter().any(|c| !c.is_finite()) {
                return Err(CoreError::non_finite("v0 in initial density spec"));
            }
        }
        Ok(())
    }
}

/// How to draw from the spec'd density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleMode {
    /// Inverse-CDF transforms; one uniform consumed per coordinate.
    InverseCdf,
    /// Accept/reject under `envelope_scale` × (sup of the target density).
    /// Scales below 1 do not dominate the density and are rejected; large
    /// scales waste proposals and trip the efficiency guard.
    Rejection { envelope_scale: f64 },
}

/// Realized acceptance rate below this aborts with a sampler error.
pub const MIN_SAMPLER_EFFICIENCY: f64 = 0.02;

/// Hard cap on proposals for a single accepted draw.
const MAX_ATTEMPTS_PER_DRAW: usize = 50_000;

/// Draw N i.i.d. phase-space samples from `f0`. Deterministic in `seed`
/// (single fixed-order ChaCha stream).
pub fn sample_initial(
    f0: &InitialDensity,
    params: EnsembleParams,
    seed: u64,
) -> Result<ParticleEnsemble> {
    sample_initial_with(f0, params, seed, SampleMode::InverseCdf)
}

pub fn sample_initial_with(
    f0: &InitialDensity,
    params: EnsembleParams,
    seed: u64,
    mode: SampleMode,
) -> Result<ParticleEnsemble> {
    f0.validate(params.dim)?;
    if let SampleMode::Rejection { envelope_scale } = mode {
        if !(envelope_scale >= 1.0 && envelope_scale.is_finite()) {
            return Err(CoreError::domain(format!(
                "envelope_scale = {envelope_scale}: an envelope below the density sup (scale < 1) \
                 does not dominate the target"
            )));
        }
    }
    let d = params.dim;
    let n = params.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = RejectionTally::default();

    let mut positions = Vec::with_capacity(n * d);
    let mut velocities = Vec::with_capacity(n * d);
    let a = f0.cos_amplitude();
    let radial = match f0 {
        InitialDensity::PerturbedBump { .. } => Some(BumpRadialCdf::new(d)),
        _ => None,
    };

    for _ in 0..n {
        // first spatial axis carries the cosine perturbation
        positions.push(draw_cos_perturbed(a, &mut rng, mode, &mut tally)?);
        for _ in 1..d {
            positions.push(rng.random::<f64>() - 0.5);
        }
        match f0 {
            InitialDensity::Uniform => {
                for _ in 0..d {
                    velocities.push(rng.random::<f64>() - 0.5);
                }
            }
            InitialDensity::Monokinetic { v0, .. } => velocities.extend_from_slice(v0),
            InitialDensity::PerturbedBump { v0, v_width, .. } => {
                let table = radial.as_ref().unwrap();
                let s = table.draw_radius(&mut rng, mode, &mut tally)?;
                let dir = draw_direction(d, &mut rng);
                for (c, u) in v0.iter().zip(dir.iter()) {
                    velocities.push(c + v_width * s * u);
                }
            }
        }
    }
    tally.check()?;

    let mut ens = ParticleEnsemble::new(params, positions, velocities)?;
    ens.provenance = Some(format!("{f0:?}; seed = {seed}; mode = {mode:?}"));
    Ok(ens)
}

#[derive(Default)]
struct RejectionTally {
    proposed: usize,
    accepted: usize,
}

impl RejectionTally {
    fn check(&self) -> Result<()> {
        // only meaningful once the rejection path actually ran a while
        if self.proposed >= 1000 {
            let eff = self.accepted as f64 / self.proposed as f64;
            if eff < MIN_SAMPLER_EFFICIENCY {
                return Err(CoreError::SamplerEfficiency {
                    efficiency: eff,
                    threshold: MIN_SAMPLER_EFFICIENCY,
                    hint: "shrink envelope_scale toward 1 or use the inverse-CDF mode".into(),
                });
            }
        }
        Ok(())
    }
}

/// Sample x ∈ [-1/2, 1/2) with density 1 + a·cos(2πx).
fn draw_cos_perturbed(
    a: f64,
    rng: &mut ChaCha8Rng,
    mode: SampleMode,
    tally: &mut RejectionTally,
) -> Result<f64> {
    if a == 0.0 {
        return Ok(rng.random::<f64>() - 0.5);
    }
    match mode {
        SampleMode::InverseCdf => {
            let u = rng.random::<f64>();
            Ok(invert_cos_cdf(a, u))
        }
        SampleMode::Rejection { envelope_scale } => {
            let env = envelope_scale * (1.0 + a.abs());
            for attempt in 0..MAX_ATTEMPTS_PER_DRAW {
                tally.proposed += 1;
                let x = rng.random::<f64>() - 0.5;
                let height = env * rng.random::<f64>();
                if height <= 1.0 + a * (2.0 * PI * x).cos() {
                    tally.accepted += 1;
                    return Ok(x);
                }
                if attempt % 1000 == 999 {
                    tally.check()?;
                }
            }
            Err(CoreError::SamplerEfficiency {
                efficiency: 0.0,
                threshold: MIN_SAMPLER_EFFICIENCY,
                hint: format!("no acceptance in {MAX_ATTEMPTS_PER_DRAW} proposals"),
            })
        }
    }
}

/// Solve F(x) = u for the CDF F(x) = x + 1/2 + a·sin(2πx)/(2π), which is
/// strictly increasing for |a| < 1. Newton with a bisection bracket.
fn invert_cos_cdf(a: f64, u: f64) -> f64 {
    let (mut lo, mut hi) = (-0.5, 0.5);
    let mut x = u - 0.5;
    for _ in 0..80 {
        let f = x + 0.5 + a * (2.0 * PI * x).sin() / (2.0 * PI) - u;
        if f.abs() < 1e-15 {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        x -= f / (1.0 + a * (2.0 * PI * x).cos());
        if !(lo..=hi).contains(&x) {
            x = 0.5 * (lo + hi);
        }
    }
    x.clamp(-0.5, 0.5 - f64::EPSILON)
}

/// Tabulated CDF of the radius density ∝ s^{d-1}·bump(s) on [0, 1].
struct BumpRadialCdf {
    knots: Vec<f64>,
    sup_density: f64,
    mass: f64,
    dim: usize,
}

impl BumpRadialCdf {
    const KNOTS: usize = 2048;

    fn new(dim: usize) -> Self {
        let h = 1.0 / Self::KNOTS as f64;
        let dens = |s: f64| s.powi(dim as i32 - 1) * bump_radial(s);
        let mut knots = vec![0.0; Self::KNOTS + 1];
        let mut sup = 0.0f64;
        for i in 1..=Self::KNOTS {
            let s0 = (i - 1) as f64 * h;
            let s1 = i as f64 * h;
            knots[i] = knots[i - 1] + 0.5 * h * (dens(s0) + dens(s1));
            sup = sup.max(dens(s1));
        }
        let mass = knots[Self::KNOTS];
        for k in knots.iter_mut() {
            *k /= mass;
        }
        BumpRadialCdf {
            knots,
            sup_density: sup.max(dens(0.0)),
            mass,
            dim,
        }
    }

    fn draw_radius(
        &self,
        rng: &mut ChaCha8Rng,
        mode: SampleMode,
        tally: &mut RejectionTally,
    ) -> Result<f64> {
        match mode {
            SampleMode::InverseCdf => {
                let u = rng.random::<f64>();
                // binary search for the bracketing knot, then linear interp
                let idx = self.knots.partition_point(|&c| c < u).max(1);
                let (c0, c1) = (self.knots[idx - 1], self.knots[idx]);
                let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
                Ok(((idx - 1) as f64 + t) / Self::KNOTS as f64)
            }
            SampleMode::Rejection { envelope_scale } => {
                let dens = |s: f64| s.powi(self.dim as i32 - 1) * bump_radial(s);
                let env = envelope_scale * self.sup_density;
                for attempt in 0..MAX_ATTEMPTS_PER_DRAW {
                    tally.proposed += 1;
                    let s = rng.random::<f64>();
                    if env * rng.random::<f64>() <= dens(s) {
                        tally.accepted += 1;
                        return Ok(s);
                    }
                    if attempt % 1000 == 999 {
                        tally.check()?;
                    }
                }
                Err(CoreError::SamplerEfficiency {
                    efficiency: self.mass / env,
                    threshold: MIN_SAMPLER_EFFICIENCY,
                    hint: format!("no acceptance in {MAX_ATTEMPTS_PER_DRAW} proposals"),
                })
            }
        }
    }
}

/// Uniform direction: ±1 in 1D, normalized Gaussian vector otherwise.
fn draw_direction(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if d == 1 {
        return vec![if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 }];
    }
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = g.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return g.iter().map(|c| c / norm).collect();
        }
    }
}

// ---------------------------------------------------------------------------
// Forces
// ---------------------------------------------------------------------------

fn check_table_match(ens: &ParticleEnsemble, table: &KernelTable) -> Result<()> {
    if table.dim != ens.params.dim {
        return Err(CoreError::mismatch(format!(
            "kernel table is {}-dimensional, ensemble is {}-dimensional",
            table.dim, ens.params.dim
        )));
    }
    let rel = (table.eps - ens.params.eps).abs() / ens.params.eps.max(1e-300);
    if rel > 1e-12 {
        return Err(CoreError::mismatch(format!(
            "kernel table eps = {}, ensemble eps = {}",
            table.eps, ens.params.eps
        )));
    }
    let table_r = table.moll.as_ref().map_or(0.0, |m| m.r);
    if (table_r - ens.params.r).abs() > 1e-12 {
        return Err(CoreError::mismatch(format!(
            "kernel table r = {table_r}, ensemble r = {}",
            ens.params.r
        )));
    }
    Ok(())
}

/// Pairwise force sum, interpolated from the kernel table (exact closed-form
/// kernel in the unregularized 1D case). Per-particle sums run in index
/// order, so the result is bitwise reproducible regardless of thread count.
pub fn force_direct(ens: &ParticleEnsemble, table: &KernelTable) -> Result<Vec<f64>> {
    check_table_match(ens, table)?;
    let d = ens.params.dim;
    let n = ens.params.n;
    let closed_form_1d = table.moll.is_none() && d == 1;
    let inv_n = 1.0 / n as f64;
    let eps2_inv = ens.params.eps.powi(-2);
    let positions = &ens.positions;

    let mut acc = vec![0.0; n * d];
    acc.par_chunks_mut(d).enumerate().for_each(|(i, out)| {
        let xi = &positions[i * d..(i + 1) * d];
        let mut delta = [0.0f64; 3];
        let mut t = [0.0f64; 3];
        for j in 0..n {
            if j == i {
                continue;
            }
            for (a, dl) in delta[..d].iter_mut().enumerate() {
                *dl = xi[a] - positions[j * d + a];
            }
            if closed_form_1d {
                let (_, k) = green_kernel_1d(delta[0]);
                out[0] += eps2_inv * k;
            } else {
                table.force_at(&delta[..d], &mut t[..d]);
                for (o, ti) in out.iter_mut().zip(t[..d].iter()) {
                    *o += ti;
                }
            }
        }
        for o in out.iter_mut() {
            *o *= inv_n;
        }
    });
    Ok(acc)
}

/// Charge-deposition scheme shared by [`force_pic`] and
/// [`regularized_energy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepositScheme {
    /// Multilinear (cloud-in-cell) weights; matching gather conserves
    /// momentum exactly and keeps self-forces at rounding level.
    CloudInCell,
    /// Nearest grid point; first-order, kept for resolution studies.
    NearestGridPoint,
}

/// Number density of the ensemble on the table's M^d grid, normalized to
/// mean 1 (so the k = 0 mode carries exactly the background charge).
fn deposit_density(ens: &ParticleEnsemble, m: usize, scheme: DepositScheme) -> Vec<f64> {
    let d = ens.params.dim;
    let total = m.pow(d as u32);
    // each particle carries total weight M^d/N in grid units
    let w_particle = total as f64 / ens.params.n as f64;
    let mut rho = vec![0.0; total];
    let mut i0 = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for xi in ens.positions.chunks_exact(d) {
        for a in 0..d {
            let pos = (xi[a] + 0.5) * m as f64;
            match scheme {
                DepositScheme::CloudInCell => {
                    let f = pos.floor();
                    i0[a] = (f as i64).rem_euclid(m as i64) as usize;
                    frac[a] = pos - f;
                }
                DepositScheme::NearestGridPoint => {
                    i0[a] = (pos.round() as i64).rem_euclid(m as i64) as usize;
                    frac[a] = 0.0;
                }
            }
        }
        for corner in 0..(1usize << d) {
            let mut w = w_particle;
            let mut node = 0usize;
            for a in 0..d {
                let (ix, wa) = if corner & (1 << a) != 0 {
                    ((i0[a] + 1) % m, frac[a])
                } else {
                    (i0[a], 1.0 - frac[a])
                };
                w *= wa;
                node = node * m + ix;
            }
            if w != 0.0 {
                rho[node] += w;
            }
        }
    }
    rho
}

/// Gather a component-major grid field back to the particles with the same
/// interpolation the deposit used.
fn gather_field(field: &[f64], ens: &ParticleEnsemble, m: usize, scheme: DepositScheme) -> Vec<f64> {
    let d = ens.params.dim;
    let total = m.pow(d as u32);
    let mut out = vec![0.0; ens.params.n * d];
    let mut i0 = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for (i, xi) in ens.positions.chunks_exact(d).enumerate() {
        for a in 0..d {
            let pos = (xi[a] + 0.5) * m as f64;
            match scheme {
                DepositScheme::CloudInCell => {
                    let f = pos.floor();
                    i0[a] = (f as i64).rem_euclid(m as i64) as usize;
                    frac[a] = pos - f;
                }
                DepositScheme::NearestGridPoint => {
                    i0[a] = (pos.round() as i64).rem_euclid(m as i64) as usize;
                    frac[a] = 0.0;
                }
            }
        }
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut node = 0usize;
            for a in 0..d {
                let (ix, wa) = if corner & (1 << a) != 0 {
                    ((i0[a] + 1) % m, frac[a])
                } else {
                    (i0[a], 1.0 - frac[a])
                };
                w *= wa;
                node = node * m + ix;
            }
            if w != 0.0 {
                for c in 0..d {
                    out[i * d + c] += w * field[c * total + node];
                }
            }
        }
    }
    out
}

/// Fourier transform of the per-axis assignment window at one DFT index:
/// sinc for nearest-grid-point, sinc² for the cloud-in-cell hat. Used to
/// deconvolve the deposit (and gather) smoothing in the spectral solves.
fn window_hat(scheme: DepositScheme, k: i64, m: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let t = PI * k as f64 / m as f64;
    let s = t.sin() / t;
    match scheme {
        DepositScheme::CloudInCell => s * s,
        DepositScheme::NearestGridPoint => s,
    }
}

fn window_hat_nd(scheme: DepositScheme, d: usize, m: usize, mut idx: usize) -> f64 {
    let mut w = 1.0;
    for _ in 0..d {
        w *= window_hat(scheme, crate::grid::freq(idx % m, m), m);
        idx /= m;
    }
    w
}

/// Particle-in-cell force: deposit the empirical density on the table grid,
/// apply the spectral multiplier ε^{-2}χ̂_r²K̂, gather back. The k = 0 mode
/// has K̂ = 0, so the neutralizing background needs no explicit subtraction.
/// Deposit and gather each attenuate mode k by the assignment window Ŵ(k);
/// the multiplier is divided by Ŵ² to compensate (Ŵ ≥ 2/π per axis on the
/// resolved band, so the correction stays bounded).
pub fn force_pic(
    ens: &ParticleEnsemble,
    table: &KernelTable,
    scheme: DepositScheme,
) -> Result<Vec<f64>> {
    check_table_match(ens, table)?;
    let d = ens.params.dim;
    let m = table.grid_size;
    let total = m.pow(d as u32);
    let dims = vec![m; d];

    let rho = deposit_density(ens, m, scheme);
    let mut spec: Vec<Complex64> = rho.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fftn(&mut spec, &dims, false);
    // note window_hat_nd iterates axis indices from the last axis up; the
    // product over axes makes the order irrelevant
    for (idx, z) in spec.iter_mut().enumerate() {
        let w = window_hat_nd(scheme, d, m, idx);
        *z /= w * w;
    }

    // raw-DFT round trip: the (−1)^{Σk} phases of analysis and synthesis
    // cancel and M^d·dx^d = 1, so continuous multipliers apply directly
    let mut field = vec![0.0; d * total];
    let mut buf = vec![Complex64::new(0.0, 0.0); total];
    for c in 0..d {
        for (idx, b) in buf.iter_mut().enumerate() {
            *b = spec[idx] * table.force_multiplier(c, idx);
        }
        fftn(&mut buf, &dims, true);
        for (idx, b) in buf.iter().enumerate() {
            field[c * total + idx] = b.re;
        }
    }
    Ok(gather_field(&field, ens, m, scheme))
}

/// Truncated Fourier evaluation of the 1D regularized force and its
/// conserved energy. χ̂_r comes from grid-free quadrature, so this path has
/// no grid at all: the force is the exact (minus) gradient of
/// [`SpectralForce::energy`]'s potential term, which makes it the reference
/// dynamics for conservation tests.
#[derive(Debug, Clone)]
pub struct SpectralForce {
    pub eps: f64,
    pub r: f64,
    pub k_max: usize,
    /// χ̂_r(k)² for k = 1..=k_max.
    chi2: Vec<f64>,
}

impl SpectralForce {
    /// Default mode cutoff: χ̂_r(k)² is far below rounding beyond ~6/r.
    pub fn new(eps: f64, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(CoreError::domain(
                "r = 0 has no natural mode cutoff; pick one via with_modes",
            ));
        }
        let k_max = (6.0 / r).ceil() as usize;
        Self::with_modes(eps, r, k_max)
    }

    pub fn with_modes(eps: f64, r: f64, k_max: usize) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(CoreError::domain(format!("eps = {eps}, expected eps > 0")));
        }
        if !(0.0..MAX_R).contains(&r) {
            return Err(CoreError::domain(format!(
                "mollifier radius r = {r}, expected 0 <= r < {MAX_R}"
            )));
        }
        if k_max == 0 {
            return Err(CoreError::domain("k_max must be at least 1"));
        }
        let chi2 = if r == 0.0 {
            vec![1.0; k_max]
        } else {
            let spec = MollifierSpec::new(r)?;
            (1..=k_max)
                .map(|k| {
                    let c = spec.chi_hat_1d(k as i64);
                    c * c
                })
                .collect()
        };
        Ok(SpectralForce { eps, r, k_max, chi2 })
    }

    fn check_ens(&self, ens: &ParticleEnsemble) -> Result<()> {
        if ens.params.dim != 1 {
            return Err(CoreError::NotApplicable(
                "the truncated Fourier force path is 1D only".into(),
            ));
        }
        if (ens.params.eps - self.eps).abs() > 1e-12 * self.eps
            || (ens.params.r - self.r).abs() > 1e-12
        {
            return Err(CoreError::mismatch(format!(
                "spectral force (eps = {}, r = {}) vs ensemble (eps = {}, r = {})",
                self.eps, self.r, ens.params.eps, ens.params.r
            )));
        }
        Ok(())
    }

    /// Empirical Fourier modes ρ̂(k) = (1/N)Σ_j e^{-2πik·x_j}, k = 1..=k_max.
    fn density_modes(&self, positions: &[f64]) -> Vec<Complex64> {
        let n = positions.len();
        let mut modes = vec![Complex64::new(0.0, 0.0); self.k_max];
        for &x in positions {
            let z = Complex64::from_polar(1.0, -2.0 * PI * x);
            let mut p = z;
            for mode in modes.iter_mut() {
                *mode += p;
                p *= z;
            }
        }
        let inv_n = 1.0 / n as f64;
        for mode in modes.iter_mut() {
            *mode *= inv_n;
        }
        modes
    }

    /// a_i = ε^{-2} Σ_{k=1..k_max} χ̂²(k)/(πk) · Im(ρ̂(k) e^{2πik·x_i}).
    pub fn force(&self, ens: &ParticleEnsemble) -> Result<Vec<f64>> {
        self.check_ens(ens)?;
        let modes = self.density_modes(&ens.positions);
        let eps2_inv = self.eps.powi(-2);
        let out: Vec<f64> = ens
            .positions
            .par_iter()
            .map(|&x| {
                let w = Complex64::from_polar(1.0, 2.0 * PI * x);
                let mut q = w;
                let mut f = 0.0;
                for (k0, (&c2, rho)) in self.chi2.iter().zip(modes.iter()).enumerate() {
                    f += c2 / (PI * (k0 + 1) as f64) * (rho * q).im;
                    q *= w;
                }
                eps2_inv * f
            })
            .collect();
        Ok(out)
    }

    /// Conserved energy of the truncated dynamics:
    /// (1/2N)Σ|v_i|² + ε^{-2} Σ_{k≥1} χ̂²(k)/(4π²k²) · |ρ̂(k)|².
    pub fn energy(&self, ens: &ParticleEnsemble) -> Result<EnergyReport> {
        self.check_ens(ens)?;
        let modes = self.density_modes(&ens.positions);
        let mut potential = 0.0;
        for (k0, (&c2, rho)) in self.chi2.iter().zip(modes.iter()).enumerate() {
            let k = (k0 + 1) as f64;
            potential += c2 / (4.0 * PI * PI * k * k) * rho.norm_sqr();
        }
        potential *= self.eps.powi(-2);
        let kinetic = kinetic_energy(ens);
        Ok(EnergyReport {
            kinetic,
            potential,
            total: kinetic + potential,
            time: ens.time,
        })
    }
}

// ---------------------------------------------------------------------------
// Stepping and energy
// ---------------------------------------------------------------------------

/// One kick-drift-kick leapfrog step. `force_fn` is evaluated at the initial
/// and at the drifted positions; it must be a pure function of the ensemble
/// for the step to stay symplectic and reversible.
pub fn step_leapfrog<F>(ens: &mut ParticleEnsemble, dt: f64, mut force_fn: F) -> Result<()>
where
    F: FnMut(&ParticleEnsemble) -> Result<Vec<f64>>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CoreError::TimeStep(format!("dt = {dt}, expected dt > 0")));
    }
    let half = 0.5 * dt;
    let acc = force_fn(ens)?;
    kick(ens, &acc, half)?;
    drift(ens, dt);
    let acc = force_fn(ens)?;
    kick(ens, &acc, half)?;
    ens.time += dt;
    ens.check_finite()
}

/// Run `n_steps` leapfrog steps, reusing the end-of-step force as the next
/// step's opening kick (identical trajectory to repeated [`step_leapfrog`],
/// at one force evaluation per step).
pub fn evolve<F>(ens: &mut ParticleEnsemble, dt: f64, n_steps: usize, mut force_fn: F) -> Result<()>
where
    F: FnMut(&ParticleEnsemble) -> Result<Vec<f64>>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CoreError::TimeStep(format!("dt = {dt}, expected dt > 0")));
    }
    if n_steps == 0 {
        return Ok(());
    }
    let half = 0.5 * dt;
    let mut acc = force_fn(ens)?;
    for _ in 0..n_steps {
        kick(ens, &acc, half)?;
        drift(ens, dt);
        acc = force_fn(ens)?;
        kick(ens, &acc, half)?;
        ens.time += dt;
    }
    ens.check_finite()
}

fn kick(ens: &mut ParticleEnsemble, acc: &[f64], dt: f64) -> Result<()> {
    if acc.len() != ens.velocities.len() {
        return Err(CoreError::mismatch(format!(
            "force has {} entries, state has {}",
            acc.len(),
            ens.velocities.len()
        )));
    }
    for (v, a) in ens.velocities.iter_mut().zip(acc.iter()) {
        *v += a * dt;
    }
    Ok(())
}

fn drift(ens: &mut ParticleEnsemble, dt: f64) {
    for (x, v) in ens.positions.iter_mut().zip(ens.velocities.iter()) {
        *x = wrap_unit(*x + v * dt);
    }
}

/// Energy decomposition at a fixed time; `total` is `kinetic + potential` by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
    pub time: f64,
}

/// Tree summation: splits at the midpoint, so power-of-two runs of equal
/// summands add without rounding (geometric doubling) and the error growth
/// is O(log n) in general.
fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

fn kinetic_energy(ens: &ParticleEnsemble) -> f64 {
    let sq: Vec<f64> = ens.velocities.iter().map(|v| v * v).collect();
    pairwise_sum(&sq) / (2.0 * ens.params.n as f64)
}

/// Regularized energy via spectral quadrature of the deposited density:
/// kinetic (1/2N)Σ|v_i|² plus the mollified Green interaction of (ρ − 1)
/// with itself, ε^{-2}/2 · Σ_{k≠0} (−Ĝ)(k) χ̂_r(k)² |ρ̂(k)|². The density
/// enters squared, so the deposit window is divided out once per factor.
pub fn regularized_energy(
    ens: &ParticleEnsemble,
    table: &KernelTable,
    scheme: DepositScheme,
) -> Result<EnergyReport> {
    check_table_match(ens, table)?;
    let d = ens.params.dim;
    let m = table.grid_size;
    let total_nodes = m.pow(d as u32);
    let dims = vec![m; d];

    let rho = deposit_density(ens, m, scheme);
    let mut spec: Vec<Complex64> = rho.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fftn(&mut spec, &dims, false);

    // continuous coefficients are dx^d·(phase)·DFT; the multiplier is even
    // and real, so only |ρ̂|² = dx^{2d}·|DFT|² enters
    let dx_pow = (1.0 / total_nodes as f64).powi(2);
    let mut potential = 0.0;
    for idx in 0..total_nodes {
        let w = window_hat_nd(scheme, d, m, idx);
        potential += 0.5 * table.energy_multiplier(idx) * spec[idx].norm_sqr() * dx_pow / (w * w);
    }
    let kinetic = kinetic_energy(ens);
    Ok(EnergyReport {
        kinetic,
        potential,
        total: kinetic + potential,
        time: ens.time,
    })
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

/// Streaming CSV export of trajectory snapshots, one row per particle per
/// snapshot: t, i, x components, v components.
pub struct TrajectoryCsvWriter {
    out: std::io::BufWriter<std::fs::File>,
    dim: usize,
}

impl TrajectoryCsvWriter {
    pub fn create(path: &Path, dim: usize) -> Result<Self> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = String::from("t,i");
        for a in 0..dim {
            write!(header, ",x{a}").unwrap();
        }
        for a in 0..dim {
            write!(header, ",v{a}").unwrap();
        }
        writeln!(out, "{header}")?;
        Ok(TrajectoryCsvWriter { out, dim })
    }

    pub fn record(&mut self, ens: &ParticleEnsemble) -> Result<()> {
        let d = self.dim;
        if d != ens.params.dim {
            return Err(CoreError::mismatch("snapshot dimension changed mid-file"));
        }
        for i in 0..ens.params.n {
            let mut row = format!("{:.17e},{i}", ens.time);
            for a in 0..d {
                write!(row, ",{:.17e}", ens.positions[i * d + a]).unwrap();
            }
            for a in 0..d {
                write!(row, ",{:.17e}", ens.velocities[i * d + a]).unwrap();
            }
            writeln!(self.out, "{row}")?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

const TRAJ_MAGIC: &[u8; 4] = b"VPNT";
const TRAJ_VERSION: u32 = 1;

/// Compact binary trajectory: magic, version, d, N header, then per snapshot
/// the time followed by positions and velocities, little-endian f64.
pub struct TrajectoryBinWriter {
    out: std::io::BufWriter<std::fs::File>,
    dim: usize,
    n: usize,
}

impl TrajectoryBinWriter {
    pub fn create(path: &Path, dim: usize, n: usize) -> Result<Self> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(TRAJ_MAGIC)?;
        out.write_all(&TRAJ_VERSION.to_le_bytes())?;
        out.write_all(&(dim as u32).to_le_bytes())?;
        out.write_all(&(n as u64).to_le_bytes())?;
        Ok(TrajectoryBinWriter { out, dim, n })
    }

    pub fn record(&mut self, ens: &ParticleEnsemble) -> Result<()> {
        if ens.params.dim != self.dim || ens.params.n != self.n {
            return Err(CoreError::mismatch("snapshot shape changed mid-file"));
        }
        self.out.write_all(&ens.time.to_le_bytes())?;
        for x in &ens.positions {
            self.out.write_all(&x.to_le_bytes())?;
        }
        for v in &ens.velocities {
            self.out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Energy time series as CSV (t, kinetic, potential, total).
pub fn write_energy_csv(reports: &[EnergyReport], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,kinetic,potential,total")?;
    for r in reports {
        writeln!(
            out,
            "{:.17e},{:.17e},{:.17e},{:.17e}",
            r.time, r.kinetic, r.potential, r.total
        )?;
    }
    out.flush()?;
    Ok(())
}
