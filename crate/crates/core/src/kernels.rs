//! Torus Green/force kernels and their mollified spectral tables.
//!
//! The Green function solves ΔG = δ_0 − 1 on T^d (zero mean) and the force
//! kernel is K = ∇G with the convention K(0) = 0 (no self-interaction). In
//! d = 1 both have closed forms on the fundamental domain [-1/2, 1/2):
//!
//! ```text
//!   G(x) = -x²/2 + |x|/2 - 1/12,       K(x) = -x + sign(x)/2.
//! ```
//!
//! Fourier side (continuous convention ĝ(k) = ∫ g e^{-2πik·x} dx):
//! Ĝ(k) = -1/(4π²|k|²) for k ≠ 0, Ĝ(0) = 0, K̂(k) = 2πi k Ĝ(k).
//!
//! The regularized force kernel is ε^{-2} χ_r ∗ χ_r ∗ K where χ_r(x) =
//! r^{-d} χ(x/r) and χ is the standard mass-one bump supported on the unit
//! ball. Tables are built spectrally: multiply K̂(k) by χ̂_r(k)² and
//! inverse-transform; χ̂_r comes from the FFT of the grid-sampled mollifier,
//! normalized so the grid mass is exactly one (hence χ̂_r(0) = 1 exactly).

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::CoreError;
use crate::grid::{fftn, freq, simpson};
use crate::Result;

/// Fewest grid cells across the mollifier radius we accept.
pub const MIN_CELLS_PER_R: usize = 8;

/// Largest admissible mollifier radius: the double mollification χ_r ∗ χ_r
/// has support 2r, which must fit well inside the fundamental domain.
pub const MAX_R: f64 = 0.25;

/// Closed-form 1D Green function of ΔG = δ_0 − 1 (zero mean) and its
/// derivative K = ∇G, both evaluated on the fundamental domain.
/// The input is wrapped; K(0) = 0 by the self-interaction convention.
pub fn green_kernel_1d(x: f64) -> (f64, f64) {
    let y = crate::grid::wrap_unit(x);
    let g = -y * y / 2.0 + y.abs() / 2.0 - 1.0 / 12.0;
    let k = if y == 0.0 {
        0.0
    } else {
        -y + 0.5 * y.signum()
    };
    (g, k)
}

/// Unnormalized radial bump profile exp(-1/(1-s²)) on |s| < 1.
#[inline]
pub fn bump_radial(s: f64) -> f64 {
    let s2 = s * s;
    if s2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s2)).exp()
    }
}

/// Normalization constant c_d = ∫_{B_d} exp(-1/(1-|x|²)) dx, so that
/// χ(x) = bump(|x|)/c_d has mass one.
pub fn bump_normalization(d: usize) -> f64 {
    static CACHE: OnceLock<[f64; 3]> = OnceLock::new();
    let c = CACHE.get_or_init(|| {
        let c1 = simpson(bump_radial, -1.0, 1.0, 4096);
        let c2 = 2.0 * PI * simpson(|s| bump_radial(s) * s, 0.0, 1.0, 4096);
        let c3 = 4.0 * PI * simpson(|s| bump_radial(s) * s * s, 0.0, 1.0, 4096);
        [c1, c2, c3]
    });
    assert!((1..=3).contains(&d), "bump_normalization: d = {d}");
    c[d - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MollifierProfile {
    /// exp(-1/(1-|x|²)) on the unit ball, normalized to mass one.
    StandardBump,
}

/// A mollifier χ_r: radius plus profile. Radius must satisfy 0 < r < 1/4.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MollifierSpec {
    pub r: f64,
    pub profile: MollifierProfile,
}

impl MollifierSpec {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0 && r < MAX_R) {
            return Err(CoreError::domain(format!(
                "mollifier radius r = {r} outside (0, {MAX_R}): the doubly-mollified support 2r must fit inside the fundamental domain"
            )));
        }
        Ok(MollifierSpec {
            r,
            profile: MollifierProfile::StandardBump,
        })
    }

    /// χ_r(y) = r^{-d} χ(y/r), zero outside |y| < r.
    pub fn density(&self, d: usize, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), d);
        let s2: f64 = y.iter().map(|c| (c / self.r) * (c / self.r)).sum();
        if s2 >= 1.0 {
            return 0.0;
        }
        bump_radial(s2.sqrt()) / (bump_normalization(d) * self.r.powi(d as i32))
    }

    /// χ̂_r(k) for scalar integer frequency k in d = 1, by direct quadrature
    /// of ∫ χ(u) cos(2πkr·u) du (grid-free; used by the spectral force path).
    pub fn chi_hat_1d(&self, k: i64) -> f64 {
        let theta = 2.0 * PI * (k as f64) * self.r;
        let c1 = bump_normalization(1);
        simpson(|u| bump_radial(u) * (theta * u).cos(), -1.0, 1.0, 2048) / c1
    }
}

/// Fourier data of the bare kernel pair (Ĝ, K̂) on an M^d mode grid in DFT
/// order. For even M the unpaired Nyquist rows get K̂ = 0 so that the odd
/// symmetry K̂(−k) = −conj K̂(k) holds exactly on the grid.
#[derive(Debug, Clone)]
pub struct KernelFourier {
    pub dim: usize,
    pub grid_size: usize,
    /// Ĝ(k) = −1/(4π²|k|²), Ĝ(0) = 0; length M^d, DFT order.
    pub g_hat: Vec<f64>,
    /// K̂_c(k) = 2πi k_c Ĝ(k); component-major, length d·M^d.
    pub k_hat: Vec<Complex64>,
}

fn check_grid(d: usize, m: usize) -> Result<()> {
    if !(1..=3).contains(&d) {
        return Err(CoreError::domain(format!("dimension d = {d}, expected 1..=3")));
    }
    if m < 4 || m % 2 != 0 {
        return Err(CoreError::domain(format!(
            "grid_size M = {m}: tables assume even grids with M >= 4"
        )));
    }
    Ok(())
}

/// Iterate DFT mode vectors of the M^d grid in row-major order.
fn mode_freqs(d: usize, m: usize, idx: usize) -> [i64; 3] {
    let mut out = [0i64; 3];
    let mut rest = idx;
    for a in (0..d).rev() {
        out[a] = freq(rest % m, m);
        rest /= m;
    }
    out
}

pub fn kernel_fourier(d: usize, m: usize) -> Result<KernelFourier> {
    check_grid(d, m)?;
    let total = m.pow(d as u32);
    let mut g_hat = vec![0.0; total];
    let mut k_hat = vec![Complex64::new(0.0, 0.0); d * total];
    let nyquist = -(m as i64) / 2;
    for idx in 0..total {
        let k = mode_freqs(d, m, idx);
        let k2: f64 = (0..d).map(|a| (k[a] * k[a]) as f64).sum();
        if k2 == 0.0 {
            continue;
        }
        let g = -1.0 / (4.0 * PI * PI * k2);
        g_hat[idx] = g;
        // Nyquist rows have no mirror mode; forcing K̂ = 0 there keeps the
        // sampled force field real and odd.
        if (0..d).any(|a| k[a] == nyquist) {
            continue;
        }
        for a in 0..d {
            k_hat[a * total + idx] = Complex64::new(0.0, 2.0 * PI * k[a] as f64 * g);
        }
    }
    Ok(KernelFourier {
        dim: d,
        grid_size: m,
        g_hat,
        k_hat,
    })
}

/// Tabulated regularized force kernel ε^{-2} χ_r ∗ χ_r ∗ K on an M^d grid,
/// together with the spectral data used to build it. `moll = None` keeps the
/// bare (unmollified) kernel spectrum; real-space tables are then only
/// meaningful in the Fourier domain (Gibbs), so sampling is refused in d ≥ 2.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub dim: usize,
    pub grid_size: usize,
    pub eps: f64,
    pub moll: Option<MollifierSpec>,
    /// ε^{-2}(χ_r∗χ_r∗K) component-major on grid nodes, length d·M^d.
    pub values: Vec<f64>,
    /// χ̂_r(k) (continuous convention, real; all ones when unmollified).
    pub chi_hat: Vec<f64>,
    /// Bare kernel spectra for field solves and energies.
    pub fourier: KernelFourier,
}

/// Sample χ_r on the M^d grid and return (samples, χ̂ continuous real
/// coefficients with χ̂(0) = 1 exactly).
fn chi_on_grid(d: usize, m: usize, moll: &MollifierSpec) -> (Vec<f64>, Vec<f64>) {
    let total = m.pow(d as u32);
    let dx = 1.0 / m as f64;
    let mut samples = vec![0.0; total];
    let mut coords = [0.0f64; 3];
    for (idx, s) in samples.iter_mut().enumerate() {
        let mut rest = idx;
        for a in (0..d).rev() {
            let i = rest % m;
            rest /= m;
            coords[a] = crate::grid::wrap_unit(-0.5 + i as f64 * dx);
        }
        *s = moll.density(d, &coords[..d]);
    }
    let mass: f64 = samples.iter().sum::<f64>() * dx.powi(d as i32);
    for s in samples.iter_mut() {
        *s /= mass;
    }
    // continuous coefficients: dx^d · (−1)^{Σk} · DFT
    let mut spec: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let dims = vec![m; d];
    fftn(&mut spec, &dims, false);
    let mut chi_hat = vec![0.0; total];
    for idx in 0..total {
        let k = mode_freqs(d, m, idx);
        let parity: i64 = (0..d).map(|a| k[a]).sum();
        let sign = if parity.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let c = spec[idx] * sign * dx.powi(d as i32);
        debug_assert!(c.im.abs() < 1e-10, "χ̂ should be real, got im = {}", c.im);
        chi_hat[idx] = c.re;
    }
    (samples, chi_hat)
}

/// Build the regularized force table. Checks: ε > 0; grid resolves r with at
/// least [`MIN_CELLS_PER_R`] cells; r < 1/4 (via [`MollifierSpec`]).
pub fn mollified_force_table(
    d: usize,
    m: usize,
    eps: f64,
    moll: Option<MollifierSpec>,
) -> Result<KernelTable> {
    check_grid(d, m)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(CoreError::domain(format!("eps = {eps}, expected eps > 0")));
    }
    let total = m.pow(d as u32);
    let fourier = kernel_fourier(d, m)?;
    let chi_hat = match &moll {
        Some(spec) => {
            let cells = (spec.r * m as f64).floor() as usize;
            if cells < MIN_CELLS_PER_R {
                return Err(CoreError::Resolution {
                    what: format!("mollifier radius r = {} on an M = {m} grid", spec.r),
                    needed: (MIN_CELLS_PER_R as f64 / spec.r).ceil() as usize,
                    got: m,
                });
            }
            chi_on_grid(d, m, spec).1
        }
        None => {
            if d > 1 {
                return Err(CoreError::domain(
                    "unmollified (r = 0) real-space tables are only defined in d = 1; \
                     use kernel_fourier for spectral work in d >= 2"
                        .to_string(),
                ));
            }
            vec![1.0; total]
        }
    };

    let eps2_inv = eps.powi(-2);
    let dims = vec![m; d];
    let mut values = vec![0.0; d * total];
    let mut buf = vec![Complex64::new(0.0, 0.0); total];
    for c in 0..d {
        for idx in 0..total {
            let k = mode_freqs(d, m, idx);
            let parity: i64 = (0..d).map(|a| k[a]).sum();
            let sign = if parity.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let coeff = fourier.k_hat[c * total + idx] * (eps2_inv * chi_hat[idx] * chi_hat[idx]);
            // synth phase: samples at x_i = -1/2 + i·dx need (−1)^{Σk}·M^d
            buf[idx] = coeff * (sign * total as f64);
        }
        fftn(&mut buf, &dims, true);
        for idx in 0..total {
            debug_assert!(
                buf[idx].im.abs() < 1e-9,
                "force table must be real, got im = {}",
                buf[idx].im
            );
            values[c * total + idx] = buf[idx].re;
        }
    }
    Ok(KernelTable {
        dim: d,
        grid_size: m,
        eps,
        moll,
        values,
        chi_hat,
        fourier,
    })
}

impl KernelTable {
    /// Node index helpers for row-major M^d layout.
    #[inline]
    fn node(&self, ix: &[usize]) -> usize {
        let m = self.grid_size;
        ix.iter().fold(0usize, |acc, &i| acc * m + i)
    }

    /// Force at a displacement vector (wrapped internally), multilinear
    /// interpolation between grid nodes. `out` receives d components.
    pub fn force_at(&self, delta: &[f64], out: &mut [f64]) {
        debug_assert_eq!(delta.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        let m = self.grid_size;
        let dx = 1.0 / m as f64;
        // fractional grid coordinates of the wrapped displacement
        let mut i0 = [0usize; 3];
        let mut t = [0.0f64; 3];
        for a in 0..self.dim {
            let w = crate::grid::wrap_unit(delta[a]);
            let pos = (w + 0.5) / dx;
            let f = pos.floor();
            i0[a] = (f as i64).rem_euclid(m as i64) as usize;
            t[a] = pos - f;
        }
        let total = m.pow(self.dim as u32);
        for (c, o) in out.iter_mut().enumerate() {
            let base = c * total;
            let mut acc = 0.0;
            // sum over the 2^d corners
            for corner in 0..(1usize << self.dim) {
                let mut w = 1.0;
                let mut ix = [0usize; 3];
                for a in 0..self.dim {
                    if corner & (1 << a) != 0 {
                        w *= t[a];
                        ix[a] = (i0[a] + 1) % m;
                    } else {
                        w *= 1.0 - t[a];
                        ix[a] = i0[a];
                    }
                }
                acc += w * self.values[base + self.node(&ix[..self.dim])];
            }
            *o = acc;
        }
    }

    /// Spectral multiplier for the field solve: ε^{-2} K̂_c(k) χ̂_r(k)².
    pub fn force_multiplier(&self, component: usize, idx: usize) -> Complex64 {
        let total = self.grid_size.pow(self.dim as u32);
        self.fourier.k_hat[component * total + idx]
            * (self.eps.powi(-2) * self.chi_hat[idx] * self.chi_hat[idx])
    }

    /// Spectral multiplier of the mollified interaction energy density:
    /// ε^{-2} (−Ĝ)(k) χ̂_r(k)² ≥ 0.
    pub fn energy_multiplier(&self, idx: usize) -> f64 {
        -self.fourier.g_hat[idx] * self.eps.powi(-2) * self.chi_hat[idx] * self.chi_hat[idx]
    }

    /// Binary export: magic, version, d, M, ε, r, then component-major f64
    /// table values, little-endian.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(b"VPKT")?;
        f.write_all(&1u32.to_le_bytes())?;
        f.write_all(&(self.dim as u32).to_le_bytes())?;
        f.write_all(&(self.grid_size as u64).to_le_bytes())?;
        f.write_all(&self.eps.to_le_bytes())?;
        f.write_all(&self.moll.map_or(0.0, |m| m.r).to_le_bytes())?;
        for v in &self.values {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// CSV export: node coordinates then force components.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let m = self.grid_size;
        let total = m.pow(self.dim as u32);
        let dx = 1.0 / m as f64;
        let coord_hdr: Vec<String> = (0..self.dim).map(|a| format!("x{a}")).collect();
        let val_hdr: Vec<String> = (0..self.dim).map(|a| format!("force{a}")).collect();
        writeln!(f, "{},{}", coord_hdr.join(","), val_hdr.join(","))?;
        for idx in 0..total {
            let mut rest = idx;
            let mut coords = vec![0.0; self.dim];
            for a in (0..self.dim).rev() {
                coords[a] = -0.5 + (rest % m) as f64 * dx;
                rest /= m;
            }
            let cols: Vec<String> = coords.iter().map(|c| format!("{c}")).collect();
            let vals: Vec<String> = (0..self.dim)
                .map(|c| format!("{}", self.values[c * total + idx]))
                .collect();
            writeln!(f, "{},{}", cols.join(","), vals.join(","))?;
        }
        Ok(())
    }
}

/// Measured Lipschitz constant of the singly-mollified field χ_r ∗ K ∗ h:
/// sup over grid nodes of the finite-difference Jacobian magnitude
/// (Frobenius). `density` is h sampled on the table's grid, row-major.
pub fn lipschitz_estimate(table: &KernelTable, density: &[f64]) -> Result<f64> {
    let d = table.dim;
    let m = table.grid_size;
    let total = m.pow(d as u32);
    if density.len() != total {
        return Err(CoreError::mismatch(format!(
            "density has {} samples, table grid has {}",
            density.len(),
            total
        )));
    }
    let dims = vec![m; d];
    let mut h_spec: Vec<Complex64> = density.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fftn(&mut h_spec, &dims, false);

    // field components u_c = IFFT[K̂_c χ̂ ĥ] (single mollification, no ε)
    let mut fields = Vec::with_capacity(d);
    for c in 0..d {
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        for idx in 0..total {
            buf[idx] = h_spec[idx] * table.fourier.k_hat[c * total + idx] * table.chi_hat[idx];
        }
        fftn(&mut buf, &dims, true);
        fields.push(buf.into_iter().map(|z| z.re).collect::<Vec<f64>>());
    }

    // forward differences along each axis, Frobenius magnitude per node
    let dx = 1.0 / m as f64;
    let mut sup = 0.0f64;
    let mut strides = vec![0usize; d];
    for a in 0..d {
        strides[a] = m.pow((d - 1 - a) as u32);
    }
    for idx in 0..total {
        let mut frob = 0.0;
        for &stride in strides.iter() {
            // neighbor along axis a with wraparound
            let i_a = (idx / stride) % m;
            let nb = if i_a + 1 == m {
                idx + stride - m * stride
            } else {
                idx + stride
            };
            for field in &fields {
                let g = (field[nb] - field[idx]) / dx;
                frob += g * g;
            }
        }
        sup = sup.max(frob.sqrt());
    }
    Ok(sup)
}

/// Result of the weighted analytic norm Σ_k |ĝ(k)| δ0^{|k|}.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyticNormReport {
    pub value: f64,
    /// Contribution of the outermost 10% of resolved modes — a truncation
    /// indicator, reported rather than silently dropped.
    pub tail_indicator: f64,
    pub largest_term_mode: i64,
}

/// Weighted analytic norm of a 1D spectrum in DFT order. δ0 ≥ 1. Errors on
/// f64 overflow, naming the offending mode.
pub fn analytic_norm(g_hat: &[Complex64], delta0: f64) -> Result<AnalyticNormReport> {
    if !(delta0 >= 1.0 && delta0.is_finite()) {
        return Err(CoreError::domain(format!(
            "analyticity radius delta0 = {delta0}, expected >= 1"
        )));
    }
    let m = g_hat.len();
    let ln_d = delta0.ln();
    let kmax = (m / 2) as f64;
    let mut value = 0.0f64;
    let mut tail = 0.0f64;
    let mut largest = (0.0f64, 0i64);
    for (idx, z) in g_hat.iter().enumerate() {
        let a = z.norm();
        if a == 0.0 {
            continue;
        }
        let k = freq(idx, m);
        let kk = k.unsigned_abs() as f64;
        // overflow guard before exponentiation
        if a.ln() + kk * ln_d > 700.0 {
            return Err(CoreError::Overflow(format!(
                "term |ĝ({k})| δ0^{} = exp({:.1}) overflows f64; reduce delta0 or truncate",
                k.unsigned_abs(),
                a.ln() + kk * ln_d
            )));
        }
        let term = a * delta0.powf(kk);
        value += term;
        if kk >= 0.9 * kmax {
            tail += term;
        }
        if term > largest.0 {
            largest = (term, k);
        }
    }
    if !value.is_finite() {
        return Err(CoreError::Overflow(
            "analytic norm sum overflowed f64".to_string(),
        ));
    }
    Ok(AnalyticNormReport {
        value,
        tail_indicator: tail,
        largest_term_mode: largest.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn green_closed_form_spot_values() {
        let (_, k) = green_kernel_1d(0.25);
        assert_abs_diff_eq!(k, 0.25, epsilon = 1e-15);
        // K vanishes at the domain edge and at 0 (self-interaction)
        assert_abs_diff_eq!(green_kernel_1d(-0.5).1, 0.0, epsilon = 1e-15);
        assert_eq!(green_kernel_1d(0.0).1, 0.0);
        // G is even, continuous across the wrap, zero mean
        let (g_a, _) = green_kernel_1d(0.3);
        let (g_b, _) = green_kernel_1d(-0.3);
        assert_abs_diff_eq!(g_a, g_b, epsilon = 1e-15);
        let mean = simpson(|x| green_kernel_1d(x).0, -0.5, 0.5, 4096);
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        // G'' = -1 away from 0: check a second difference
        let h = 1e-4;
        let gpp = (green_kernel_1d(0.25 + h).0 - 2.0 * green_kernel_1d(0.25).0
            + green_kernel_1d(0.25 - h).0)
            / (h * h);
        assert_abs_diff_eq!(gpp, -1.0, epsilon = 1e-5);
    }

    #[test]
    fn kernel_fourier_matches_closed_form_modes() {
        let kf = kernel_fourier(1, 64).unwrap();
        assert_eq!(kf.g_hat[0], 0.0);
        assert_abs_diff_eq!(kf.g_hat[1], -1.0 / (4.0 * PI * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(kf.g_hat[3], -1.0 / (36.0 * PI * PI), epsilon = 1e-15);
        // K̂(k) = 2πik Ĝ: purely imaginary, odd
        let k1 = kf.k_hat[1];
        assert_abs_diff_eq!(k1.re, 0.0, epsilon = 1e-18);
        assert_abs_diff_eq!(k1.im, -1.0 / (2.0 * PI), epsilon = 1e-15);
        let km1 = kf.k_hat[63];
        assert_abs_diff_eq!((k1 + km1).norm(), 0.0, epsilon = 1e-18);
        // Nyquist row zeroed
        assert_eq!(kf.k_hat[32], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn kernel_fourier_d2_diagonal_mode() {
        let kf = kernel_fourier(2, 16).unwrap();
        // mode (1,1): Ĝ = −1/(8π²)
        let idx = 16 + 1; // row k0 = 1, col k1 = 1
        assert_abs_diff_eq!(kf.g_hat[idx], -1.0 / (8.0 * PI * PI), epsilon = 1e-15);
    }

    #[test]
    fn mollifier_domain_checks() {
        assert!(MollifierSpec::new(0.3).is_err());
        assert!(MollifierSpec::new(0.0).is_err());
        let spec = MollifierSpec::new(1.0 / 16.0).unwrap();
        // mass one in 1D by quadrature
        let mass = simpson(|x| spec.density(1, &[x]), -0.25, 0.25, 8192);
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-10);
        // under-resolved grid refused
        let err = mollified_force_table(1, 64, 1.0, Some(spec)).unwrap_err();
        assert!(matches!(err, CoreError::Resolution { .. }), "{err}");
    }

    #[test]
    fn chi_hat_grid_and_quadrature_agree() {
        let spec = MollifierSpec::new(1.0 / 16.0).unwrap();
        let table = mollified_force_table(1, 512, 1.0, Some(spec)).unwrap();
        assert_abs_diff_eq!(table.chi_hat[0], 1.0, epsilon = 1e-14);
        for k in [1i64, 3, 8, 20] {
            let grid = table.chi_hat[k as usize];
            let quad = spec.chi_hat_1d(k);
            assert_abs_diff_eq!(grid, quad, epsilon = 1e-6);
        }
        // symmetric in ±k
        assert_abs_diff_eq!(table.chi_hat[5], table.chi_hat[512 - 5], epsilon = 1e-12);
    }

    #[test]
    fn force_table_is_odd_and_zero_mean() {
        let spec = MollifierSpec::new(1.0 / 16.0).unwrap();
        let table = mollified_force_table(1, 256, 0.5, Some(spec)).unwrap();
        let m = table.grid_size;
        let mean: f64 = table.values.iter().sum::<f64>() / m as f64;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        for i in 1..m {
            let v = table.values[i];
            let w = table.values[m - i];
            assert!(
                (v + w).abs() <= 1e-12,
                "odd symmetry violated at node {i}: {v} vs {w}"
            );
        }
        assert_abs_diff_eq!(table.values[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mollification_preserves_kernel_away_from_singularity() {
        // K is linear on (0, 1/2); a symmetric mass-one mollifier reproduces
        // linear functions exactly, so the table matches K where the support
        // stays clear of the kink.
        let spec = MollifierSpec::new(1.0 / 64.0).unwrap();
        let table = mollified_force_table(1, 1024, 1.0, Some(spec)).unwrap();
        let mut out = [0.0];
        table.force_at(&[0.25], &mut out);
        assert_abs_diff_eq!(out[0], 0.25, epsilon = 1e-8);
        table.force_at(&[-0.3], &mut out);
        assert_abs_diff_eq!(out[0], green_kernel_1d(-0.3).1, epsilon = 1e-8);
    }

    #[test]
    fn force_divergence_matches_density_fluctuation() {
        // div(K ∗ h) = h − mean(h) for band-limited h, so the unmollified
        // force multiplier must return (ρ−1)/ε² as its spectral divergence.
        let m = 64;
        let eps = 0.7;
        let table = mollified_force_table(1, m, eps, None).unwrap();
        let a = 0.37;
        let rho_hat_1 = Complex64::new(a / 2.0, 0.0); // ρ = 1 + a·cos(2πx)
        let e_hat_1 = table.force_multiplier(0, 1) * rho_hat_1;
        let div_hat_1 = Complex64::new(0.0, 2.0 * PI) * e_hat_1;
        let want = rho_hat_1 / (eps * eps);
        assert_abs_diff_eq!((div_hat_1 - want).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn force_divergence_d2() {
        let m = 64;
        let table =
            mollified_force_table(2, m, 1.0, Some(MollifierSpec::new(0.2).unwrap())).unwrap();
        let total = m * m;
        // single mode k = (1, 2)
        let idx = m + 2;
        let h_hat = Complex64::new(0.11, -0.07);
        let mut div = Complex64::new(0.0, 0.0);
        for c in 0..2 {
            let kc = if c == 0 { 1.0 } else { 2.0 };
            div += Complex64::new(0.0, 2.0 * PI * kc) * table.fourier.k_hat[c * total + idx] * h_hat;
        }
        assert_abs_diff_eq!((div - h_hat).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lipschitz_is_linear_in_density_amplitude() {
        let spec = MollifierSpec::new(1.0 / 16.0).unwrap();
        let table = mollified_force_table(1, 512, 1.0, Some(spec)).unwrap();
        let m = table.grid_size;
        let h: Vec<f64> = (0..m)
            .map(|i| {
                let x = -0.5 + i as f64 / m as f64;
                1.0 + 0.5 * (2.0 * PI * x).cos() + 0.25 * (6.0 * PI * x).sin()
            })
            .collect();
        let l1 = lipschitz_estimate(&table, &h).unwrap();
        let h2: Vec<f64> = h.iter().map(|x| 2.0 * x).collect();
        let l2 = lipschitz_estimate(&table, &h2).unwrap();
        assert!(l1 > 0.0);
        assert_abs_diff_eq!(l2 / l1, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn analytic_norm_cosine_and_overflow() {
        // ĝ of cos(2πx): coefficients 1/2 at k = ±1
        let m = 16;
        let mut g_hat = vec![Complex64::new(0.0, 0.0); m];
        g_hat[1] = Complex64::new(0.5, 0.0);
        g_hat[m - 1] = Complex64::new(0.5, 0.0);
        let rep = analytic_norm(&g_hat, 2.0).unwrap();
        assert_abs_diff_eq!(rep.value, 2.0, epsilon = 1e-14);
        let rep = analytic_norm(&g_hat, 3.0).unwrap();
        assert_abs_diff_eq!(rep.value, 3.0, epsilon = 1e-14);

        let mut big = vec![Complex64::new(0.0, 0.0); 1024];
        big[400] = Complex64::new(1.0, 0.0);
        let err = analytic_norm(&big, 10.0).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("400"), "error should name the mode: {msg}");
    }

    #[test]
    fn bump_normalizations_are_stable() {
        assert_abs_diff_eq!(bump_normalization(1), 0.443993816168079, epsilon = 1e-12);
        // d = 2, 3 values pinned by a finer independent quadrature
        let c2 = 2.0 * PI * simpson(|s| bump_radial(s) * s, 0.0, 1.0, 16384);
        let c3 = 4.0 * PI * simpson(|s| bump_radial(s) * s * s, 0.0, 1.0, 16384);
        assert_abs_diff_eq!(bump_normalization(2), c2, epsilon = 1e-13);
        assert_abs_diff_eq!(bump_normalization(3), c3, epsilon = 1e-13);
    }
}
