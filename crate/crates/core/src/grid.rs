//! Shared grid utilities: FFT plumbing on periodic grids, torus wrapping,
//! uniform-grid interpolation, and quadrature.
//!
//! Conventions used across the crate:
//! * spatial grids are node-centered, x_i = -1/2 + i·dx, dx = 1/M, i = 0..M-1;
//! * DFT index `idx` carries integer frequency `freq(idx, M)` in
//!   {-M/2, ..., M/2-1} (for even M the unpaired Nyquist mode is -M/2);
//! * continuous Fourier coefficients ĝ(k) = ∫ g e^{-2πikx} dx relate to the
//!   DFT by ĝ(k) ≈ dx·(-1)^k·X_k because of the -1/2 grid origin. Circular
//!   convolutions by a mode multiplier are insensitive to that phase, so
//!   convolution helpers below work directly on DFT data.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::CoreError;
use crate::Result;

/// Forward/inverse plans for one transform size.
pub struct FftCache {
    pub size: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl FftCache {
    pub fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftCache {
            size,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.size);
        self.fwd.process(buf);
    }

    /// Inverse transform including the 1/M normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.size);
        self.inv.process(buf);
        let scale = 1.0 / self.size as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }
}

/// Integer frequency of DFT bin `idx` for transform size `m`.
#[inline]
pub fn freq(idx: usize, m: usize) -> i64 {
    if idx < m.div_ceil(2) {
        idx as i64
    } else {
        idx as i64 - m as i64
    }
}

/// Forward transform of real samples.
pub fn real_to_spectrum(data: &[f64], cache: &FftCache) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    cache.forward(&mut buf);
    buf
}

/// Inverse transform; imaginary residue is the caller's problem to check
/// (for conjugate-symmetric spectra it is rounding noise).
pub fn spectrum_to_real(mut spec: Vec<Complex64>, cache: &FftCache) -> Vec<f64> {
    cache.inverse(&mut spec);
    spec.into_iter().map(|z| z.re).collect()
}

/// Circular convolution by a frequency multiplier: returns
/// IDFT[ mult(k) · DFT[field] ].
pub fn convolve_multiplier(
    field: &[f64],
    cache: &FftCache,
    mult: impl Fn(i64) -> Complex64,
) -> Vec<f64> {
    let mut spec = real_to_spectrum(field, cache);
    let m = field.len();
    for (idx, z) in spec.iter_mut().enumerate() {
        *z *= mult(freq(idx, m));
    }
    spectrum_to_real(spec, cache)
}

/// In-place n-dimensional FFT on row-major data with equal-extent axes.
pub fn fftn(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    let total: usize = dims.iter().product();
    assert_eq!(data.len(), total);
    let mut planner = FftPlanner::new();
    for (axis, &m) in dims.iter().enumerate() {
        let plan = if inverse {
            planner.plan_fft_inverse(m)
        } else {
            planner.plan_fft_forward(m)
        };
        // stride of this axis in row-major layout
        let stride: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        for o in 0..outer {
            for s in 0..stride {
                let base = o * m * stride + s;
                for (j, l) in line.iter_mut().enumerate() {
                    *l = data[base + j * stride];
                }
                plan.process(&mut line);
                for (j, l) in line.iter().enumerate() {
                    data[base + j * stride] = *l;
                }
            }
        }
    }
    if inverse {
        let scale = 1.0 / total as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }
}

/// Wrap a coordinate into the fundamental domain [-1/2, 1/2).
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let mut y = x - x.round();
    if y >= 0.5 {
        y -= 1.0;
    }
    if y < -0.5 {
        y += 1.0;
    }
    y
}

/// Shortest signed displacement a-b on the torus (geodesic convention).
#[inline]
pub fn torus_delta(a: f64, b: f64) -> f64 {
    wrap_unit(a - b)
}

/// Cubic Lagrange weights for interpolation at fractional offset t ∈ [0,1)
/// between the middle pair of a 4-point stencil (p_{-1}, p_0, p_1, p_2).
#[inline]
pub fn cubic_weights(t: f64) -> [f64; 4] {
    let t1 = t - 1.0;
    let t2 = t - 2.0;
    [
        -t * t1 * t2 / 6.0,
        (t + 1.0) * t1 * t2 / 2.0,
        -t * (t + 1.0) * t2 / 2.0,
        t * (t + 1.0) * t1 / 6.0,
    ]
}

/// Shift periodic samples by `shift` grid cells: out[i] = f(i - shift),
/// cubic Lagrange interpolation. Exact for shifts that are whole cells.
pub fn periodic_shift_cubic(src: &[f64], shift: f64, out: &mut [f64]) {
    let m = src.len() as i64;
    debug_assert_eq!(out.len(), src.len());
    let base_f = (-shift).floor();
    let t = -shift - base_f;
    let base = base_f as i64;
    if t == 0.0 {
        // whole-cell shift: pure index rotation, no interpolation error
        for (i, o) in out.iter_mut().enumerate() {
            let idx = (i as i64 + base).rem_euclid(m) as usize;
            *o = src[idx];
        }
        return;
    }
    let w = cubic_weights(t);
    for (i, o) in out.iter_mut().enumerate() {
        let i0 = i as i64 + base;
        let a = src[(i0 - 1).rem_euclid(m) as usize];
        let b = src[i0.rem_euclid(m) as usize];
        let c = src[(i0 + 1).rem_euclid(m) as usize];
        let d = src[(i0 + 2).rem_euclid(m) as usize];
        *o = w[0] * a + w[1] * b + w[2] * c + w[3] * d;
    }
}

/// Sample periodic grid data at fractional index `pos` (any real, wrapped)
/// with cubic Lagrange interpolation.
pub fn sample_periodic_cubic(src: &[f64], pos: f64) -> f64 {
    let m = src.len() as i64;
    let i0 = pos.floor() as i64;
    let t = pos - i0 as f64;
    let w = cubic_weights(t);
    let mut acc = 0.0;
    for (off, wk) in w.iter().enumerate() {
        let idx = (i0 - 1 + off as i64).rem_euclid(m) as usize;
        acc += wk * src[idx];
    }
    acc
}

/// Sample non-periodic grid data at fractional index `pos` with cubic
/// Lagrange interpolation; the function is treated as zero outside the grid
/// (clamped ends — valid because mass is kept away from the v-boundary).
pub fn sample_clamped_cubic(src: &[f64], pos: f64) -> f64 {
    let n = src.len() as i64;
    if !(-1.0..=(n as f64)).contains(&pos) {
        return 0.0;
    }
    let i0 = pos.floor() as i64;
    let t = pos - i0 as f64;
    let w = cubic_weights(t);
    let mut acc = 0.0;
    for (off, wk) in w.iter().enumerate() {
        let idx = i0 - 1 + off as i64;
        if (0..n).contains(&idx) {
            acc += wk * src[idx as usize];
        }
    }
    acc
}

/// Composite Simpson on uniform samples over [a, b]; n_intervals must be even.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n_intervals: usize) -> f64 {
    assert!(n_intervals >= 2 && n_intervals % 2 == 0);
    let h = (b - a) / n_intervals as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n_intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Check every entry is finite; `what` names the array in the error.
pub fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(CoreError::non_finite(format!(
                "{what}[{i}] = {v}"
            )));
        }
    }
    Ok(())
}
