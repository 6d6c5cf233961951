//! Plasma-oscillation correctors: the complex envelope fields d± and the
//! real oscillatory profile R they generate.
//!
//! In the quasineutral regime the distribution rides an O(1) velocity
//! oscillation of frequency 1/ε; d₊ encodes its amplitude and phase,
//! initialized from the field and momentum of the data as
//! d₊(0) = (ε·E(0) + i·j(0)) / 2 and transported by the limit momentum. We
//! store d₊ only and derive d₋ as its conjugate — that is the one reading
//! under which R and the corrected velocities are real.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use num_complex::Complex64;

use crate::error::CoreError;
use crate::grid::{ensure_finite, fftn, freq, sample_periodic_cubic};
use crate::vlasov::{moments, poisson_solve, FieldKind, PhaseSpaceGrid, SpatialField};
use crate::Result;

/// Which clock the oscillation e^{iωt} runs on. The corrector analysis uses
/// ω = 1/ε; a 1/√ε variant appears in a restatement of the same limit and is
/// kept selectable for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OscillationFrequency {
    #[default]
    InverseEps,
    InverseSqrtEps,
}

impl OscillationFrequency {
    pub fn omega(self, eps: f64) -> f64 {
        match self {
            OscillationFrequency::InverseEps => 1.0 / eps,
            OscillationFrequency::InverseSqrtEps => 1.0 / eps.sqrt(),
        }
    }
}

/// Corrector envelope on the 1D x-grid. `d_minus` is not stored: it is the
/// complex conjugate of `d_plus` by construction, which is what keeps R
/// real.
#[derive(Debug, Clone)]
pub struct CorrectorState {
    pub d_plus: Vec<Complex64>,
    /// Momentum of the limit solution; the transport velocity for `d_plus`.
    pub j: SpatialField,
    pub eps: f64,
    pub time: f64,
}

impl CorrectorState {
    pub fn new(d_plus: Vec<Complex64>, j: SpatialField, eps: f64, time: f64) -> Result<Self> {
        if d_plus.len() != j.grid_size() {
            return Err(CoreError::mismatch(format!(
                "corrector envelope on {} nodes, momentum on {}",
                d_plus.len(),
                j.grid_size()
            )));
        }
        if d_plus.len() < 4 {
            return Err(CoreError::domain("corrector grid needs at least 4 nodes"));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(CoreError::domain(format!("eps = {eps}, expected > 0")));
        }
        for z in &d_plus {
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(CoreError::non_finite("corrector envelope"));
            }
        }
        Ok(Self { d_plus, j, eps, time })
    }

    pub fn grid_size(&self) -> usize {
        self.d_plus.len()
    }

    /// The conjugate envelope (materialized on demand).
    pub fn d_minus(&self) -> Vec<Complex64> {
        self.d_plus.iter().map(|z| z.conj()).collect()
    }

    pub fn mean_d_plus(&self) -> Complex64 {
        self.d_plus.iter().sum::<Complex64>() / self.d_plus.len() as f64
    }

    /// CSV export `x,re_d_plus,im_d_plus,r` with R evaluated at time `t`.
    pub fn write_csv(
        &self,
        t: f64,
        freq: OscillationFrequency,
        path: &Path,
    ) -> Result<()> {
        let (r, _) = corrector_r(self, t, freq)?;
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "x,re_d_plus,im_d_plus,r")?;
        let m = self.d_plus.len() as f64;
        for (i, z) in self.d_plus.iter().enumerate() {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e}",
                -0.5 + i as f64 / m,
                z.re,
                z.im,
                r.values[i]
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Initializes the corrector from phase-space data: d₊ = (ε·E + i·j)/2 with
/// E the bare (unmollified) field of the density and j the momentum, both
/// projected to zero mean (E is zero-mean by construction; a drifting frame
/// would otherwise leak a constant into the envelope).
pub fn corrector_init(f0: &PhaseSpaceGrid) -> Result<CorrectorState> {
    let (rho, j, _) = moments(f0);
    let (_, e) = poisson_solve(&rho, f0.eps)?;
    let j_mean = j.mean();
    let d_plus = e
        .values
        .iter()
        .zip(&j.values)
        .map(|(&ei, &ji)| Complex64::new(0.5 * f0.eps * ei, 0.5 * (ji - j_mean)))
        .collect();
    CorrectorState::new(d_plus, j, f0.eps, f0.time)
}

/// The oscillatory profile R(t, x) = (1/i)(d₊ e^{iωt} − d₋ e^{−iωt})
/// = 2·Im(d₊ e^{iωt}), evaluated with absolute time `t`, together with the
/// sup of its (centered-difference) gradient.
pub fn corrector_r(
    state: &CorrectorState,
    t: f64,
    freq: OscillationFrequency,
) -> Result<(SpatialField, f64)> {
    if !t.is_finite() {
        return Err(CoreError::domain(format!("time t = {t} is not finite")));
    }
    let theta = freq.omega(state.eps) * t;
    let (sin_t, cos_t) = theta.sin_cos();
    let values: Vec<f64> = state
        .d_plus
        .iter()
        .map(|z| 2.0 * (z.re * sin_t + z.im * cos_t))
        .collect();
    let m = values.len();
    let dx = 1.0 / m as f64;
    let mut grad_sup = 0.0f64;
    for i in 0..m {
        let grad = (values[(i + 1) % m] - values[(i + m - 1) % m]) / (2.0 * dx);
        grad_sup = grad_sup.max(grad.abs());
    }
    Ok((
        SpatialField { kind: FieldKind::Oscillation, values },
        grad_sup,
    ))
}

/// Transports the envelope by the (stationary) limit momentum:
/// ∂t d + j(x) ∂x d = c(t), the constant c(t) being whatever keeps the mean
/// of d₊ frozen — in 1D "divergence-free right-hand side" means exactly
/// "spatially constant". Semi-Lagrangian with midpoint characteristics and
/// cubic interpolation; returns the state at every step boundary.
pub fn corrector_evolve(
    state: &CorrectorState,
    t_end: f64,
    dt: f64,
) -> Result<Vec<CorrectorState>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CoreError::domain(format!("dt = {dt}, expected > 0")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(CoreError::domain(format!("t_end = {t_end}, expected >= 0")));
    }
    let n_steps = (t_end / dt).round() as usize;
    if (n_steps as f64 * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(CoreError::domain(format!(
            "t_end = {t_end} is not a whole number of steps of dt = {dt}"
        )));
    }
    let m = state.grid_size();
    let dx = 1.0 / m as f64;
    let j = &state.j.values;
    let j_sup = j.iter().fold(0.0f64, |acc, &z| acc.max(z.abs()));
    let cfl = j_sup * dt / dx;
    if cfl > 1.0 + 1e-12 {
        return Err(CoreError::TimeStep(format!(
            "corrector CFL number {cfl:.3} > 1 (|j| up to {j_sup:.3}, dt = {dt}, dx = {dx:.4}); \
             shrink dt"
        )));
    }

    let mean0 = state.mean_d_plus();
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(state.clone());
    let mut re: Vec<f64> = state.d_plus.iter().map(|z| z.re).collect();
    let mut im: Vec<f64> = state.d_plus.iter().map(|z| z.im).collect();
    let mut re_next = vec![0.0; m];
    let mut im_next = vec![0.0; m];

    for step in 1..=n_steps {
        for i in 0..m {
            // midpoint characteristic foot, in index units
            let half = i as f64 - 0.5 * dt * j[i] / dx;
            let j_half = sample_periodic_cubic(j, half);
            let pos = i as f64 - dt * j_half / dx;
            re_next[i] = sample_periodic_cubic(&re, pos);
            im_next[i] = sample_periodic_cubic(&im, pos);
        }
        std::mem::swap(&mut re, &mut re_next);
        std::mem::swap(&mut im, &mut im_next);
        // c(t): restore the mean the transport term cannot change
        let mean_re = re.iter().sum::<f64>() / m as f64;
        let mean_im = im.iter().sum::<f64>() / m as f64;
        for i in 0..m {
            re[i] += mean0.re - mean_re;
            im[i] += mean0.im - mean_im;
        }
        let d_plus: Vec<Complex64> = re
            .iter()
            .zip(&im)
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        ensure_finite(&re, "corrector envelope")?;
        out.push(CorrectorState {
            d_plus,
            j: state.j.clone(),
            eps: state.eps,
            time: state.time + step as f64 * dt,
        });
    }
    Ok(out)
}

// ─── the d ≥ 2 initialization ────────────────────────────────────────────

/// Corrector initialization on a 2D m×m grid (evolution is 1D-only; in
/// higher dimension the lab only checks the curl-free structure).
///
/// The momentum is Helmholtz-projected onto gradient fields before entering
/// the envelope — the corrector construction prescribes the divergence of
/// d±, so only the curl-free part of j is determined by it; unpaired
/// Nyquist rows are dropped to keep the projected field real.
#[derive(Debug, Clone)]
pub struct Corrector2d {
    /// Component-major: [d_x at m² nodes, then d_y].
    pub d_plus: Vec<Complex64>,
    pub grid_size: usize,
    pub eps: f64,
}

impl Corrector2d {
    /// Sup of the spectral curl ∂x d_y − ∂y d_x over the grid, the
    /// violation measure of the curl-free constraint.
    pub fn curl_sup(&self) -> f64 {
        let m = self.grid_size;
        let total = m * m;
        let mut cx: Vec<Complex64> = self.d_plus[..total].to_vec();
        let mut cy: Vec<Complex64> = self.d_plus[total..].to_vec();
        fftn(&mut cx, &[m, m], false);
        fftn(&mut cy, &[m, m], false);
        let mut curl = vec![Complex64::new(0.0, 0.0); total];
        for idx in 0..total {
            let kx = freq(idx / m, m) as f64;
            let ky = freq(idx % m, m) as f64;
            let two_pi_i = Complex64::new(0.0, 2.0 * std::f64::consts::PI);
            curl[idx] = two_pi_i * (kx * cy[idx] - ky * cx[idx]);
        }
        fftn(&mut curl, &[m, m], true);
        curl.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Builds d₊ = (ε·E + i·P j)/2 on the torus T²: E is the bare field of ρ,
/// P the Helmholtz projection onto curl-free fields.
pub fn corrector_init_2d(rho: &[f64], j: &[f64], eps: f64) -> Result<Corrector2d> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(CoreError::domain(format!("eps = {eps}, expected > 0")));
    }
    let total = rho.len();
    let m = (total as f64).sqrt().round() as usize;
    if m * m != total || m < 4 {
        return Err(CoreError::domain(format!(
            "2D corrector needs a square grid with m >= 4, got {total} density nodes"
        )));
    }
    if j.len() != 2 * total {
        return Err(CoreError::mismatch(format!(
            "momentum has {} entries, expected 2·{total} (component-major)",
            j.len()
        )));
    }
    ensure_finite(rho, "density")?;
    ensure_finite(j, "momentum")?;
    let mean = rho.iter().sum::<f64>() / total as f64;
    if (mean - 1.0).abs() > 1e-6 {
        return Err(CoreError::Normalization {
            what: "density mean".into(),
            value: mean,
            expected: 1.0,
            tol: 1e-6,
        });
    }

    let mut rho_hat: Vec<Complex64> = rho.iter().map(|&z| Complex64::new(z, 0.0)).collect();
    let mut jx_hat: Vec<Complex64> = j[..total].iter().map(|&z| Complex64::new(z, 0.0)).collect();
    let mut jy_hat: Vec<Complex64> = j[total..].iter().map(|&z| Complex64::new(z, 0.0)).collect();
    fftn(&mut rho_hat, &[m, m], false);
    fftn(&mut jx_hat, &[m, m], false);
    fftn(&mut jy_hat, &[m, m], false);

    let ie2 = eps.powi(-2);
    let nyq = -(m as i64) / 2;
    let mut dx_hat = vec![Complex64::new(0.0, 0.0); total];
    let mut dy_hat = vec![Complex64::new(0.0, 0.0); total];
    for idx in 0..total {
        let kx = freq(idx / m, m);
        let ky = freq(idx % m, m);
        if (kx == 0 && ky == 0) || kx == nyq || ky == nyq {
            continue;
        }
        let k2 = (kx * kx + ky * ky) as f64;
        // bare field: Ê_c = -2πi k_c ρ̂ /(4π²|k|² ε²)
        let e_mult = |kc: i64| {
            Complex64::new(0.0, -(kc as f64) * ie2 / (2.0 * std::f64::consts::PI * k2))
        };
        // Helmholtz projection of j onto gradients: k (k·ĵ)/|k|²
        let k_dot_j = kx as f64 * jx_hat[idx] + ky as f64 * jy_hat[idx];
        let pjx = kx as f64 * k_dot_j / k2;
        let pjy = ky as f64 * k_dot_j / k2;
        dx_hat[idx] = 0.5 * (eps * e_mult(kx) * rho_hat[idx] + Complex64::i() * pjx);
        dy_hat[idx] = 0.5 * (eps * e_mult(ky) * rho_hat[idx] + Complex64::i() * pjy);
    }
    fftn(&mut dx_hat, &[m, m], true);
    fftn(&mut dy_hat, &[m, m], true);

    // By linearity the inverse transform lands εE/2 in the real part and
    // Pj/2 in the imaginary part (both are real fields with conjugate-
    // symmetric spectra) — exactly the envelope components.
    let d_plus: Vec<Complex64> = dx_hat.into_iter().chain(dy_hat).collect();
    Ok(Corrector2d { d_plus, grid_size: m, eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vlasov::perturbed_bump_grid;
    use std::f64::consts::PI;

    fn zero_momentum(m: usize) -> SpatialField {
        SpatialField::new(FieldKind::Current, vec![0.0; m]).unwrap()
    }

    fn sup_err(values: &[f64], reference: impl Fn(usize) -> f64) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - reference(i)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn homogeneous_data_has_no_corrector() {
        let f0 = perturbed_bump_grid(32, 64, 1.0, 0.1, None, 0.0, 0.0, 0.4).unwrap();
        let state = corrector_init(&f0).unwrap();
        let sup = state
            .d_plus
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(sup <= 1e-14, "flat data produced an envelope of size {sup:.2e}");
        let (r, grad) = corrector_r(&state, 0.37, OscillationFrequency::InverseEps).unwrap();
        assert!(r.values.iter().all(|&v| v.abs() <= 1e-13));
        assert!(grad <= 1e-11);
    }

    #[test]
    fn sinusoidal_field_initializes_the_textbook_envelope() {
        // ρ = 1 + a·cos(2πx) gives ε·E = a·sin(2πx)/(2πε); choosing the
        // density amplitude 2πε·A makes the envelope real part (A/2)·sin.
        let eps = 0.1;
        let amp = 0.5;
        let f0 =
            perturbed_bump_grid(64, 128, 1.0, eps, None, 2.0 * PI * eps * amp, 0.0, 0.4).unwrap();
        let state = corrector_init(&f0).unwrap();
        let m = state.grid_size() as f64;
        let re_err = state
            .d_plus
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let x = -0.5 + i as f64 / m;
                (z.re - 0.5 * amp * (2.0 * PI * x).sin()).abs()
            })
            .fold(0.0, f64::max);
        assert!(re_err <= 1e-10, "field part off by {re_err:.2e}");
        // centered velocity profile carries no current
        let im_sup = state.d_plus.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        assert!(im_sup <= 1e-14, "spurious momentum part {im_sup:.2e}");
        // the conjugate pairing is what keeps R real
        for (dp, dm) in state.d_plus.iter().zip(state.d_minus()) {
            assert_eq!(dp.conj(), dm);
        }
    }

    #[test]
    fn off_mean_density_is_rejected_at_init() {
        let mut f0 = perturbed_bump_grid(32, 64, 1.0, 0.1, None, 0.2, 0.0, 0.4).unwrap();
        f0.f *= 1.01;
        let err = corrector_init(&f0).unwrap_err();
        assert!(matches!(err, CoreError::Normalization { .. }), "got {err}");
    }

    #[test]
    fn zero_momentum_freezes_the_envelope() {
        let m = 48;
        let d0: Vec<Complex64> = (0..m)
            .map(|i| {
                let x = -0.5 + i as f64 / m as f64;
                Complex64::new((2.0 * PI * x).sin(), 0.3 * (4.0 * PI * x).cos())
            })
            .collect();
        let state = CorrectorState::new(d0.clone(), zero_momentum(m), 0.2, 0.0).unwrap();
        let steps = corrector_evolve(&state, 0.5, 0.01).unwrap();
        assert_eq!(steps.len(), 51);
        // the characteristic foot is the node itself, so the cubic weights
        // collapse to the identity and every step is bitwise stationary
        for s in &steps {
            assert_eq!(s.d_plus, d0);
        }
        assert!((steps.last().unwrap().time - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn constant_momentum_translates_the_envelope() {
        let m = 64;
        let d0: Vec<Complex64> = (0..m)
            .map(|i| {
                let x = -0.5 + i as f64 / m as f64;
                Complex64::new((2.0 * PI * x).sin(), 0.0)
            })
            .collect();
        let j = SpatialField::new(FieldKind::Current, vec![0.3; m]).unwrap();
        let state = CorrectorState::new(d0, j, 0.5, 0.0).unwrap();
        let steps = corrector_evolve(&state, 0.5, 0.01).unwrap();
        let last = steps.last().unwrap();
        let re: Vec<f64> = last.d_plus.iter().map(|z| z.re).collect();
        let err = sup_err(&re, |i| {
            let x = -0.5 + i as f64 / m as f64;
            (2.0 * PI * (x - 0.15)).sin()
        });
        // cubic transport of a mode-1 sine on 64 nodes, 50 fractional-cell
        // steps: measured 6.5e-5
        assert!(err <= 1e-4, "translated profile off by {err:.2e}");
    }

    #[test]
    fn shearing_momentum_preserves_the_mean() {
        let m = 64;
        let d0: Vec<Complex64> = (0..m)
            .map(|i| {
                let x = -0.5 + i as f64 / m as f64;
                Complex64::new(
                    0.7 + (2.0 * PI * x).cos(),
                    0.3 * (4.0 * PI * x).sin() - 0.2,
                )
            })
            .collect();
        let j_values: Vec<f64> = (0..m)
            .map(|i| {
                let x = -0.5 + i as f64 / m as f64;
                0.2 + 0.1 * (2.0 * PI * x).sin()
            })
            .collect();
        let j = SpatialField::new(FieldKind::Current, j_values).unwrap();
        let state = CorrectorState::new(d0, j, 0.5, 0.0).unwrap();
        let mean0 = state.mean_d_plus();
        let steps = corrector_evolve(&state, 0.5, 0.01).unwrap();
        for s in &steps {
            let drift = (s.mean_d_plus() - mean0).norm();
            assert!(drift <= 1e-10, "mean drifted by {drift:.2e} at t = {}", s.time);
        }
    }

    #[test]
    fn too_fast_momentum_is_refused() {
        let m = 64;
        let d0 = vec![Complex64::new(1.0, 0.0); m];
        let j = SpatialField::new(FieldKind::Current, vec![2.0; m]).unwrap();
        let state = CorrectorState::new(d0, j, 0.5, 0.0).unwrap();
        let err = corrector_evolve(&state, 0.5, 0.02).unwrap_err();
        assert!(matches!(err, CoreError::TimeStep(_)), "got {err}");
    }

    #[test]
    fn constant_envelope_gives_the_cosine_clock() {
        // d₊ ≡ i/2 (hence d₋ = -i/2) collapses R to cos(ωt), uniformly in x.
        let m = 8;
        let state = CorrectorState::new(
            vec![Complex64::new(0.0, 0.5); m],
            zero_momentum(m),
            0.25,
            0.0,
        )
        .unwrap();
        for &t in &[0.0, 0.3, 1.1] {
            let (r, grad) = corrector_r(&state, t, OscillationFrequency::InverseEps).unwrap();
            let expect = (t / 0.25).cos();
            let err = sup_err(&r.values, |_| expect);
            assert!(err <= 1e-14, "clock off by {err:.2e} at t = {t}");
            assert_eq!(grad, 0.0);
        }
    }

    #[test]
    fn oscillation_period_matches_the_chosen_clock() {
        let eps = 0.25;
        let f0 = perturbed_bump_grid(32, 64, 1.0, eps, None, 0.3, 0.0, 0.4).unwrap();
        let state = corrector_init(&f0).unwrap();
        let check_period = |freq: OscillationFrequency, period: f64| {
            let (r0, _) = corrector_r(&state, 0.4, freq).unwrap();
            let (r1, _) = corrector_r(&state, 0.4 + period, freq).unwrap();
            sup_err(&r1.values, |i| r0.values[i])
        };
        let e1 = check_period(OscillationFrequency::InverseEps, 2.0 * PI * eps);
        assert!(e1 <= 1e-12, "1/ε clock period violated by {e1:.2e}");
        let e2 = check_period(OscillationFrequency::InverseSqrtEps, 2.0 * PI * eps.sqrt());
        assert!(e2 <= 1e-12, "1/√ε clock period violated by {e2:.2e}");
    }

    #[test]
    fn gradient_bound_is_uniform_in_epsilon() {
        // A fixed envelope swept over ε: the sup over one period of |∂x R|
        // must not depend on ε — only the clock rate does.
        let m = 64;
        let amp = 0.4;
        let d0: Vec<Complex64> = (0..m)
            .map(|i| {
                let x = -0.5 + i as f64 / m as f64;
                Complex64::new(0.5 * amp * (2.0 * PI * x).sin(), 0.0)
            })
            .collect();
        let h = 1.0 / m as f64;
        // centered difference of amp·sin(2πx) at the crest
        let expect = amp * (2.0 * PI * h).sin() / h;
        let mut sups = Vec::new();
        for &eps in &[0.2, 0.1, 0.05, 0.025] {
            let state =
                CorrectorState::new(d0.clone(), zero_momentum(m), eps, 0.0).unwrap();
            let period = 2.0 * PI * eps;
            let sup = (0..8)
                .map(|k| {
                    let t = k as f64 * period / 8.0;
                    corrector_r(&state, t, OscillationFrequency::InverseEps)
                        .unwrap()
                        .1
                })
                .fold(0.0, f64::max);
            assert!(
                (sup - expect).abs() <= 1e-12 * expect,
                "eps = {eps}: sup gradient {sup} vs {expect}"
            );
            sups.push(sup);
        }
        let hi = sups.iter().fold(0.0f64, |a, &b| a.max(b));
        let lo = sups.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(hi / lo <= 1.0 + 1e-12, "gradient sup varies with ε: {sups:?}");
    }

    #[test]
    fn envelope_csv_lists_every_node() {
        let f0 = perturbed_bump_grid(32, 64, 1.0, 0.2, None, 0.3, 0.0, 0.4).unwrap();
        let state = corrector_init(&f0).unwrap();
        let dir = std::env::temp_dir().join("corrector_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("envelope.csv");
        state
            .write_csv(0.1, OscillationFrequency::InverseEps, &path)
            .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,re_d_plus,im_d_plus,r");
        assert_eq!(lines.len(), 33);
        let first: Vec<f64> = lines[1].split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(first[0], -0.5);
        std::fs::remove_dir_all(&dir).ok();
    }

    // ─── 2D initialization ───────────────────────────────────────────────

    fn torus_2d(m: usize) -> impl Iterator<Item = (usize, f64, f64)> {
        (0..m * m).map(move |idx| {
            let x = -0.5 + (idx / m) as f64 / m as f64;
            let y = -0.5 + (idx % m) as f64 / m as f64;
            (idx, x, y)
        })
    }

    #[test]
    fn planar_envelope_is_curl_free() {
        let m = 16;
        let total = m * m;
        let mut rho = vec![0.0; total];
        let mut j = vec![0.0; 2 * total];
        for (idx, x, y) in torus_2d(m) {
            rho[idx] = 1.0 + 0.2 * (2.0 * PI * x).cos() * (2.0 * PI * y).cos();
            j[idx] = 0.3 * (2.0 * PI * y).sin() + 0.2 * (2.0 * PI * x).cos();
            j[total + idx] = 0.1 * (2.0 * PI * x).cos() - 0.15 * (4.0 * PI * y).sin();
        }
        let c = corrector_init_2d(&rho, &j, 0.1).unwrap();
        let curl = c.curl_sup();
        assert!(curl <= 1e-8, "curl of the envelope is {curl:.2e}");
    }

    #[test]
    fn gradient_momentum_passes_the_projection_untouched() {
        // j = ∇φ is already curl-free, so the envelope momentum part is j/2;
        // with flat density the field part vanishes.
        let m = 16;
        let total = m * m;
        let rho = vec![1.0; total];
        let mut j = vec![0.0; 2 * total];
        for (idx, x, y) in torus_2d(m) {
            j[idx] = -0.4 * PI * (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
            j[total + idx] = 0.4 * PI * (2.0 * PI * x).cos() * (2.0 * PI * y).cos();
        }
        let c = corrector_init_2d(&rho, &j, 0.1).unwrap();
        let mut err = 0.0f64;
        let mut re_sup = 0.0f64;
        for idx in 0..2 * total {
            err = err.max((c.d_plus[idx].im - 0.5 * j[idx]).abs());
            re_sup = re_sup.max(c.d_plus[idx].re.abs());
        }
        assert!(err <= 1e-10, "projected momentum off by {err:.2e}");
        assert!(re_sup <= 1e-12, "flat density produced a field part {re_sup:.2e}");
    }

    #[test]
    fn rotational_momentum_is_projected_out() {
        // j = ∇⊥ψ carries no divergence, so nothing of it enters d₊.
        let m = 16;
        let total = m * m;
        let rho = vec![1.0; total];
        let mut j = vec![0.0; 2 * total];
        for (idx, x, y) in torus_2d(m) {
            j[idx] = -0.6 * PI * (2.0 * PI * x).cos() * (2.0 * PI * y).cos();
            j[total + idx] = -0.6 * PI * (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
        }
        let c = corrector_init_2d(&rho, &j, 0.1).unwrap();
        let sup = c.d_plus.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(sup <= 1e-12, "rotational momentum leaked {sup:.2e} into d₊");
    }

    #[test]
    fn malformed_2d_inputs_are_rejected() {
        let rho_ok = vec![1.0; 16];
        assert!(matches!(
            corrector_init_2d(&vec![1.0; 15], &vec![0.0; 30], 0.1).unwrap_err(),
            CoreError::Domain(_)
        ));
        assert!(matches!(
            corrector_init_2d(&rho_ok, &vec![0.0; 16], 0.1).unwrap_err(),
            CoreError::Mismatch(_)
        ));
        let rho_off = vec![1.2; 16];
        assert!(matches!(
            corrector_init_2d(&rho_off, &vec![0.0; 32], 0.1).unwrap_err(),
            CoreError::Normalization { .. }
        ));
    }
}
