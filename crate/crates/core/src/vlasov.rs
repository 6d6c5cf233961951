//! Semi-Lagrangian solver for the regularized Vlasov–Poisson system on the
//! periodic strip T × [-Vmax, Vmax].
//!
//! The force field is computed spectrally from the spatial density, so the
//! regularization enters only as a Fourier multiplier and r = 0 (the bare
//! kernel) costs nothing extra. Advection uses cubic interpolation: periodic
//! in x, clamped in v (the distribution is supposed to vanish well before the
//! velocity boundary; `run_vp` aborts when it stops doing so).

use std::fs::File;
use std::io::{BufWriter, Read as _, Write as _};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::CoreError;
use crate::grid::{
    ensure_finite, freq, periodic_shift_cubic, real_to_spectrum, sample_clamped_cubic,
    spectrum_to_real, FftCache,
};
use crate::kernels::{bump_normalization, bump_radial, MollifierSpec, MAX_R};
use crate::Result;

/// Mass tolerance enforced on construction and after every step.
pub const MASS_TOL: f64 = 1e-8;

/// Velocity-boundary mass above which a run is considered to have escaped
/// its grid.
pub const BOUNDARY_MASS_TOL: f64 = 1e-10;

/// Interpolation undershoot below this magnitude is clipped silently; the
/// worst value seen is still reported in the run diagnostics.
pub const UNDERSHOOT_TOL: f64 = 1e-12;

// ─── phase-space grid ────────────────────────────────────────────────────

/// Discretized distribution f(t, x, v) on a tensor grid.
///
/// Layout: `f[[i, j]]` sits at x_i = -1/2 + i·dx (dx = 1/mx, periodic) and
/// v_j = -vmax + (j + 1/2)·dv (dv = 2·vmax/mv, cell midpoints — no node on
/// the velocity boundary itself). Rows are contiguous in v.
#[derive(Debug, Clone)]
pub struct PhaseSpaceGrid {
    pub f: Array2<f64>,
    pub vmax: f64,
    pub time: f64,
    pub eps: f64,
    /// Regularization radius; `None` runs the bare kernel.
    pub r: Option<f64>,
}

impl PhaseSpaceGrid {
    /// Validates positivity (undershoot up to `UNDERSHOOT_TOL` is clipped),
    /// unit mass and the parameter ranges.
    pub fn new(
        mut f: Array2<f64>,
        vmax: f64,
        eps: f64,
        r: Option<f64>,
        time: f64,
    ) -> Result<Self> {
        let (mx, mv) = f.dim();
        if mx < 4 || mv < 4 {
            return Err(CoreError::domain(format!(
                "grid {mx}x{mv}: cubic advection needs at least 4 nodes per axis"
            )));
        }
        if !(vmax > 0.0 && vmax.is_finite()) {
            return Err(CoreError::domain(format!("vmax = {vmax}, expected > 0")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(CoreError::domain(format!("eps = {eps}, expected > 0")));
        }
        if let Some(rr) = r {
            if !(rr > 0.0 && rr <= MAX_R) {
                return Err(CoreError::domain(format!(
                    "r = {rr}, expected 0 < r <= {MAX_R} (pass None for the bare kernel)"
                )));
            }
        }
        if !time.is_finite() {
            return Err(CoreError::domain(format!("time = {time} is not finite")));
        }
        let mut worst = 0.0f64;
        for z in f.iter_mut() {
            if !z.is_finite() {
                return Err(CoreError::non_finite("distribution value"));
            }
            if *z < 0.0 {
                worst = worst.max(-*z);
                *z = 0.0;
            }
        }
        if worst > UNDERSHOOT_TOL {
            return Err(CoreError::domain(format!(
                "distribution has negative values down to -{worst:.3e}"
            )));
        }
        let grid = Self { f, vmax, time, eps, r };
        let mass = grid.mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(CoreError::Normalization {
                what: "phase-space mass".into(),
                value: mass,
                expected: 1.0,
                tol: MASS_TOL,
            });
        }
        Ok(grid)
    }

    pub fn mx(&self) -> usize {
        self.f.nrows()
    }

    pub fn mv(&self) -> usize {
        self.f.ncols()
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.mx() as f64
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.vmax / self.mv() as f64
    }

    pub fn x_node(&self, i: usize) -> f64 {
        -0.5 + i as f64 * self.dx()
    }

    pub fn v_node(&self, j: usize) -> f64 {
        -self.vmax + (j as f64 + 0.5) * self.dv()
    }

    pub fn mass(&self) -> f64 {
        self.f.sum() * self.dx() * self.dv()
    }

    /// Mass sitting in the outermost velocity cells — the early-warning
    /// signal that `vmax` is too small for the dynamics.
    pub fn boundary_mass(&self) -> f64 {
        let mv = self.mv();
        let mut s = 0.0;
        for row in self.f.rows() {
            s += row[0] + row[mv - 1];
        }
        s * self.dx() * self.dv()
    }

    /// Raw dump: magic, version, extents, axis metadata, then the array.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(b"VPPS")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.mx() as u32).to_le_bytes())?;
        w.write_all(&(self.mv() as u32).to_le_bytes())?;
        for val in [
            self.vmax,
            self.time,
            self.eps,
            self.r.unwrap_or(-1.0),
        ] {
            w.write_all(&val.to_le_bytes())?;
        }
        for &z in self.f.iter() {
            w.write_all(&z.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`write_binary`](Self::write_binary); re-validates through
    /// the constructor, so a corrupted dump fails loudly rather than loading.
    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut rd = std::io::BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        rd.read_exact(&mut magic)?;
        if &magic != b"VPPS" {
            return Err(CoreError::domain(format!(
                "{}: not a phase-space dump (bad magic)",
                path.display()
            )));
        }
        let mut u32buf = [0u8; 4];
        rd.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != 1 {
            return Err(CoreError::domain(format!(
                "{}: unsupported dump version {version}",
                path.display()
            )));
        }
        rd.read_exact(&mut u32buf)?;
        let mx = u32::from_le_bytes(u32buf) as usize;
        rd.read_exact(&mut u32buf)?;
        let mv = u32::from_le_bytes(u32buf) as usize;
        if mx == 0 || mv == 0 || mx.saturating_mul(mv) > (1 << 28) {
            return Err(CoreError::domain(format!(
                "{}: implausible extents {mx}x{mv}",
                path.display()
            )));
        }
        let mut f64buf = [0u8; 8];
        let mut header = [0.0f64; 4];
        for slot in header.iter_mut() {
            rd.read_exact(&mut f64buf)?;
            *slot = f64::from_le_bytes(f64buf);
        }
        let [vmax, time, eps, r_raw] = header;
        let mut data = Vec::with_capacity(mx * mv);
        for _ in 0..mx * mv {
            rd.read_exact(&mut f64buf)?;
            data.push(f64::from_le_bytes(f64buf));
        }
        let f = Array2::from_shape_vec((mx, mv), data)
            .map_err(|e| CoreError::domain(format!("{}: {e}", path.display())))?;
        let r = if r_raw < 0.0 { None } else { Some(r_raw) };
        PhaseSpaceGrid::new(f, vmax, eps, r, time)
    }
}

/// Block-average a grid down by integer factors per axis. Coarsening is the
/// cheap way to bring a quantized grid under the exact-LP budget while
/// keeping its mass layout honest: each coarse cell carries the mean of its
/// fine cells, so the mass in any region is preserved to rounding.
pub fn coarsen_grid(fine: &PhaseSpaceGrid, fx: usize, fv: usize) -> Result<PhaseSpaceGrid> {
    let (mx, mv) = (fine.mx(), fine.mv());
    if fx == 0 || fv == 0 || mx % fx != 0 || mv % fv != 0 {
        return Err(CoreError::mismatch(format!(
            "coarsening factors ({fx}, {fv}) do not divide the {mx}x{mv} grid"
        )));
    }
    let (cx, cv) = (mx / fx, mv / fv);
    let mut coarse = Array2::<f64>::zeros((cx, cv));
    for i in 0..mx {
        for j in 0..mv {
            coarse[[i / fx, j / fv]] += fine.f[[i, j]];
        }
    }
    coarse /= (fx * fv) as f64;
    PhaseSpaceGrid::new(coarse, fine.vmax, fine.eps, fine.r, fine.time)
}

// ─── spatial fields ──────────────────────────────────────────────────────

/// What a spatial profile means; mostly documentation, but it lets
/// `poisson_solve` refuse a current where it expects a density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Density,
    Current,
    Potential,
    Electric,
    /// Velocity-oscillation profile (the corrector R).
    Oscillation,
}

/// A scalar profile on the periodic x-grid (node i at x = -1/2 + i/m).
#[derive(Debug, Clone)]
pub struct SpatialField {
    pub kind: FieldKind,
    pub values: Vec<f64>,
}

impl SpatialField {
    pub fn new(kind: FieldKind, values: Vec<f64>) -> Result<Self> {
        if values.len() < 4 {
            return Err(CoreError::domain(format!(
                "spatial field with {} nodes; need at least 4",
                values.len()
            )));
        }
        ensure_finite(&values, "spatial field")?;
        Ok(Self { kind, values })
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Two-column CSV `x,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "x,value")?;
        let m = self.values.len() as f64;
        for (i, &z) in self.values.iter().enumerate() {
            writeln!(w, "{},{z:.17e}", -0.5 + i as f64 / m)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Velocity moments: density, current and the density sup.
pub fn moments(grid: &PhaseSpaceGrid) -> (SpatialField, SpatialField, f64) {
    let mx = grid.mx();
    let dv = grid.dv();
    let mut rho = vec![0.0; mx];
    let mut cur = vec![0.0; mx];
    let mut sup = 0.0f64;
    for (i, row) in grid.f.rows().into_iter().enumerate() {
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        for (j, &z) in row.iter().enumerate() {
            m0 += z;
            m1 += grid.v_node(j) * z;
        }
        rho[i] = m0 * dv;
        cur[i] = m1 * dv;
        sup = sup.max(rho[i]);
    }
    (
        SpatialField { kind: FieldKind::Density, values: rho },
        SpatialField { kind: FieldKind::Current, values: cur },
        sup,
    )
}

// ─── Poisson solve ───────────────────────────────────────────────────────

/// Solves -ε²U'' = ρ - 1 on the torus (zero-mean U) and returns (U, E) with
/// E = -U'. Spectral: Û(k) = ρ̂(k) / (4π²k²ε²), Ê(k) = -ik ρ̂(k) / (2πk²ε²);
/// the k = 0 mode carries the background subtraction.
pub fn poisson_solve(rho: &SpatialField, eps: f64) -> Result<(SpatialField, SpatialField)> {
    if rho.kind != FieldKind::Density {
        return Err(CoreError::mismatch(format!(
            "poisson_solve expects a density profile, got {:?}",
            rho.kind
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(CoreError::domain(format!("eps = {eps}, expected > 0")));
    }
    let mean = rho.mean();
    if (mean - 1.0).abs() > 1e-6 {
        return Err(CoreError::Normalization {
            what: "density mean".into(),
            value: mean,
            expected: 1.0,
            tol: 1e-6,
        });
    }
    let m = rho.grid_size();
    let cache = FftCache::new(m);
    let ie2 = eps.powi(-2);
    let nyquist = -(m as i64) / 2;
    let mut spec = real_to_spectrum(&rho.values, &cache);
    let mut u_spec = vec![Complex64::new(0.0, 0.0); m];
    for (idx, z) in spec.iter_mut().enumerate() {
        let k = freq(idx, m);
        if k == 0 {
            *z = Complex64::new(0.0, 0.0);
            continue;
        }
        let k2 = (k * k) as f64;
        let u_mult = ie2 / (4.0 * std::f64::consts::PI * std::f64::consts::PI * k2);
        u_spec[idx] = *z * u_mult;
        // E = -U'; the unpaired Nyquist mode is dropped to keep E real and odd.
        *z *= if m % 2 == 0 && k == nyquist {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, -ie2 / (2.0 * std::f64::consts::PI * k as f64))
        };
    }
    let u = spectrum_to_real(u_spec, &cache);
    let e = spectrum_to_real(spec, &cache);
    Ok((
        SpatialField { kind: FieldKind::Potential, values: u },
        SpatialField { kind: FieldKind::Electric, values: e },
    ))
}

// ─── time stepping ───────────────────────────────────────────────────────

/// Spectral force solver bound to one grid resolution: applies the
/// multiplier ε^{-2} χ̂_r(k)² K̂(k) and accumulates the field energy
/// ε^{-2}/2 · Σ χ̂² (-Ĝ) |ρ̂|² from the same spectrum.
struct FieldSolver {
    cache: FftCache,
    force_mult: Vec<Complex64>,
    energy_weight: Vec<f64>,
    dx2: f64,
}

impl FieldSolver {
    fn new(mx: usize, eps: f64, r: Option<f64>) -> Result<Self> {
        let chi = match r {
            Some(rr) => Some(MollifierSpec::new(rr)?),
            None => None,
        };
        let ie2 = eps.powi(-2);
        let nyquist = -(mx as i64) / 2;
        let mut force_mult = vec![Complex64::new(0.0, 0.0); mx];
        let mut energy_weight = vec![0.0; mx];
        for idx in 0..mx {
            let k = freq(idx, mx);
            if k == 0 {
                continue;
            }
            let chi2 = chi.as_ref().map_or(1.0, |c| c.chi_hat_1d(k).powi(2));
            let k2 = (k * k) as f64;
            let minus_g_hat = 1.0 / (4.0 * std::f64::consts::PI * std::f64::consts::PI * k2);
            energy_weight[idx] = 0.5 * ie2 * chi2 * minus_g_hat;
            if mx % 2 == 0 && k == nyquist {
                continue;
            }
            force_mult[idx] = Complex64::new(
                0.0,
                -ie2 * chi2 / (2.0 * std::f64::consts::PI * k as f64),
            );
        }
        Ok(Self {
            cache: FftCache::new(mx),
            force_mult,
            energy_weight,
            dx2: (1.0 / mx as f64).powi(2),
        })
    }

    /// Returns E on the nodes and the field energy of ρ.
    fn field(&self, rho: &[f64]) -> (Vec<f64>, f64) {
        let mut spec = real_to_spectrum(rho, &self.cache);
        let mut energy = 0.0;
        for (idx, z) in spec.iter_mut().enumerate() {
            // |ρ̂_continuous|² = dx² |DFT|² on this grid.
            energy += self.energy_weight[idx] * self.dx2 * z.norm_sqr();
            *z *= self.force_mult[idx];
        }
        (spectrum_to_real(spec, &self.cache), energy)
    }
}

/// Knobs for `run_vp`. `snapshot_every = 0` keeps only the initial and final
/// states; `probe_index` selects the x-node whose E(t, x0) series is recorded
/// every step.
#[derive(Debug, Clone)]
pub struct VpRunConfig {
    pub t_end: f64,
    pub dt: f64,
    pub snapshot_every: usize,
    pub probe_index: usize,
}

impl Default for VpRunConfig {
    fn default() -> Self {
        Self { t_end: 1.0, dt: 1e-3, snapshot_every: 0, probe_index: 0 }
    }
}

/// Full state stored at snapshot times.
#[derive(Debug, Clone)]
pub struct VpSnapshot {
    pub step: usize,
    pub grid: PhaseSpaceGrid,
    pub rho: SpatialField,
    pub e_field: SpatialField,
}

/// Output of `run_vp`: per-step scalar series plus sparse full snapshots.
#[derive(Debug)]
pub struct VpTrajectory {
    pub snapshots: Vec<VpSnapshot>,
    /// Step-boundary times, kinetic/field energies, probe field and density
    /// sup; all of length n_steps + 1.
    pub times: Vec<f64>,
    pub probe_e: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub field_energy: Vec<f64>,
    pub sup_density: Vec<f64>,
    /// Worst per-step mass defect before renormalization.
    pub max_mass_drift: f64,
    /// Deepest interpolation undershoot clipped during the run.
    pub max_undershoot: f64,
    pub max_boundary_mass: f64,
}

impl VpTrajectory {
    pub fn final_grid(&self) -> &PhaseSpaceGrid {
        &self.snapshots.last().expect("trajectory has a final snapshot").grid
    }

    pub fn total_energy(&self, step: usize) -> f64 {
        self.kinetic[step] + self.field_energy[step]
    }

    /// Per-step scalars: `t,probe_e,kinetic,field_energy,sup_density`.
    pub fn write_diagnostics_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "t,probe_e,kinetic,field_energy,sup_density")?;
        for s in 0..self.times.len() {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.times[s],
                self.probe_e[s],
                self.kinetic[s],
                self.field_energy[s],
                self.sup_density[s],
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Field snapshots as long-format CSV: `t,x,e`.
    pub fn write_field_series_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "t,x,e")?;
        for snap in &self.snapshots {
            let m = snap.e_field.values.len() as f64;
            for (i, &e) in snap.e_field.values.iter().enumerate() {
                writeln!(w, "{:.17e},{:.17e},{e:.17e}", snap.grid.time, -0.5 + i as f64 / m)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Evolves `f0` to `t_end` with Strang splitting: half x-advection, velocity
/// kick from the spectral field at the half-step density, half x-advection.
/// The distribution is clipped at zero and renormalized after every step;
/// both corrections are tracked and reported in the trajectory.
pub fn run_vp(f0: &PhaseSpaceGrid, cfg: &VpRunConfig) -> Result<VpTrajectory> {
    let (mx, mv) = (f0.mx(), f0.mv());
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(CoreError::domain(format!("dt = {}, expected > 0", cfg.dt)));
    }
    let dt_max = f0.eps / 10.0;
    if cfg.dt > dt_max * (1.0 + 1e-9) {
        return Err(CoreError::TimeStep(format!(
            "dt = {} exceeds the oscillation budget eps/10 = {dt_max:.3e}; \
             plasma oscillations of period ~2πε would be under-resolved",
            cfg.dt
        )));
    }
    if !(cfg.t_end >= 0.0 && cfg.t_end.is_finite()) {
        return Err(CoreError::domain(format!("t_end = {}, expected >= 0", cfg.t_end)));
    }
    let n_steps = (cfg.t_end / cfg.dt).round() as usize;
    if (n_steps as f64 * cfg.dt - cfg.t_end).abs() > 1e-9 * cfg.t_end.max(1.0) {
        return Err(CoreError::domain(format!(
            "t_end = {} is not a whole number of steps of dt = {}",
            cfg.t_end, cfg.dt
        )));
    }
    if cfg.probe_index >= mx {
        return Err(CoreError::domain(format!(
            "probe_index = {} on a grid with {mx} x-nodes",
            cfg.probe_index
        )));
    }

    let solver = FieldSolver::new(mx, f0.eps, f0.r)?;
    let dx = f0.dx();
    let dv = f0.dv();
    let (t0, dt) = (f0.time, cfg.dt);
    let half_cells: Vec<f64> = (0..mv).map(|j| f0.v_node(j) * 0.5 * dt / dx).collect();

    let mut grid = f0.clone();
    let mut scratch = Array2::<f64>::zeros((mx, mv));
    let mut col_in = vec![0.0; mx];
    let mut col_out = vec![0.0; mx];

    let mut traj = VpTrajectory {
        snapshots: Vec::new(),
        times: Vec::with_capacity(n_steps + 1),
        probe_e: Vec::with_capacity(n_steps + 1),
        kinetic: Vec::with_capacity(n_steps + 1),
        field_energy: Vec::with_capacity(n_steps + 1),
        sup_density: Vec::with_capacity(n_steps + 1),
        max_mass_drift: 0.0,
        max_undershoot: 0.0,
        max_boundary_mass: 0.0,
    };

    // Step-boundary bookkeeping shared by t = 0 and every later step.
    let observe = |grid: &PhaseSpaceGrid,
                       step: usize,
                       traj: &mut VpTrajectory|
     -> Result<()> {
        let (rho, _, sup) = moments(grid);
        let (e, field_energy) = solver.field(&rho.values);
        let mut kin = 0.0;
        for (j, col) in grid.f.columns().into_iter().enumerate() {
            let v = grid.v_node(j);
            kin += 0.5 * v * v * col.sum();
        }
        traj.times.push(grid.time);
        traj.probe_e.push(e[cfg.probe_index]);
        traj.kinetic.push(kin * dx * dv);
        traj.field_energy.push(field_energy);
        traj.sup_density.push(sup);
        let boundary = grid.boundary_mass();
        traj.max_boundary_mass = traj.max_boundary_mass.max(boundary);
        if boundary > BOUNDARY_MASS_TOL {
            return Err(CoreError::SupportEscape {
                time: grid.time,
                boundary_mass: boundary,
                suggested_vmax: 1.5 * grid.vmax,
            });
        }
        let want_snapshot = step == 0
            || step == n_steps
            || (cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0);
        if want_snapshot {
            traj.snapshots.push(VpSnapshot {
                step,
                grid: grid.clone(),
                rho,
                e_field: SpatialField { kind: FieldKind::Electric, values: e },
            });
        }
        Ok(())
    };

    observe(&grid, 0, &mut traj)?;

    for step in 1..=n_steps {
        // Half x-advection: column j shifts by v_j·dt/2 (in grid cells).
        for j in 0..mv {
            for i in 0..mx {
                col_in[i] = grid.f[[i, j]];
            }
            periodic_shift_cubic(&col_in, half_cells[j], &mut col_out);
            for i in 0..mx {
                grid.f[[i, j]] = col_out[i];
            }
        }

        // Velocity kick for the full dt from the half-step field.
        let (rho, _, _) = moments(&grid);
        let (e, _) = solver.field(&rho.values);
        {
            let src = grid.f.as_slice().expect("standard layout");
            let dst = scratch.as_slice_mut().expect("standard layout");
            dst.par_chunks_mut(mv)
                .zip(src.par_chunks(mv))
                .enumerate()
                .for_each(|(i, (row_out, row_in))| {
                    let shift = e[i] * dt / dv;
                    for (j, out) in row_out.iter_mut().enumerate() {
                        *out = sample_clamped_cubic(row_in, j as f64 - shift);
                    }
                });
        }
        std::mem::swap(&mut grid.f, &mut scratch);

        // Second half x-advection.
        for j in 0..mv {
            for i in 0..mx {
                col_in[i] = grid.f[[i, j]];
            }
            periodic_shift_cubic(&col_in, half_cells[j], &mut col_out);
            for i in 0..mx {
                grid.f[[i, j]] = col_out[i];
            }
        }

        // Positivity clip and conservative renormalization.
        let mut undershoot = 0.0f64;
        for z in grid.f.iter_mut() {
            if !z.is_finite() {
                return Err(CoreError::non_finite(format!(
                    "distribution at t = {}",
                    t0 + step as f64 * dt
                )));
            }
            if *z < 0.0 {
                undershoot = undershoot.max(-*z);
                *z = 0.0;
            }
        }
        traj.max_undershoot = traj.max_undershoot.max(undershoot);
        let mass = grid.mass();
        traj.max_mass_drift = traj.max_mass_drift.max((mass - 1.0).abs());
        if (mass - 1.0).abs() > 1e-3 {
            return Err(CoreError::Normalization {
                what: "per-step mass (before renormalization)".into(),
                value: mass,
                expected: 1.0,
                tol: 1e-3,
            });
        }
        grid.f.mapv_inplace(|z| z / mass);

        grid.time = t0 + step as f64 * dt;
        observe(&grid, step, &mut traj)?;
    }

    Ok(traj)
}

// ─── rescaling and reference solutions ───────────────────────────────────

/// Rescales a solution of the ε-system to the unit-ε frame:
/// 𝓕(t, x, v) = ε^{-1} f(εt, x, v/ε).
///
/// With `vmax_out = None` the velocity axis itself is rescaled (new
/// Vmax = ε·Vmax), which needs no interpolation at all. Passing a target
/// Vmax resamples onto it; that requires vmax_out ≤ ε·Vmax, otherwise the
/// source grid does not hold the data and the error says how large it
/// would have to be.
pub fn rescale_solution(f: &PhaseSpaceGrid, vmax_out: Option<f64>) -> Result<PhaseSpaceGrid> {
    let eps = f.eps;
    let native_vmax = eps * f.vmax;
    let scaled = f.f.mapv(|z| z / eps);
    match vmax_out {
        None => PhaseSpaceGrid::new(scaled, native_vmax, 1.0, f.r, f.time / eps),
        Some(vm) => {
            if !(vm > 0.0 && vm.is_finite()) {
                return Err(CoreError::domain(format!("vmax_out = {vm}, expected > 0")));
            }
            if vm > native_vmax * (1.0 + 1e-12) {
                return Err(CoreError::domain(format!(
                    "rescaling to Vmax = {vm} needs source data up to v = {:.6}, \
                     but the grid only holds |v| <= {:.6}",
                    vm / eps,
                    f.vmax
                )));
            }
            let (mx, mv) = (f.mx(), f.mv());
            let dv_out = 2.0 * vm / mv as f64;
            let dv_src = f.dv();
            let mut out = Array2::<f64>::zeros((mx, mv));
            for (i, row) in scaled.rows().into_iter().enumerate() {
                let src = row.as_slice().expect("standard layout");
                for j in 0..mv {
                    let v_out = -vm + (j as f64 + 0.5) * dv_out;
                    let pos = (v_out / eps + f.vmax) / dv_src - 0.5;
                    out[[i, j]] = sample_clamped_cubic(src, pos);
                }
            }
            PhaseSpaceGrid::new(out, vm, 1.0, f.r, f.time / eps)
        }
    }
}

/// Reference trajectory for a spatially homogeneous profile: such states are
/// exact equilibria (their field vanishes), so the "solution" at each
/// requested time is the initial grid with the clock moved.
pub fn kie_reference(g0: &PhaseSpaceGrid, times: &[f64]) -> Result<Vec<PhaseSpaceGrid>> {
    let (rho, _, _) = moments(g0);
    let defect = rho
        .values
        .iter()
        .map(|&z| (z - 1.0).abs())
        .fold(0.0f64, f64::max);
    if defect > MASS_TOL {
        return Err(CoreError::domain(format!(
            "homogeneous reference needs rho ≡ 1; found deviation {defect:.3e}"
        )));
    }
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if !t.is_finite() {
            return Err(CoreError::domain(format!("requested time {t} is not finite")));
        }
        let mut g = g0.clone();
        g.time = t;
        out.push(g);
    }
    Ok(out)
}

// ─── initial data ────────────────────────────────────────────────────────

/// Grid version of the perturbed-bump initial condition: density
/// 1 + a·cos(2πx) times a compact C^∞ bump in v centered at `v0` with
/// half-width `v_width`. The velocity profile is normalized discretely so
/// the grid mass is 1 to rounding.
pub fn perturbed_bump_grid(
    mx: usize,
    mv: usize,
    vmax: f64,
    eps: f64,
    r: Option<f64>,
    a: f64,
    v0: f64,
    v_width: f64,
) -> Result<PhaseSpaceGrid> {
    if a.abs() >= 1.0 {
        return Err(CoreError::domain(format!(
            "perturbation amplitude a = {a}: density 1 + a·cos would go negative"
        )));
    }
    if !(v_width > 0.0) {
        return Err(CoreError::domain(format!("v_width = {v_width}, expected > 0")));
    }
    // Dummy extents are validated again by the constructor below.
    let dv = 2.0 * vmax / mv as f64;
    let mut profile = vec![0.0; mv];
    for (j, p) in profile.iter_mut().enumerate() {
        let v = -vmax + (j as f64 + 0.5) * dv;
        *p = bump_radial((v - v0) / v_width) / (v_width * bump_normalization(1));
    }
    let discrete_mass: f64 = profile.iter().sum::<f64>() * dv;
    if discrete_mass <= 0.0 {
        return Err(CoreError::domain(
            "velocity bump has no mass on the grid; widen v_width or raise mv",
        ));
    }
    for p in profile.iter_mut() {
        *p /= discrete_mass;
    }
    let mut f = Array2::<f64>::zeros((mx, mv));
    for i in 0..mx {
        let x = -0.5 + i as f64 / mx as f64;
        let fac = 1.0 + a * (2.0 * std::f64::consts::PI * x).cos();
        for j in 0..mv {
            f[[i, j]] = fac * profile[j];
        }
    }
    PhaseSpaceGrid::new(f, vmax, eps, r, 0.0)
}

// ─── spectral diagnostics ────────────────────────────────────────────────

/// Dominant angular frequency of a (roughly) oscillatory series sampled at
/// spacing `dt`: Hann window, zero-padded FFT, parabolic peak refinement on
/// the log-magnitudes.
pub fn dominant_frequency(series: &[f64], dt: f64) -> Result<f64> {
    let n = series.len();
    if n < 32 {
        return Err(CoreError::domain(format!(
            "{n} samples are too few to resolve a period; need at least 32"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CoreError::domain(format!("dt = {dt}, expected > 0")));
    }
    ensure_finite(series, "time series")?;
    let mean = series.iter().sum::<f64>() / n as f64;
    let n_pad = (8 * n).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); n_pad];
    let mut peak_in = 0.0f64;
    for (i, z) in series.iter().enumerate() {
        let w = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos());
        let y = (z - mean) * w;
        peak_in = peak_in.max(y.abs());
        buf[i] = Complex64::new(y, 0.0);
    }
    if peak_in == 0.0 {
        return Err(CoreError::domain(
            "series is constant; there is no oscillation to measure",
        ));
    }
    FftCache::new(n_pad).forward(&mut buf);
    let half = n_pad / 2;
    let (mut k_peak, mut best) = (0usize, -1.0f64);
    for (k, z) in buf.iter().enumerate().take(half).skip(1) {
        let mag = z.norm();
        if mag > best {
            best = mag;
            k_peak = k;
        }
    }
    // Parabolic refinement in log-magnitude when the neighbors allow it.
    let mut k_ref = k_peak as f64;
    if k_peak > 1 && k_peak + 1 < half {
        let (l, c, r) = (
            buf[k_peak - 1].norm(),
            buf[k_peak].norm(),
            buf[k_peak + 1].norm(),
        );
        if l > c * 1e-12 && r > c * 1e-12 {
            let (ll, lc, lr) = (l.ln(), c.ln(), r.ln());
            let denom = ll - 2.0 * lc + lr;
            if denom < 0.0 {
                let delta = 0.5 * (ll - lr) / denom;
                k_ref += delta.clamp(-0.5, 0.5);
            }
        }
    }
    Ok(2.0 * std::f64::consts::PI * k_ref / (n_pad as f64 * dt))
}

// ─── tests ───────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::CoreError;
    use approx::assert_abs_diff_eq;

    const PI: f64 = std::f64::consts::PI;

    fn uniform_grid(mx: usize, mv: usize, vmax: f64, eps: f64) -> PhaseSpaceGrid {
        // Constant in x, flat box in v over the whole grid.
        let f = Array2::from_elem((mx, mv), 1.0 / (2.0 * vmax));
        PhaseSpaceGrid::new(f, vmax, eps, None, 0.0).unwrap()
    }

    fn cosine_density(m: usize, a: f64) -> SpatialField {
        let values = (0..m)
            .map(|i| 1.0 + a * (2.0 * PI * (-0.5 + i as f64 / m as f64)).cos())
            .collect();
        SpatialField::new(FieldKind::Density, values).unwrap()
    }

    #[test]
    fn homogeneous_density_gives_zero_field() {
        let rho = SpatialField::new(FieldKind::Density, vec![1.0; 64]).unwrap();
        let (u, e) = poisson_solve(&rho, 0.3).unwrap();
        for i in 0..64 {
            assert!(u.values[i].abs() <= 1e-14);
            assert!(e.values[i].abs() <= 1e-14);
        }
    }

    #[test]
    fn cosine_density_matches_the_closed_form_field() {
        // ρ = 1 + a·cos(2πx) → U = a·cos(2πx)/(4π²ε²), E = a·sin(2πx)/(2πε²).
        let (m, a, eps) = (64, 0.3, 0.5);
        let rho = cosine_density(m, a);
        let (u, e) = poisson_solve(&rho, eps).unwrap();
        for i in 0..m {
            let x = -0.5 + i as f64 / m as f64;
            let u_exact = a * (2.0 * PI * x).cos() / (4.0 * PI * PI * eps * eps);
            let e_exact = a * (2.0 * PI * x).sin() / (2.0 * PI * eps * eps);
            assert!((u.values[i] - u_exact).abs() <= 1e-10, "U off at node {i}");
            assert!((e.values[i] - e_exact).abs() <= 1e-10, "E off at node {i}");
        }
    }

    #[test]
    fn halving_epsilon_scales_the_field_by_exactly_four() {
        let rho = cosine_density(64, 0.4);
        let (_, e1) = poisson_solve(&rho, 0.5).unwrap();
        let (_, e2) = poisson_solve(&rho, 0.25).unwrap();
        for i in 0..64 {
            // Powers of two all the way through the transform: bitwise.
            assert_eq!(e2.values[i], 4.0 * e1.values[i]);
        }
    }

    #[test]
    fn off_mean_density_is_rejected() {
        let rho = SpatialField::new(FieldKind::Density, vec![1.01; 64]).unwrap();
        match poisson_solve(&rho, 1.0) {
            Err(CoreError::Normalization { value, .. }) => {
                assert!((value - 1.01).abs() < 1e-12)
            }
            other => panic!("expected a normalization error, got {other:?}"),
        }
    }

    #[test]
    fn current_profile_is_not_a_density() {
        let j = SpatialField::new(FieldKind::Current, vec![1.0; 16]).unwrap();
        assert!(matches!(poisson_solve(&j, 1.0), Err(CoreError::Mismatch(_))));
    }

    #[test]
    fn poisson_is_shift_equivariant() {
        let m = 64;
        let profile = |x: f64| 1.0 + 0.3 * (2.0 * PI * x).cos() + 0.1 * (4.0 * PI * x).sin();
        let rho: Vec<f64> = (0..m)
            .map(|i| profile(-0.5 + i as f64 / m as f64))
            .collect();
        let shift = 17usize;
        let rho_shifted: Vec<f64> = (0..m).map(|i| rho[(i + shift) % m]).collect();
        let (_, e) = poisson_solve(
            &SpatialField::new(FieldKind::Density, rho).unwrap(),
            0.7,
        )
        .unwrap();
        let (_, e_shifted) = poisson_solve(
            &SpatialField::new(FieldKind::Density, rho_shifted).unwrap(),
            0.7,
        )
        .unwrap();
        for i in 0..m {
            assert!((e_shifted.values[i] - e.values[(i + shift) % m]).abs() <= 1e-13);
        }
    }

    #[test]
    fn uniform_grid_has_unit_density_and_no_current() {
        let grid = uniform_grid(32, 64, 1.0, 0.5);
        let (rho, j, sup) = moments(&grid);
        for i in 0..32 {
            assert!((rho.values[i] - 1.0).abs() <= 1e-14);
            assert!(j.values[i].abs() <= 1e-14);
        }
        assert!((sup - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn monokinetic_column_current_equals_density() {
        // mv = 5, vmax = 1.25 puts a node exactly at v = 1 (j = 4).
        let (mx, mv, vmax) = (16, 5, 1.25);
        let dv = 2.0 * vmax / mv as f64;
        let mut f = Array2::<f64>::zeros((mx, mv));
        for i in 0..mx {
            let x = -0.5 + i as f64 / mx as f64;
            f[[i, 4]] = (1.0 + 0.2 * (2.0 * PI * x).cos()) / dv;
        }
        let grid = PhaseSpaceGrid::new(f, vmax, 1.0, None, 0.0).unwrap();
        assert_eq!(grid.v_node(4), 1.0);
        let (rho, j, _) = moments(&grid);
        for i in 0..mx {
            // j = v·ρ with v exactly 1: bitwise equality.
            assert_eq!(j.values[i], rho.values[i]);
        }
    }

    #[test]
    fn negative_distributions_are_rejected() {
        let mut f = Array2::from_elem((8, 8), 1.0 / 2.0);
        f[[3, 3]] = -1e-6;
        assert!(matches!(
            PhaseSpaceGrid::new(f, 1.0, 1.0, None, 0.0),
            Err(CoreError::Domain(_))
        ));
        let f = Array2::from_elem((8, 8), 0.7);
        assert!(matches!(
            PhaseSpaceGrid::new(f, 1.0, 1.0, None, 0.0),
            Err(CoreError::Normalization { .. })
        ));
    }

    #[test]
    fn homogeneous_state_is_stationary() {
        let f0 = perturbed_bump_grid(32, 64, 1.0, 0.5, None, 0.0, 0.0, 0.5).unwrap();
        let cfg = VpRunConfig { t_end: 0.5, dt: 0.05, snapshot_every: 0, probe_index: 3 };
        let traj = run_vp(&f0, &cfg).unwrap();
        let g_end = traj.final_grid();
        let sup_diff = f0
            .f
            .iter()
            .zip(g_end.f.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(sup_diff <= 1e-8, "homogeneous state moved by {sup_diff:.3e}");
        let probe_sup = traj.probe_e.iter().fold(0.0f64, |m, &z| m.max(z.abs()));
        assert!(probe_sup <= 1e-10, "phantom field {probe_sup:.3e}");
        assert!(traj.max_mass_drift <= 1e-12);
    }

    #[test]
    fn oversized_dt_is_rejected() {
        let f0 = perturbed_bump_grid(16, 32, 1.0, 0.05, None, 0.0, 0.0, 0.4).unwrap();
        let cfg = VpRunConfig { t_end: 0.1, dt: 0.01, ..Default::default() };
        assert!(matches!(run_vp(&f0, &cfg), Err(CoreError::TimeStep(_))));
    }

    #[test]
    fn incommensurate_horizon_is_rejected() {
        let f0 = perturbed_bump_grid(16, 32, 1.0, 1.0, None, 0.0, 0.0, 0.4).unwrap();
        let cfg = VpRunConfig { t_end: 0.05, dt: 0.02, ..Default::default() };
        assert!(matches!(run_vp(&f0, &cfg), Err(CoreError::Domain(_))));
    }

    #[test]
    fn escaping_support_reports_a_larger_vmax() {
        // The bump is wider than the box, so boundary cells already carry
        // mass at t = 0.
        let f0 = perturbed_bump_grid(16, 32, 0.5, 1.0, None, 0.0, 0.0, 0.6).unwrap();
        let cfg = VpRunConfig { t_end: 0.1, dt: 0.01, ..Default::default() };
        match run_vp(&f0, &cfg) {
            Err(CoreError::SupportEscape { suggested_vmax, boundary_mass, .. }) => {
                assert!(suggested_vmax > 0.5);
                assert!(boundary_mass > BOUNDARY_MASS_TOL);
            }
            other => panic!("expected support escape, got {other:?}"),
        }
    }

    #[test]
    fn rescale_with_unit_epsilon_is_the_identity() {
        let mut f0 = perturbed_bump_grid(16, 32, 1.0, 1.0, None, 0.2, 0.0, 0.3).unwrap();
        f0.time = 0.7;
        let g = rescale_solution(&f0, None).unwrap();
        assert_eq!(g.vmax, f0.vmax);
        assert_eq!(g.time, f0.time);
        assert_eq!(g.eps, 1.0);
        assert_eq!(g.f, f0.f);
    }

    #[test]
    fn rescale_scales_the_axis_and_preserves_mass() {
        let mut f0 = perturbed_bump_grid(16, 64, 1.0, 0.5, None, 0.2, 0.0, 0.3).unwrap();
        f0.time = 0.3;
        let g = rescale_solution(&f0, None).unwrap();
        assert_eq!(g.vmax, 0.5);
        assert_eq!(g.time, 0.6);
        for (a, b) in f0.f.iter().zip(g.f.iter()) {
            assert_eq!(*b, *a * 2.0); // division by ε = 0.5 is exact
        }
        assert!((g.mass() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn rescale_onto_the_native_axis_matches_the_exact_route() {
        let f0 = perturbed_bump_grid(16, 64, 1.0, 0.5, None, 0.2, 0.0, 0.3).unwrap();
        let exact = rescale_solution(&f0, None).unwrap();
        let resampled = rescale_solution(&f0, Some(exact.vmax)).unwrap();
        let sup = exact
            .f
            .iter()
            .zip(resampled.f.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(sup <= 1e-10, "resampling onto the native axis moved f by {sup:.3e}");
    }

    #[test]
    fn rescale_onto_a_wider_grid_is_refused() {
        let f0 = perturbed_bump_grid(16, 64, 1.0, 0.5, None, 0.2, 0.0, 0.3).unwrap();
        match rescale_solution(&f0, Some(0.8)) {
            Err(CoreError::Domain(msg)) => {
                assert!(msg.contains("1.6"), "error should name the needed extent: {msg}")
            }
            other => panic!("expected a domain error, got {other:?}"),
        }
    }

    #[test]
    fn kie_reference_keeps_homogeneous_profiles_fixed() {
        let g0 = perturbed_bump_grid(16, 64, 1.0, 0.5, None, 0.0, 0.1, 0.4).unwrap();
        let traj = kie_reference(&g0, &[0.0, 0.7]).unwrap();
        assert_eq!(traj[1].time, 0.7);
        assert_eq!(traj[1].f, g0.f);
        assert_eq!(traj[0].f, traj[1].f);
    }

    #[test]
    fn kie_reference_rejects_inhomogeneous_density() {
        let g0 = perturbed_bump_grid(16, 64, 1.0, 0.5, None, 0.1, 0.0, 0.4).unwrap();
        assert!(matches!(kie_reference(&g0, &[0.0]), Err(CoreError::Domain(_))));
    }

    #[test]
    fn perturbed_bump_grid_has_the_advertised_density() {
        let (mx, a) = (32, 0.4);
        let grid = perturbed_bump_grid(mx, 128, 1.0, 1.0, None, a, 0.0, 0.4).unwrap();
        let (rho, _, _) = moments(&grid);
        for i in 0..mx {
            let x = grid.x_node(i);
            let want = 1.0 + a * (2.0 * PI * x).cos();
            assert!((rho.values[i] - want).abs() <= 1e-12);
        }
        assert!((grid.mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn dominant_frequency_recovers_a_synthetic_tone() {
        let dt = 0.01;
        let series: Vec<f64> = (0..1000)
            .map(|i| {
                let t = i as f64 * dt;
                (2.0 * PI * 3.7 * t + 0.3).cos() + 0.2 * (2.0 * PI * 9.1 * t).cos()
            })
            .collect();
        let omega = dominant_frequency(&series, dt).unwrap();
        let want = 2.0 * PI * 3.7;
        assert!(
            (omega - want).abs() <= 0.005 * want,
            "measured {omega:.4}, expected {want:.4}"
        );
    }

    #[test]
    fn dominant_frequency_rejects_flat_or_short_series() {
        assert!(dominant_frequency(&vec![1.0; 10], 0.1).is_err());
        assert!(dominant_frequency(&vec![2.5; 100], 0.1).is_err());
    }

    #[test]
    fn diagnostics_and_field_exports_round_trip() {
        let dir = std::env::temp_dir().join("vlasov_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let f0 = perturbed_bump_grid(16, 32, 1.0, 0.5, None, 0.1, 0.0, 0.4).unwrap();
        let cfg = VpRunConfig { t_end: 0.1, dt: 0.05, snapshot_every: 1, probe_index: 0 };
        let traj = run_vp(&f0, &cfg).unwrap();

        let diag = dir.join("diag.csv");
        traj.write_diagnostics_csv(&diag).unwrap();
        let text = std::fs::read_to_string(&diag).unwrap();
        assert!(text.starts_with("t,probe_e,kinetic,field_energy,sup_density"));
        assert_eq!(text.lines().count(), 1 + traj.times.len());

        let series = dir.join("field.csv");
        traj.write_field_series_csv(&series).unwrap();
        let text = std::fs::read_to_string(&series).unwrap();
        assert_eq!(text.lines().count(), 1 + traj.snapshots.len() * 16);

        let snap = dir.join("state.bin");
        traj.final_grid().write_binary(&snap).unwrap();
        let bytes = std::fs::read(&snap).unwrap();
        assert_eq!(&bytes[0..4], b"VPPS");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + 4 * 8 + 16 * 32 * 8);

        let back = PhaseSpaceGrid::read_binary(&snap).unwrap();
        assert_eq!(back.mx(), 16);
        assert_eq!(back.mv(), 32);
        assert_eq!(back.vmax, traj.final_grid().vmax);
        assert_eq!(back.time, traj.final_grid().time);
        assert_eq!(back.eps, traj.final_grid().eps);
        assert_eq!(back.r, None);
        assert_eq!(back.f, traj.final_grid().f);

        // corrupting the magic must not produce a grid
        let mut bad = bytes.clone();
        bad[0] = b'X';
        let bad_path = dir.join("bad.bin");
        std::fs::write(&bad_path, &bad).unwrap();
        assert!(PhaseSpaceGrid::read_binary(&bad_path).is_err());

        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn coarsening_preserves_mass_and_rejects_bad_factors() {
        let fine = perturbed_bump_grid(32, 64, 1.0, 0.5, None, 0.2, 0.0, 0.4).unwrap();
        let coarse = coarsen_grid(&fine, 4, 8).unwrap();
        assert_eq!(coarse.mx(), 8);
        assert_eq!(coarse.mv(), 8);
        assert!((coarse.mass() - 1.0).abs() < 1e-12);
        // block means: first coarse cell vs hand average
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..8 {
                acc += fine.f[[i, j]];
            }
        }
        assert_abs_diff_eq!(coarse.f[[0, 0]], acc / 32.0, epsilon = 1e-15);

        assert!(coarsen_grid(&fine, 3, 8).is_err());
        assert!(coarsen_grid(&fine, 0, 8).is_err());
    }
}
