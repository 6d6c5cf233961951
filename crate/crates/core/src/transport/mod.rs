//! Wasserstein distances, optimal couplings, and the measure operators used
//! throughout the diagnostics: mollification, filtering by a velocity
//! corrector, velocity scaling, cell aggregation, and the anisotropic
//! pseudo-distance D with its truncation D̂.
//!
//! Conventions:
//! * A [`WeightedPointCloud`] lives on T^s × R^{dim−s}: the first `space_dim`
//!   coordinates are positions stored as representatives in [-1/2, 1/2)
//!   (wrapped at construction), the rest are velocities.
//! * The default ground metric is plain Euclidean distance between those
//!   representatives ("Euclidean on the fundamental domain"). The torus
//!   geodesic metric — wrap position differences to [-1/2, 1/2) — is offered
//!   as an option; the two coincide unless mass is transported across the
//!   seam. Every distance result should be labelled with the metric used.
//! * Exact solvers: 1D quantile/CDF formulas, and a dense LP (network
//!   simplex, [`simplex`]) capped at [`LP_BUDGET`] cost-matrix entries.
//!   Beyond the cap, callers aggregate ([`aggregate_cloud`]) or fall back to
//!   the sliced estimator, which is a lower-bound-flavoured surrogate and is
//!   never substituted where an inequality needs true W_p.

pub mod simplex;

use crate::grid::{ensure_finite, sample_periodic_cubic, wrap_unit};
use crate::kernels::{bump_radial, MollifierSpec};
use crate::{CoreError, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::HashMap;

/// Maximum number of cost-matrix entries the exact LP will accept.
pub const LP_BUDGET: usize = 4_000_000;

/// Weighted atoms on T^{space_dim} × R^{dim−space_dim}.
#[derive(Debug, Clone)]
pub struct WeightedPointCloud {
    dim: usize,
    space_dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedPointCloud {
    /// Build a cloud; `points` is row-major n×dim. Position coordinates are
    /// wrapped into [-1/2, 1/2). Weights must be nonnegative, finite, and sum
    /// to 1 within 1e-9; they are rescaled to sum to 1 exactly. Zero-weight
    /// atoms are dropped.
    pub fn new(
        dim: usize,
        space_dim: usize,
        mut points: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || space_dim > dim {
            return Err(CoreError::domain(format!(
                "point cloud: invalid dims (dim={dim}, space_dim={space_dim})"
            )));
        }
        let n = weights.len();
        if n == 0 || points.len() != n * dim {
            return Err(CoreError::mismatch(format!(
                "point cloud: {} coordinates for {} weights (dim {})",
                points.len(),
                n,
                dim
            )));
        }
        ensure_finite(&points, "cloud points")?;
        let mut total = 0.0;
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(CoreError::domain(format!(
                    "point cloud: weight {w} is not a nonnegative real"
                )));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(CoreError::Normalization {
                what: "point cloud total mass".into(),
                value: total,
                expected: 1.0,
                tol: 1e-9,
            });
        }
        for row in 0..n {
            for c in 0..space_dim {
                let p = &mut points[row * dim + c];
                *p = wrap_unit(*p);
            }
        }
        // drop zero-weight atoms, rescale to exact total 1
        let mut kept_points = Vec::with_capacity(points.len());
        let mut kept_weights = Vec::with_capacity(n);
        for (row, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                kept_points.extend_from_slice(&points[row * dim..(row + 1) * dim]);
                kept_weights.push(w / total);
            }
        }
        if kept_weights.is_empty() {
            return Err(CoreError::domain("point cloud: all weights are zero"));
        }
        Ok(WeightedPointCloud {
            dim,
            space_dim,
            points: kept_points,
            weights: kept_weights,
        })
    }

    /// Uniform weights; `space_dim = dim` (purely spatial cloud).
    pub fn spatial_uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        let n = points.len() / dim.max(1);
        Self::new(dim, dim, points, vec![1.0 / n as f64; n])
    }

    /// Phase-space cloud over T^d × R^d with uniform weights.
    pub fn phase_uniform(d: usize, points: Vec<f64>) -> Result<Self> {
        let n = points.len() / (2 * d).max(1);
        Self::new(2 * d, d, points, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of leading coordinates that live on the torus.
    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Ground metric for transport costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundMetric {
    /// Euclidean distance between fundamental-domain representatives
    /// (the default convention for all headline diagnostics).
    EuclideanFundamental,
    /// Wrap position differences to [-1/2, 1/2) before taking the norm.
    TorusGeodesic,
}

#[derive(Debug, Clone, Copy)]
pub struct DistanceOpts {
    /// Wasserstein order; 1 and 2 are supported.
    pub p: u32,
    pub metric: GroundMetric,
}

impl DistanceOpts {
    pub fn w1() -> Self {
        DistanceOpts {
            p: 1,
            metric: GroundMetric::EuclideanFundamental,
        }
    }

    pub fn w2() -> Self {
        DistanceOpts {
            p: 2,
            metric: GroundMetric::EuclideanFundamental,
        }
    }

    pub fn with_metric(mut self, metric: GroundMetric) -> Self {
        self.metric = metric;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.p != 1 && self.p != 2 {
            return Err(CoreError::domain(format!(
                "unsupported Wasserstein order p = {}",
                self.p
            )));
        }
        Ok(())
    }
}

impl Default for DistanceOpts {
    fn default() -> Self {
        Self::w2()
    }
}

fn ground_distance(a: &[f64], b: &[f64], space_dim: usize, metric: GroundMetric) -> f64 {
    let mut acc = 0.0;
    for c in 0..a.len() {
        let mut d = a[c] - b[c];
        if c < space_dim && metric == GroundMetric::TorusGeodesic {
            d = wrap_unit(d);
        }
        acc += d * d;
    }
    acc.sqrt()
}

/// Discrete optimal coupling: sparse triplets plus the optimal p-cost.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    /// `(source atom, target atom, mass)`, positive masses only.
    pub entries: Vec<(u32, u32, f64)>,
    /// Σ mass · dist^p (the LP objective, before the 1/p root).
    pub cost_p: f64,
    pub p: u32,
    pub n_source: usize,
    pub n_target: usize,
    /// Max deviation of plan marginals from the input weights.
    pub max_marginal_residual: f64,
}

impl TransportPlan {
    /// The transported mass leaving each source atom / entering each target.
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        let mut row = vec![0.0; self.n_source];
        let mut col = vec![0.0; self.n_target];
        for &(i, j, w) in &self.entries {
            row[i as usize] += w;
            col[j as usize] += w;
        }
        (row, col)
    }
}

/// Exact W_p between two discrete measures by dense LP.
///
/// Errors with `SizeOverflow` when the cost matrix would exceed
/// [`LP_BUDGET`] entries; callers should aggregate or use [`sliced_w2`].
pub fn wp_discrete(
    mu: &WeightedPointCloud,
    nu: &WeightedPointCloud,
    opts: DistanceOpts,
) -> Result<(f64, TransportPlan)> {
    opts.validate()?;
    check_compatible(mu, nu)?;
    let n = mu.len();
    let m = nu.len();
    let size = n
        .checked_mul(m)
        .ok_or_else(|| CoreError::domain("LP size overflows usize"))?;
    if size > LP_BUDGET {
        return Err(CoreError::SizeOverflow {
            what: "transport LP cost matrix".into(),
            size,
            budget: LP_BUDGET,
            hint: "aggregate the clouds (aggregate_cloud) or use sliced_w2".into(),
        });
    }
    let mut cost = vec![0.0; size];
    for i in 0..n {
        let a = mu.point(i);
        let row = &mut cost[i * m..(i + 1) * m];
        for (j, slot) in row.iter_mut().enumerate() {
            let d = ground_distance(a, nu.point(j), mu.space_dim, opts.metric);
            *slot = if opts.p == 1 { d } else { d * d };
        }
    }
    let sol = simplex::solve_transportation(mu.weights(), nu.weights(), &cost)?;
    let mut plan = TransportPlan {
        entries: sol.arcs,
        cost_p: sol.cost,
        p: opts.p,
        n_source: n,
        n_target: m,
        max_marginal_residual: 0.0,
    };
    let (row, col) = plan.marginals();
    let mut resid = 0.0_f64;
    for i in 0..n {
        resid = resid.max((row[i] - mu.weights[i]).abs());
    }
    for j in 0..m {
        resid = resid.max((col[j] - nu.weights[j]).abs());
    }
    if resid > 1e-10 {
        return Err(CoreError::Solver(format!(
            "transport plan violates marginals by {resid:.3e}"
        )));
    }
    plan.max_marginal_residual = resid;
    let value = if opts.p == 1 {
        plan.cost_p
    } else {
        plan.cost_p.max(0.0).sqrt()
    };
    Ok((value, plan))
}

/// Exact W2 via the LP (convenience wrapper with the order pinned).
pub fn w2_discrete(
    mu: &WeightedPointCloud,
    nu: &WeightedPointCloud,
    metric: GroundMetric,
) -> Result<(f64, TransportPlan)> {
    wp_discrete(mu, nu, DistanceOpts { p: 2, metric })
}

fn check_compatible(mu: &WeightedPointCloud, nu: &WeightedPointCloud) -> Result<()> {
    if mu.dim != nu.dim || mu.space_dim != nu.space_dim {
        return Err(CoreError::mismatch(format!(
            "cloud layout mismatch: ({}, {}) vs ({}, {})",
            mu.dim, mu.space_dim, nu.dim, nu.space_dim
        )));
    }
    Ok(())
}

/// Exact 1D W1 via the L¹ distance between CDFs (clouds must have dim 1).
///
/// Independent of the quantile route in [`wasserstein_1d`]; the two are
/// cross-checked in tests.
pub fn w1_1d(mu: &WeightedPointCloud, nu: &WeightedPointCloud) -> Result<f64> {
    check_compatible(mu, nu)?;
    if mu.dim != 1 {
        return Err(CoreError::domain(format!(
            "w1_1d expects 1D clouds, got dim {}",
            mu.dim
        )));
    }
    // merged breakpoints; CDF difference is constant between them
    let mut events: Vec<(f64, f64, f64)> = Vec::with_capacity(mu.len() + nu.len());
    for i in 0..mu.len() {
        events.push((mu.points[i], mu.weights[i], 0.0));
    }
    for j in 0..nu.len() {
        events.push((nu.points[j], 0.0, nu.weights[j]));
    }
    events.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0_f64;
    let mut fdiff = 0.0_f64; // F_mu - F_nu just right of the previous event
    let mut prev = events[0].0;
    for &(x, dmu, dnu) in &events {
        acc += fdiff.abs() * (x - prev);
        fdiff += dmu - dnu;
        prev = x;
    }
    Ok(acc)
}

/// Exact 1D W_p (p = 1, 2) between clouds via the quantile coupling.
pub fn wasserstein_1d(mu: &WeightedPointCloud, nu: &WeightedPointCloud, p: u32) -> Result<f64> {
    check_compatible(mu, nu)?;
    if mu.dim != 1 {
        return Err(CoreError::domain(format!(
            "wasserstein_1d expects 1D clouds, got dim {}",
            mu.dim
        )));
    }
    DistanceOpts {
        p,
        metric: GroundMetric::EuclideanFundamental,
    }
    .validate()?;
    let mut a: Vec<(f64, f64)> = mu
        .points
        .iter()
        .zip(&mu.weights)
        .map(|(&x, &w)| (x, w))
        .collect();
    let mut b: Vec<(f64, f64)> = nu
        .points
        .iter()
        .zip(&nu.weights)
        .map(|(&x, &w)| (x, w))
        .collect();
    a.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    b.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    let cost = quantile_cost_sorted(&a, &b, p);
    Ok(if p == 1 { cost } else { cost.max(0.0).sqrt() })
}

/// Σ over quantile segments of |Q_a - Q_b|^p; inputs sorted by position,
/// weights summing to 1 each.
fn quantile_cost_sorted(a: &[(f64, f64)], b: &[(f64, f64)], p: u32) -> f64 {
    let mut ia = 0;
    let mut ib = 0;
    let mut ca = a[0].1; // cumulative mass through atom ia
    let mut cb = b[0].1;
    let mut s = 0.0; // mass already coupled
    let mut cost = 0.0;
    loop {
        let next = ca.min(cb);
        let seg = next - s;
        if seg > 0.0 {
            let d = (a[ia].0 - b[ib].0).abs();
            cost += seg * if p == 1 { d } else { d * d };
        }
        s = next;
        if s >= 1.0 - 1e-15 {
            break;
        }
        // advance whichever quantile boundary was hit (possibly both)
        if ca <= next + 1e-18 && ia + 1 < a.len() {
            ia += 1;
            ca += a[ia].1;
        } else if cb <= next + 1e-18 && ib + 1 < b.len() {
            ib += 1;
            cb += b[ib].1;
        } else if ia + 1 < a.len() {
            ia += 1;
            ca += a[ia].1;
        } else if ib + 1 < b.len() {
            ib += 1;
            cb += b[ib].1;
        } else {
            break;
        }
    }
    cost
}

/// Exact 1D W_p (p = 1, 2) between two nonnegative densities sampled on the
/// uniform cell partition of [-1/2, 1/2): cell k covers
/// [-1/2 + k·dx, -1/2 + (k+1)·dx). Each density is renormalized to unit mass
/// (must hold within 1e-6 beforehand). The CDFs are piecewise linear, so the
/// quantile-difference integral is evaluated in closed form per segment.
pub fn wp_1d_density(dens_a: &[f64], dens_b: &[f64], p: u32) -> Result<f64> {
    DistanceOpts {
        p,
        metric: GroundMetric::EuclideanFundamental,
    }
    .validate()?;
    if dens_a.len() < 2 || dens_b.len() < 2 {
        return Err(CoreError::domain("wp_1d_density: need at least 2 cells"));
    }
    let cdf = |dens: &[f64]| -> Result<Vec<f64>> {
        ensure_finite(dens, "density")?;
        let n = dens.len();
        let dx = 1.0 / n as f64;
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for &v in dens {
            if v < -1e-12 {
                return Err(CoreError::domain(format!(
                    "wp_1d_density: negative density value {v}"
                )));
            }
            acc += v.max(0.0) * dx;
            cum.push(acc);
        }
        if (acc - 1.0).abs() > 1e-6 {
            return Err(CoreError::Normalization {
                what: "density mass".into(),
                value: acc,
                expected: 1.0,
                tol: 1e-6,
            });
        }
        for c in cum.iter_mut() {
            *c /= acc;
        }
        Ok(cum)
    };
    let ca = cdf(dens_a)?;
    let cb = cdf(dens_b)?;
    let na = dens_a.len();
    let nb = dens_b.len();
    let dxa = 1.0 / na as f64;
    let dxb = 1.0 / nb as f64;
    let edge = |k: usize, dx: f64| -> f64 { -0.5 + k as f64 * dx };

    // walk merged mass breakpoints; in between, both quantiles are linear
    let mut ia = 0; // current cell of a: s ∈ [ca[ia], ca[ia+1]]
    let mut ib = 0;
    let mut s = 0.0;
    let mut total = 0.0;
    let quantile = |cum: &[f64], i: usize, dx: f64, s: f64| -> f64 {
        let mass = cum[i + 1] - cum[i];
        edge(i, dx) + (s - cum[i]) * dx / mass
    };
    while s < 1.0 - 1e-14 {
        while ia + 1 < na && (ca[ia + 1] <= s + 1e-16 || ca[ia + 1] - ca[ia] <= 0.0) {
            ia += 1;
        }
        while ib + 1 < nb && (cb[ib + 1] <= s + 1e-16 || cb[ib + 1] - cb[ib] <= 0.0) {
            ib += 1;
        }
        let s_next = ca[ia + 1].min(cb[ib + 1]).min(1.0);
        let seg = s_next - s;
        if seg <= 0.0 {
            // stuck on an empty cell boundary; step past it
            s = s_next + 1e-16;
            continue;
        }
        let d0 = quantile(&ca, ia, dxa, s) - quantile(&cb, ib, dxb, s);
        let d1 = quantile(&ca, ia, dxa, s_next) - quantile(&cb, ib, dxb, s_next);
        total += if p == 2 {
            // ∫ of a squared linear function
            seg * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0
        } else if d0 * d1 >= 0.0 {
            seg * (d0.abs() + d1.abs()) / 2.0
        } else {
            // sign change: split at the root of the linear interpolant
            let la = seg * d0.abs() / (d0.abs() + d1.abs());
            (la * d0.abs() + (seg - la) * d1.abs()) / 2.0
        };
        s = s_next;
    }
    Ok(if p == 1 { total } else { total.max(0.0).sqrt() })
}

/// Monte-Carlo sliced-W2 estimate.
#[derive(Debug, Clone, Copy)]
pub struct SlicedDistance {
    pub estimate: f64,
    pub std_error: f64,
    pub n_projections: usize,
}

/// Sliced W2: average of exact 1D W2 between projections onto random
/// directions (uniform on the sphere, ChaCha-seeded). Projections contract
/// transport cost, so this estimates a lower-bound-flavoured surrogate of
/// W2 — useful for trends at sizes the LP cannot touch, never a substitute
/// where an inequality requires the true distance. Projections use the
/// fundamental-domain representatives (Euclidean convention).
pub fn sliced_w2(
    mu: &WeightedPointCloud,
    nu: &WeightedPointCloud,
    n_projections: usize,
    seed: u64,
) -> Result<SlicedDistance> {
    check_compatible(mu, nu)?;
    if n_projections < 16 {
        return Err(CoreError::domain(format!(
            "sliced_w2 needs ≥ 16 projections, got {n_projections}"
        )));
    }
    let dim = mu.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dir = vec![0.0; dim];
    let mut pa: Vec<(f64, f64)> = Vec::with_capacity(mu.len());
    let mut pb: Vec<(f64, f64)> = Vec::with_capacity(nu.len());
    let mut values = Vec::with_capacity(n_projections);
    for _ in 0..n_projections {
        loop {
            let mut norm2 = 0.0;
            for d in dir.iter_mut() {
                *d = rng.sample::<f64, _>(StandardNormal);
                norm2 += *d * *d;
            }
            if norm2 > 1e-12 {
                let inv = norm2.sqrt().recip();
                dir.iter_mut().for_each(|d| *d *= inv);
                break;
            }
        }
        pa.clear();
        pb.clear();
        for i in 0..mu.len() {
            let t = mu.point(i).iter().zip(&dir).map(|(x, d)| x * d).sum::<f64>();
            pa.push((t, mu.weights[i]));
        }
        for j in 0..nu.len() {
            let t = nu.point(j).iter().zip(&dir).map(|(x, d)| x * d).sum::<f64>();
            pb.push((t, nu.weights[j]));
        }
        pa.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
        pb.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
        values.push(quantile_cost_sorted(&pa, &pb, 2).max(0.0).sqrt());
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (values.len() - 1) as f64;
    Ok(SlicedDistance {
        estimate: mean,
        std_error: (var / values.len() as f64).sqrt(),
        n_projections,
    })
}

/// Where an aggregated cell's representative atom goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellPlacement {
    /// Geometric cell center: worst-case displacement = half cell diagonal.
    Center,
    /// Mass centroid of the atoms in the cell: usually much closer than the
    /// worst case (full cell diagonal), and exact when a cell holds one atom.
    Centroid,
}

#[derive(Debug, Clone)]
pub struct AggregatedCloud {
    pub cloud: WeightedPointCloud,
    /// Upper bound on how far any atom moved: W_p(original, aggregated) ≤ this.
    pub max_displacement: f64,
}

/// Collapse a cloud onto a uniform tensor mesh (`cells_per_axis` per axis:
/// positions over [-1/2, 1/2), velocities over the symmetric envelope of the
/// data). Returns the aggregated cloud and the displacement bound, which is
/// also a W_p error bound for replacing the original by the aggregate.
pub fn aggregate_cloud(
    mu: &WeightedPointCloud,
    cells_per_axis: usize,
    placement: CellPlacement,
) -> Result<AggregatedCloud> {
    if cells_per_axis == 0 {
        return Err(CoreError::domain("aggregate_cloud: zero cells per axis"));
    }
    let q = cells_per_axis;
    let dim = mu.dim;
    // per-axis ranges: [lo, lo + width)
    let mut lo = vec![-0.5; dim];
    let mut width = vec![1.0; dim];
    for c in mu.space_dim..dim {
        let mut vmax = 0.0_f64;
        for i in 0..mu.len() {
            vmax = vmax.max(mu.point(i)[c].abs());
        }
        let v = vmax.max(1e-12) * (1.0 + 1e-12);
        lo[c] = -v;
        width[c] = 2.0 * v;
    }
    let cell_w: Vec<f64> = width.iter().map(|w| w / q as f64).collect();
    let diag = cell_w.iter().map(|w| w * w).sum::<f64>().sqrt();

    let mut cells: HashMap<u64, (f64, Vec<f64>)> = HashMap::new();
    for i in 0..mu.len() {
        let pt = mu.point(i);
        let w = mu.weights[i];
        let mut key = 0u64;
        for c in 0..dim {
            let idx = (((pt[c] - lo[c]) / cell_w[c]).floor() as i64).clamp(0, q as i64 - 1);
            key = key * q as u64 + idx as u64;
        }
        let entry = cells.entry(key).or_insert_with(|| (0.0, vec![0.0; dim]));
        entry.0 += w;
        for c in 0..dim {
            entry.1[c] += w * pt[c];
        }
    }

    let mut points = Vec::with_capacity(cells.len() * dim);
    let mut weights = Vec::with_capacity(cells.len());
    // deterministic output order
    let mut keys: Vec<u64> = cells.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let (w, sums) = &cells[&key];
        match placement {
            CellPlacement::Centroid => {
                for c in 0..dim {
                    points.push(sums[c] / w);
                }
            }
            CellPlacement::Center => {
                let mut k = key;
                let mut idx = vec![0u64; dim];
                for c in (0..dim).rev() {
                    idx[c] = k % q as u64;
                    k /= q as u64;
                }
                for c in 0..dim {
                    points.push(lo[c] + (idx[c] as f64 + 0.5) * cell_w[c]);
                }
            }
        }
        weights.push(*w);
    }
    let max_displacement = match placement {
        CellPlacement::Center => 0.5 * diag,
        CellPlacement::Centroid => diag,
    };
    Ok(AggregatedCloud {
        cloud: WeightedPointCloud::new(dim, mu.space_dim, points, weights)?,
        max_displacement,
    })
}

/// How to realize the mollification χ_r ∗ μ (convolution acts on the
/// position block).
#[derive(Debug, Clone, Copy)]
pub enum MollifyMode {
    /// Replace each atom by a symmetric quadrature of χ_r: a tensor grid of
    /// `points_per_axis` offsets per position axis, radially masked and
    /// bump-weighted. Any normalized symmetric pattern supported strictly
    /// inside the r-ball represents *some* admissible mollifier exactly, so
    /// the contraction and self-distance lemmas hold exactly in this mode
    /// (the pattern is a quadrature approximation of the target bump).
    Deterministic { points_per_axis: usize },
    /// Add one i.i.d. χ_r-distributed offset to each atom (law exact,
    /// realization random). Cloud size is unchanged.
    Stochastic { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct MollifyInfo {
    /// Max position displacement actually applied; always < r.
    pub displacement_bound: f64,
    pub atoms_out: usize,
    pub deterministic: bool,
}

/// Cap on the atom count a deterministic mollification may produce.
const MOLLIFY_ATOM_CAP: usize = 2_000_000;

/// Realize χ_r ∗ μ as a weighted cloud. See [`MollifyMode`] for the two
/// constructions; both displace every atom by strictly less than r in the
/// position block and leave velocities untouched.
pub fn mollify_measure(
    mu: &WeightedPointCloud,
    moll: &MollifierSpec,
    mode: MollifyMode,
) -> Result<(WeightedPointCloud, MollifyInfo)> {
    let sd = mu.space_dim;
    if sd == 0 {
        return Err(CoreError::domain(
            "mollify_measure: cloud has no position coordinates",
        ));
    }
    let r = moll.r;
    match mode {
        MollifyMode::Deterministic { points_per_axis } => {
            let q = points_per_axis;
            if q == 0 {
                return Err(CoreError::domain(
                    "mollify_measure: points_per_axis must be ≥ 1",
                ));
            }
            // tensor offsets in units of r, radially masked to the open ball
            let centers: Vec<f64> = (0..q).map(|t| -1.0 + (2 * t + 1) as f64 / q as f64).collect();
            let mut offsets: Vec<Vec<f64>> = vec![vec![]];
            for _ in 0..sd {
                let mut next = Vec::with_capacity(offsets.len() * q);
                for base in &offsets {
                    for &c in &centers {
                        let mut o = base.clone();
                        o.push(c);
                        next.push(o);
                    }
                }
                offsets = next;
            }
            let mut pattern: Vec<(Vec<f64>, f64)> = Vec::new();
            let mut total = 0.0;
            for o in offsets {
                let s2: f64 = o.iter().map(|c| c * c).sum();
                if s2 < 1.0 {
                    let w = bump_radial(s2.sqrt());
                    if w > 0.0 {
                        total += w;
                        pattern.push((o, w));
                    }
                }
            }
            if pattern.is_empty() {
                return Err(CoreError::domain(
                    "mollify_measure: quadrature pattern is empty (points_per_axis too small?)",
                ));
            }
            let n_out = mu.len().saturating_mul(pattern.len());
            if n_out > MOLLIFY_ATOM_CAP {
                return Err(CoreError::SizeOverflow {
                    what: "mollified cloud size".into(),
                    size: n_out,
                    budget: MOLLIFY_ATOM_CAP,
                    hint: "reduce points_per_axis or use the stochastic mode".into(),
                });
            }
            let mut bound = 0.0_f64;
            let mut points = Vec::with_capacity(n_out * mu.dim);
            let mut weights = Vec::with_capacity(n_out);
            for i in 0..mu.len() {
                let pt = mu.point(i);
                for (o, w) in &pattern {
                    for c in 0..mu.dim {
                        let shift = if c < sd { r * o[c] } else { 0.0 };
                        points.push(pt[c] + shift);
                    }
                    weights.push(mu.weights[i] * w / total);
                }
            }
            for (o, _) in &pattern {
                let len = o.iter().map(|c| c * c).sum::<f64>().sqrt() * r;
                bound = bound.max(len);
            }
            let cloud = WeightedPointCloud::new(mu.dim, sd, points, weights)?;
            let atoms_out = cloud.len();
            Ok((
                cloud,
                MollifyInfo {
                    displacement_bound: bound,
                    atoms_out,
                    deterministic: true,
                },
            ))
        }
        MollifyMode::Stochastic { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // radial law: density ∝ s^{sd-1} bump(s) on [0, 1)
            let nt = 1024;
            let mut cum = Vec::with_capacity(nt + 1);
            cum.push(0.0);
            let mut acc = 0.0;
            let mut prev = 0.0;
            for i in 1..=nt {
                let s = i as f64 / nt as f64;
                let f = s.powi(sd as i32 - 1) * bump_radial(s);
                acc += 0.5 * (prev + f) / nt as f64;
                prev = f;
                cum.push(acc);
            }
            let total = acc;
            let sample_radius = |u: f64| -> f64 {
                let target = u * total;
                let mut lo = 0;
                let mut hi = nt;
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if cum[mid] <= target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let seg = cum[hi] - cum[lo];
                let t = if seg > 0.0 { (target - cum[lo]) / seg } else { 0.0 };
                (lo as f64 + t) / nt as f64
            };
            let mut points = mu.points.clone();
            let mut bound = 0.0_f64;
            let mut dir = vec![0.0; sd];
            for i in 0..mu.len() {
                let s = sample_radius(rng.random::<f64>()).min(1.0 - 1e-12);
                if sd == 1 {
                    dir[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
                } else {
                    loop {
                        let mut norm2 = 0.0;
                        for d in dir.iter_mut() {
                            *d = rng.sample::<f64, _>(StandardNormal);
                            norm2 += *d * *d;
                        }
                        if norm2 > 1e-12 {
                            let inv = norm2.sqrt().recip();
                            dir.iter_mut().for_each(|d| *d *= inv);
                            break;
                        }
                    }
                }
                for c in 0..sd {
                    points[i * mu.dim + c] += r * s * dir[c];
                }
                bound = bound.max(r * s);
            }
            let cloud = WeightedPointCloud::new(mu.dim, sd, points, mu.weights.clone())?;
            let atoms_out = cloud.len();
            Ok((
                cloud,
                MollifyInfo {
                    displacement_bound: bound,
                    atoms_out,
                    deterministic: false,
                },
            ))
        }
    }
}

/// Filter a d=1 phase-space cloud by a velocity corrector: each atom
/// (x, v) ↦ (x, v − R(x)), weights unchanged. `r_field` holds R on the
/// uniform x-grid (nodes -1/2 + i/m), sampled by periodic cubic
/// interpolation.
pub fn filter_measure(mu: &WeightedPointCloud, r_field: &[f64]) -> Result<WeightedPointCloud> {
    if mu.dim != 2 || mu.space_dim != 1 {
        return Err(CoreError::domain(format!(
            "filter_measure supports d=1 phase-space clouds (dim 2), got dim {} / space {}",
            mu.dim, mu.space_dim
        )));
    }
    if r_field.len() < 4 {
        return Err(CoreError::domain(
            "filter_measure: corrector grid needs ≥ 4 nodes",
        ));
    }
    ensure_finite(r_field, "corrector field")?;
    let m = r_field.len() as f64;
    let mut points = mu.points.clone();
    for i in 0..mu.len() {
        let x = points[2 * i];
        let pos = (x + 0.5) * m;
        points[2 * i + 1] -= sample_periodic_cubic(r_field, pos);
    }
    WeightedPointCloud::new(2, 1, points, mu.weights.clone())
}

/// Scale the velocity block: (x, v) ↦ (x, v / r_scale). This is the measure
/// operator S_R: S_R[ν](X × V) = ν(X × R·V).
pub fn scale_measure(mu: &WeightedPointCloud, r_scale: f64) -> Result<WeightedPointCloud> {
    if !(r_scale > 0.0) || !r_scale.is_finite() {
        return Err(CoreError::domain(format!(
            "scale_measure: scale must be positive and finite, got {r_scale}"
        )));
    }
    if mu.space_dim == mu.dim {
        return Err(CoreError::domain(
            "scale_measure: cloud has no velocity coordinates",
        ));
    }
    let mut points = mu.points.clone();
    for i in 0..mu.len() {
        for c in mu.space_dim..mu.dim {
            points[i * mu.dim + c] /= r_scale;
        }
    }
    WeightedPointCloud::new(mu.dim, mu.space_dim, points, mu.weights.clone())
}

/// Anisotropic distance of an index-paired coupling at one time:
/// D = (1/2) Σ_i w_i (λ²|x_i − y_i|² + |v_i − w_i|²).
///
/// Positions are compared through wrapped differences, which agree with the
/// Euclidean fundamental-domain convention whenever a pair is within half a
/// period (always the case for the evolved couplings this measures).
/// `weights = None` means uniform 1/N. Note W2² ≤ 2D for λ ≥ 1 (pairing is a
/// coupling); the sharper factor-1 bound needs the position term to dominate.
pub fn anisotropic_d(
    x1: &[f64],
    v1: &[f64],
    x2: &[f64],
    v2: &[f64],
    dim: usize,
    weights: Option<&[f64]>,
    lambda: f64,
) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(CoreError::domain(format!(
            "anisotropic_d: lambda must be positive, got {lambda}"
        )));
    }
    if dim == 0 || x1.len() % dim != 0 {
        return Err(CoreError::domain("anisotropic_d: bad dimension"));
    }
    let n = x1.len() / dim;
    if x2.len() != n * dim || v1.len() != n * dim || v2.len() != n * dim {
        return Err(CoreError::mismatch(
            "anisotropic_d: trajectory arrays disagree in length".to_string(),
        ));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(CoreError::mismatch(format!(
                "anisotropic_d: {} weights for {} pairs",
                w.len(),
                n
            )));
        }
    }
    let l2 = lambda * lambda;
    let mut acc = 0.0;
    for i in 0..n {
        let mut dx2 = 0.0;
        let mut dv2 = 0.0;
        for c in 0..dim {
            let dx = wrap_unit(x1[i * dim + c] - x2[i * dim + c]);
            let dv = v1[i * dim + c] - v2[i * dim + c];
            dx2 += dx * dx;
            dv2 += dv * dv;
        }
        let w = weights.map_or(1.0 / n as f64, |w| w[i]);
        acc += w * (l2 * dx2 + dv2);
    }
    Ok(0.5 * acc)
}

#[derive(Debug, Clone)]
pub struct TruncatedD {
    /// D̂(t) = min{1, λ⁻² r^{-(d+2)} · sup_{s≤t} D(s)}.
    pub values: Vec<f64>,
    /// λ² ≤ 2: the Wasserstein-domination constant degrades (see
    /// [`anisotropic_d`]); flagged rather than rejected.
    pub lambda_warning: bool,
}

/// Truncate and rescale a D(t) series to the order-one diagnostic D̂.
pub fn truncate_d(d_series: &[f64], lambda: f64, r: f64, dim: usize) -> Result<TruncatedD> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(CoreError::domain("truncate_d: lambda must be positive"));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(CoreError::domain(format!(
            "truncate_d: r must lie in (0, 1), got {r}"
        )));
    }
    if dim == 0 {
        return Err(CoreError::domain("truncate_d: dimension must be ≥ 1"));
    }
    ensure_finite(d_series, "D series")?;
    let factor = lambda.powi(-2) * r.powi(-(dim as i32 + 2));
    let mut sup = 0.0_f64;
    let values = d_series
        .iter()
        .map(|&d| {
            sup = sup.max(d);
            (factor * sup).min(1.0)
        })
        .collect();
    Ok(TruncatedD {
        values,
        lambda_warning: lambda * lambda <= 2.0,
    })
}

// ─── grid vs cloud ───────────────────────────────────────────────────────

/// How a [`grid_vs_cloud_w`] value was obtained. Anything but `ExactLp`
/// means the caller is looking at a surrogate: aggregation adds the reported
/// displacement to the error budget, slicing is a projection average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMethod {
    ExactLp,
    AggregatedLp,
    Sliced,
}

#[derive(Debug, Clone)]
pub struct GridCloudDistance {
    pub value: f64,
    /// W_p error bound of the discretizations folded into `value`: half the
    /// phase-cell diagonal from quantizing the grid, plus aggregation
    /// displacements when the LP budget forced coarsening. The true distance
    /// lies within `value ± quantization_bound`.
    pub quantization_bound: f64,
    pub method: DistanceMethod,
    /// Monte-Carlo error of the sliced estimate; 0 for exact routes.
    pub std_error: f64,
}

/// Quantize a phase-space density to a weighted cloud: one atom per nonzero
/// cell at the cell's node, weight f·dx·dv. Returns the cloud and the
/// quantization error bound (half the cell diagonal).
pub fn quantize_grid(mu: &crate::vlasov::PhaseSpaceGrid) -> Result<(WeightedPointCloud, f64)> {
    let (dx, dv) = (mu.dx(), mu.dv());
    let cell_mass = dx * dv;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut total = 0.0;
    for (i, row) in mu.f.rows().into_iter().enumerate() {
        for (j, &z) in row.iter().enumerate() {
            if z > 0.0 {
                points.push(mu.x_node(i));
                points.push(mu.v_node(j));
                let w = z * cell_mass;
                weights.push(w);
                total += w;
            }
        }
    }
    if weights.is_empty() {
        return Err(CoreError::domain("quantize_grid: the density is identically zero"));
    }
    // The grid's mass tolerance (1e-8) is looser than the cloud constructor's;
    // normalize here.
    for w in weights.iter_mut() {
        *w /= total;
    }
    let cloud = WeightedPointCloud::new(2, 1, points, weights)?;
    Ok((cloud, 0.5 * (dx * dx + dv * dv).sqrt()))
}

/// W_p between a grid density and a particle cloud: quantize the grid, then
/// solve the discrete problem exactly when it fits the LP budget, after
/// centroid aggregation when it does not. The quantization/aggregation error
/// is reported alongside the value, never silently absorbed.
pub fn grid_vs_cloud_w(
    mu: &crate::vlasov::PhaseSpaceGrid,
    nu: &WeightedPointCloud,
    opts: DistanceOpts,
) -> Result<GridCloudDistance> {
    opts.validate()?;
    if nu.dim() != 2 || nu.space_dim() != 1 {
        return Err(CoreError::mismatch(format!(
            "grid_vs_cloud_w expects a (x, v) phase cloud, got dim {} / space_dim {}",
            nu.dim(),
            nu.space_dim()
        )));
    }
    let (mut grid_cloud, mut bound) = quantize_grid(mu)?;
    let mut nu_eff = None;
    let mut method = DistanceMethod::ExactLp;
    if grid_cloud.len() * nu.len() > LP_BUDGET {
        // Coarsen each oversized side onto a q×q mesh; q⁴ ≤ budget keeps the
        // aggregated problem exactly solvable.
        let q = (LP_BUDGET as f64).powf(0.25).floor() as usize;
        method = DistanceMethod::AggregatedLp;
        if grid_cloud.len() > q * q {
            let agg = aggregate_cloud(&grid_cloud, q, CellPlacement::Centroid)?;
            bound += agg.max_displacement;
            grid_cloud = agg.cloud;
        }
        if nu.len() > q * q {
            let agg = aggregate_cloud(nu, q, CellPlacement::Centroid)?;
            bound += agg.max_displacement;
            nu_eff = Some(agg.cloud);
        }
    }
    let nu_ref = nu_eff.as_ref().unwrap_or(nu);
    if grid_cloud.len() * nu_ref.len() > LP_BUDGET {
        // Unreachable for 2D phase space (q⁴ < budget), kept as the honest
        // escape hatch the contract asks for.
        let sliced = sliced_w2(&grid_cloud, nu_ref, 64, 0x5EED)?;
        return Ok(GridCloudDistance {
            value: sliced.estimate,
            quantization_bound: bound,
            method: DistanceMethod::Sliced,
            std_error: sliced.std_error,
        });
    }
    let (value, _) = wp_discrete(&grid_cloud, nu_ref, opts)?;
    Ok(GridCloudDistance {
        value,
        quantization_bound: bound,
        method,
        std_error: 0.0,
    })
}
