//! Dense transportation problem (bipartite min-cost flow) via network simplex.
//!
//! Solves  min Σ_ij c_ij γ_ij  s.t.  Σ_j γ_ij = a_i,  Σ_i γ_ij = b_j,  γ ≥ 0
//! for a dense cost matrix `c` (row-major, n×m). This is the exact-coupling
//! backbone for the Wasserstein distances; everything else in the module
//! reduces to it or to closed forms.
//!
//! Implementation notes, since this is the one genuinely delicate algorithm
//! in the crate:
//!
//! * Nodes are `0..n` (sources), `n..n+m` (sinks), plus an artificial root
//!   `n+m`. The initial basis is the "star": every node connected to the
//!   root by an artificial arc with Big-M cost, carrying its full supply or
//!   demand. Real arcs price in and displace the artificials; one artificial
//!   stays basic forever (the spanning tree needs the root) with flow 0.
//! * Entering arc: block pricing (block ≈ √(nm)), most negative reduced cost
//!   within the block, persistent cursor.
//! * Leaving arc: walk both legs of the pivot cycle to the apex; strict `<`
//!   on the entering arc's source side, `≤` on the target side, matching the
//!   tie-breaking used by LEMON's implementation — in practice this avoids
//!   degenerate cycling without a full strong-feasibility proof.
//! * The spanning tree stores flow only on tree arcs (one per non-root node,
//!   on the arc to its parent), so memory is O(n+m) beyond the cost matrix.

use crate::{CoreError, Result};

/// One basic feasible coupling: arcs with positive mass, plus the total cost.
#[derive(Debug, Clone)]
pub struct SimplexSolution {
    /// `(source, sink, mass)` triplets; only strictly positive masses.
    pub arcs: Vec<(u32, u32, f64)>,
    /// Σ mass·cost over the coupling.
    pub cost: f64,
    /// Number of simplex pivots performed (diagnostic).
    pub pivots: usize,
}

/// Hard cap: pivots ≤ `PIVOT_CAP_FACTOR · (n+m) + PIVOT_CAP_BASE` before we
/// declare the solve stuck. Network simplex on transportation problems
/// empirically needs a small multiple of the node count.
const PIVOT_CAP_FACTOR: usize = 400;
const PIVOT_CAP_BASE: usize = 50_000;

struct Tree {
    parent: Vec<u32>,
    /// Arc to parent is oriented parent→node (true) or node→parent (false).
    pred_fwd: Vec<bool>,
    /// Flow on the arc to the parent (always ≥ 0).
    pred_flow: Vec<f64>,
    /// Cost of the arc to the parent.
    pred_cost: Vec<f64>,
    /// Real arc id `i*m + j`, or -1 for an artificial root arc.
    pred_real: Vec<i64>,
    children: Vec<Vec<u32>>,
    depth: Vec<u32>,
    potential: Vec<f64>,
}

impl Tree {
    fn star(supply: &[f64], demand: &[f64], big: f64) -> Self {
        let n = supply.len();
        let m = demand.len();
        let nn = n + m + 1;
        let root = n + m;
        let mut t = Tree {
            parent: vec![root as u32; nn],
            pred_fwd: vec![false; nn],
            pred_flow: vec![0.0; nn],
            pred_cost: vec![big; nn],
            pred_real: vec![-1; nn],
            children: vec![Vec::new(); nn],
            depth: vec![1; nn],
            potential: vec![0.0; nn],
        };
        t.parent[root] = root as u32;
        t.depth[root] = 0;
        t.pred_cost[root] = 0.0;
        t.children[root] = (0..root as u32).collect();
        for (i, &a) in supply.iter().enumerate() {
            // source → root, so the node's arc points away from the node
            t.pred_fwd[i] = false;
            t.pred_flow[i] = a;
            t.potential[i] = -big;
        }
        for (j, &b) in demand.iter().enumerate() {
            // root → sink
            t.pred_fwd[n + j] = true;
            t.pred_flow[n + j] = b;
            t.potential[n + j] = big;
        }
        t
    }

    /// Ascend from `u` and `v` to their lowest common ancestor.
    fn apex(&self, mut u: u32, mut v: u32) -> u32 {
        while u != v {
            if self.depth[u as usize] >= self.depth[v as usize] {
                u = self.parent[u as usize];
            } else {
                v = self.parent[v as usize];
            }
        }
        u
    }

    /// Flow change sign on the pred arc of `x` when the pivot cycle is
    /// traversed through `x` toward the apex (`leg_from_source == false`)
    /// or away from the apex (`true`).
    fn leg_delta_sign(&self, x: u32, leg_from_source: bool) -> f64 {
        // Cycle orientation: entering arc u→v, then v → apex → u along the
        // tree. On the v-leg (walking v up) the traversal direction at node x
        // is x → parent(x); on the u-leg it is parent(x) → x.
        let along_parent_dir = self.pred_fwd[x as usize]; // arc oriented parent→x
        if leg_from_source {
            // traversal parent→x
            if along_parent_dir {
                1.0
            } else {
                -1.0
            }
        } else {
            // traversal x→parent
            if along_parent_dir {
                -1.0
            } else {
                1.0
            }
        }
    }
}

/// Solve the balanced transportation problem. `cost` is row-major n×m.
///
/// `supply` and `demand` must each be strictly positive and have equal totals
/// within `1e-9`; the residual is absorbed into the largest demand entry so
/// the network is exactly balanced.
pub fn solve_transportation(
    supply: &[f64],
    demand: &[f64],
    cost: &[f64],
) -> Result<SimplexSolution> {
    let n = supply.len();
    let m = demand.len();
    if n == 0 || m == 0 {
        return Err(CoreError::domain("transportation: empty marginal"));
    }
    if cost.len() != n * m {
        return Err(CoreError::mismatch(format!(
            "transportation: cost matrix has {} entries, expected {}×{}",
            cost.len(),
            n,
            m
        )));
    }
    for &a in supply {
        if !(a > 0.0) || !a.is_finite() {
            return Err(CoreError::domain("transportation: supplies must be positive"));
        }
    }
    for &b in demand {
        if !(b > 0.0) || !b.is_finite() {
            return Err(CoreError::domain("transportation: demands must be positive"));
        }
    }
    let total_supply: f64 = supply.iter().sum();
    let total_demand: f64 = demand.iter().sum();
    if (total_supply - total_demand).abs() > 1e-9 * total_supply.max(1.0) {
        return Err(CoreError::mismatch(format!(
            "transportation: unbalanced marginals ({total_supply:.12e} vs {total_demand:.12e})"
        )));
    }
    let mut demand = demand.to_vec();
    // absorb the (tiny) imbalance so conservation is exact in the network
    let imbalance = total_supply - total_demand;
    let jmax = demand
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(j, _)| j)
        .unwrap();
    demand[jmax] += imbalance;

    let max_cost = cost.iter().fold(0.0_f64, |acc, &c| acc.max(c.abs()));
    if !max_cost.is_finite() {
        return Err(CoreError::non_finite("transportation cost matrix"));
    }
    let big = 1.0 + (n + m) as f64 * (1.0 + max_cost);
    let tol = 1e-11 * (1.0 + max_cost);

    let mut tree = Tree::star(supply, &demand, big);
    let root = (n + m) as u32;
    let total_arcs = n * m;
    let block = 64.max((total_arcs as f64).sqrt() as usize);
    let pivot_cap = PIVOT_CAP_FACTOR * (n + m) + PIVOT_CAP_BASE;

    let mut cursor = 0usize;
    let mut pivots = 0usize;
    let mut cycle_up: Vec<u32> = Vec::new(); // u-leg scratch
    let mut cycle_dn: Vec<u32> = Vec::new(); // v-leg scratch

    loop {
        // --- entering arc: best within the first block that has a candidate
        let mut entering: Option<(usize, f64)> = None;
        let mut scanned = 0usize;
        while scanned < total_arcs {
            let chunk = block.min(total_arcs - scanned);
            let mut best = -tol;
            let mut best_arc = usize::MAX;
            for step in 0..chunk {
                let a = cursor + step;
                let a = if a >= total_arcs { a - total_arcs } else { a };
                let i = a / m;
                let j = a % m;
                let red = cost[a] + tree.potential[i] - tree.potential[n + j];
                if red < best {
                    best = red;
                    best_arc = a;
                }
            }
            cursor += chunk;
            if cursor >= total_arcs {
                cursor -= total_arcs;
            }
            scanned += chunk;
            if best_arc != usize::MAX {
                entering = Some((best_arc, best));
                break;
            }
        }
        let Some((arc, red)) = entering else {
            break; // optimal
        };

        pivots += 1;
        if pivots > pivot_cap {
            return Err(CoreError::Solver(format!(
                "network simplex exceeded pivot cap ({pivot_cap}) on a {n}×{m} problem; \
                 cost matrix may be degenerate"
            )));
        }

        let u = (arc / m) as u32; // source node
        let v = (n + arc % m) as u32; // sink node
        let apex = tree.apex(u, v);

        // --- ratio test along both legs
        cycle_up.clear();
        cycle_dn.clear();
        {
            let mut x = u;
            while x != apex {
                cycle_up.push(x);
                x = tree.parent[x as usize];
            }
            let mut x = v;
            while x != apex {
                cycle_dn.push(x);
                x = tree.parent[x as usize];
            }
        }
        let mut delta = f64::INFINITY;
        let mut leaving: Option<(u32, bool)> = None; // (node, on_u_leg)
        for &x in &cycle_up {
            if tree.leg_delta_sign(x, true) < 0.0 {
                let d = tree.pred_flow[x as usize];
                if d < delta {
                    delta = d;
                    leaving = Some((x, true));
                }
            }
        }
        for &x in &cycle_dn {
            if tree.leg_delta_sign(x, false) < 0.0 {
                let d = tree.pred_flow[x as usize];
                if d <= delta {
                    delta = d;
                    leaving = Some((x, false));
                }
            }
        }
        let Some((w_cut, on_u_leg)) = leaving else {
            // Both legs only gain flow: impossible in a balanced transportation
            // network (the cycle alternates source/sink layers).
            return Err(CoreError::Solver(
                "network simplex: unbounded pivot cycle (corrupt basis)".into(),
            ));
        };

        // --- apply flow update around the cycle
        if delta > 0.0 {
            for &x in &cycle_up {
                tree.pred_flow[x as usize] += delta * tree.leg_delta_sign(x, true);
            }
            for &x in &cycle_dn {
                tree.pred_flow[x as usize] += delta * tree.leg_delta_sign(x, false);
            }
        }

        // --- basis exchange: re-hang the cut subtree below the entering arc
        let (in_node, out_node, in_fwd) = if on_u_leg {
            // cut is on the u-leg ⇒ u is in the detached subtree; the entering
            // arc becomes u's pred arc, oriented u→v (node→parent).
            (u, v, false)
        } else {
            (v, u, true)
        };

        // path from in_node up to (and including) w_cut, inside the subtree
        let leg = if on_u_leg { &cycle_up } else { &cycle_dn };
        let cut_pos = leg.iter().position(|&x| x == w_cut).unwrap();
        let path = &leg[..=cut_pos]; // in_node, ..., w_cut

        // detach w_cut from its parent
        let old_parent = tree.parent[w_cut as usize];
        remove_child(&mut tree.children, old_parent, w_cut);

        // reverse pred arcs along the path: each node adopts its former
        // child's arc, orientation flipped
        for t in (1..path.len()).rev() {
            let node = path[t];
            let child = path[t - 1];
            let (flow, cost_a, real, fwd) = (
                tree.pred_flow[child as usize],
                tree.pred_cost[child as usize],
                tree.pred_real[child as usize],
                tree.pred_fwd[child as usize],
            );
            remove_child(&mut tree.children, node, child);
            tree.parent[node as usize] = child;
            tree.children[child as usize].push(node);
            tree.pred_flow[node as usize] = flow;
            tree.pred_cost[node as usize] = cost_a;
            tree.pred_real[node as usize] = real;
            tree.pred_fwd[node as usize] = !fwd;
        }

        // attach in_node under out_node via the entering arc
        tree.parent[in_node as usize] = out_node;
        tree.children[out_node as usize].push(in_node);
        tree.pred_flow[in_node as usize] = delta;
        tree.pred_cost[in_node as usize] = cost[arc];
        tree.pred_real[in_node as usize] = arc as i64;
        tree.pred_fwd[in_node as usize] = in_fwd;

        // --- refresh potentials and depths across the re-hung subtree
        let dpi = if on_u_leg { -red } else { red };
        let mut stack = vec![in_node];
        while let Some(x) = stack.pop() {
            let p = tree.parent[x as usize];
            tree.depth[x as usize] = tree.depth[p as usize] + 1;
            tree.potential[x as usize] += dpi;
            stack.extend_from_slice(&tree.children[x as usize]);
        }
        debug_assert!(
            (cost[arc] + tree.potential[u as usize] - tree.potential[v as usize]).abs()
                <= 1e-7 * (1.0 + big),
            "entering arc not priced to zero after pivot"
        );
    }

    // --- extract the coupling from the tree
    let mut arcs = Vec::new();
    let mut total_cost = 0.0;
    let mut artificial_flow = 0.0_f64;
    for node in 0..(n + m) as u32 {
        let flow = tree.pred_flow[node as usize];
        let real = tree.pred_real[node as usize];
        if real < 0 {
            artificial_flow = artificial_flow.max(flow.abs());
            continue;
        }
        if flow > 0.0 {
            let i = (real as usize) / m;
            let j = (real as usize) % m;
            arcs.push((i as u32, j as u32, flow));
            total_cost += flow * cost[real as usize];
        }
    }
    let _ = root;
    if artificial_flow > 1e-9 * total_supply.max(1.0) {
        return Err(CoreError::Solver(format!(
            "network simplex finished with residual artificial flow {artificial_flow:.3e}; \
             marginals were not actually balanced"
        )));
    }
    arcs.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    Ok(SimplexSolution {
        arcs,
        cost: total_cost,
        pivots,
    })
}

fn remove_child(children: &mut [Vec<u32>], parent: u32, child: u32) {
    let list = &mut children[parent as usize];
    let pos = list
        .iter()
        .position(|&c| c == child)
        .expect("tree corruption: child not registered with parent");
    list.swap_remove(pos);
}
