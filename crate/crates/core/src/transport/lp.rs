//! Exact discrete Kantorovich solver, used as an independent oracle for the
//! closed-form quantile transport.
//!
//! The transportation problem is solved by successive shortest paths on the
//! bipartite flow network with Johnson potentials, so every Dijkstra runs on
//! nonnegative reduced costs. Each augmentation saturates a source or sink,
//! which bounds the number of phases; the result is the exact optimum of the
//! LP up to floating-point arithmetic.

use crate::error::{Error, Result};
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Hard cap on the instance size; this solver is a cross-check oracle, not
/// a production OT engine.
pub const MAX_ATOMS: usize = 512;

const MASS_TOL: f64 = 1e-9;

/// One support pair of a transport plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanEntry {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// A discrete coupling between two weighted atom lists.
#[derive(Debug, Clone, Serialize)]
pub struct TransportPlan {
    pub entries: Vec<PlanEntry>,
    pub n_source: usize,
    pub n_target: usize,
}

impl TransportPlan {
    /// Mass shipped out of each source atom.
    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_source];
        for e in &self.entries {
            out[e.source] += e.weight;
        }
        out
    }

    /// Mass shipped into each target atom.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_target];
        for e in &self.entries {
            out[e.target] += e.weight;
        }
        out
    }

    /// Largest deviation of the marginals from the prescribed weights.
    pub fn marginal_defect(&self, source: &[f64], target: &[f64]) -> f64 {
        let rows = self.row_sums();
        let cols = self.column_sums();
        let d_r = rows
            .iter()
            .zip(source)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let d_c = cols
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        d_r.max(d_c)
    }

    /// Sparse triplet CSV (`source,target,weight`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,target,weight\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.source, e.target, e.weight));
        }
        out
    }
}

#[derive(PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance.
        other.dist.total_cmp(&self.dist)
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Solve the discrete Kantorovich problem exactly.
///
/// `cost` is row-major with `source.len()` rows and `target.len()` columns.
/// Returns the optimal plan and its cost. Weight vectors must carry equal
/// total mass within 1e-9.
pub fn kantorovich_lp(
    source: &[f64],
    target: &[f64],
    cost: &[f64],
    n_target_cols: usize,
) -> Result<(TransportPlan, f64)> {
    let m = source.len();
    let n = target.len();
    if n_target_cols != n || cost.len() != m * n {
        return Err(Error::ShapeMismatch(format!(
            "cost matrix has {} entries, want {m} x {n}",
            cost.len()
        )));
    }
    if m == 0 || n == 0 {
        return Err(Error::DegenerateMeasure("empty atom list".into()));
    }
    if m > MAX_ATOMS || n > MAX_ATOMS {
        return Err(Error::TooManyAtoms {
            limit: MAX_ATOMS,
            got: m.max(n),
        });
    }
    if source.iter().chain(target).any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::Domain("atom weights must be finite and >= 0".into()));
    }
    if cost.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
        return Err(Error::Domain("costs must be finite and >= 0".into()));
    }
    let mass_src: f64 = source.iter().sum();
    let mass_tgt: f64 = target.iter().sum();
    if (mass_src - mass_tgt).abs() > MASS_TOL {
        return Err(Error::MarginalMismatch {
            mass_a: mass_src,
            mass_b: mass_tgt,
            tol: MASS_TOL,
        });
    }

    // Node ids: sources 0..m, targets m..m+n.
    let mut flow = vec![0.0f64; m * n];
    let mut excess_src = source.to_vec();
    let mut excess_tgt = target.to_vec();
    let mut pot = vec![0.0f64; m + n];
    let residual_floor = 1e-15 * mass_src.max(1.0);

    let mut remaining: f64 = mass_src;
    let max_phases = 8 * (m + n) + 64;
    for _phase in 0..max_phases {
        if remaining <= residual_floor.max(1e-13 * mass_src) {
            break;
        }

        // Dijkstra from all unsaturated sources on reduced costs.
        let inf = f64::INFINITY;
        let mut dist = vec![inf; m + n];
        let mut parent = vec![usize::MAX; m + n];
        let mut done = vec![false; m + n];
        let mut heap = BinaryHeap::new();
        for (i, &e) in excess_src.iter().enumerate() {
            if e > residual_floor {
                dist[i] = 0.0;
                heap.push(HeapItem { dist: 0.0, node: i });
            }
        }
        while let Some(HeapItem { dist: d, node }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            if node < m {
                let i = node;
                for j in 0..n {
                    let rc = (cost[i * n + j] + pot[i] - pot[m + j]).max(0.0);
                    let nd = d + rc;
                    if nd < dist[m + j] {
                        dist[m + j] = nd;
                        parent[m + j] = i;
                        heap.push(HeapItem { dist: nd, node: m + j });
                    }
                }
            } else {
                let j = node - m;
                for i in 0..m {
                    if flow[i * n + j] > 0.0 {
                        let rc = (-cost[i * n + j] + pot[m + j] - pot[i]).max(0.0);
                        let nd = d + rc;
                        if nd < dist[i] {
                            dist[i] = nd;
                            parent[i] = m + j;
                            heap.push(HeapItem { dist: nd, node: i });
                        }
                    }
                }
            }
        }

        // Cheapest reachable unsaturated target.
        let mut best: Option<(usize, f64)> = None;
        for (j, &e) in excess_tgt.iter().enumerate() {
            if e > residual_floor && dist[m + j] < inf {
                if best.map_or(true, |(_, bd)| dist[m + j] < bd) {
                    best = Some((j, dist[m + j]));
                }
            }
        }
        let Some((j_star, d_star)) = best else {
            break; // Nothing reachable: remaining mass is roundoff dust.
        };

        // Bottleneck along the alternating path back to a seed source.
        let mut delta = excess_tgt[j_star];
        let mut node = m + j_star;
        loop {
            let p = parent[node];
            if node >= m {
                node = p; // forward arc p -> node, uncapacitated
            } else {
                delta = delta.min(flow[node * n + (p - m)]); // backward arc
                node = p;
            }
            if node < m && parent[node] == usize::MAX {
                break;
            }
        }
        delta = delta.min(excess_src[node]);
        if delta <= residual_floor {
            break;
        }

        // Apply the augmentation.
        let seed = node;
        let mut v = m + j_star;
        loop {
            let p = parent[v];
            if v >= m {
                flow[p * n + (v - m)] += delta;
            } else {
                flow[v * n + (p - m)] -= delta;
            }
            v = p;
            if v == seed && parent[v] == usize::MAX {
                break;
            }
        }
        excess_src[seed] -= delta;
        excess_tgt[j_star] -= delta;
        remaining -= delta;

        // Johnson potential update keeps reduced costs nonnegative.
        for (v, p) in pot.iter_mut().enumerate() {
            if dist[v] < inf {
                *p += dist[v].min(d_star);
            } else {
                *p += d_star;
            }
        }
    }

    let mut entries = Vec::new();
    let mut total_cost = 0.0;
    for i in 0..m {
        for j in 0..n {
            let f = flow[i * n + j];
            if f > residual_floor {
                entries.push(PlanEntry {
                    source: i,
                    target: j,
                    weight: f,
                });
                total_cost += f * cost[i * n + j];
            }
        }
    }
    let plan = TransportPlan {
        entries,
        n_source: m,
        n_target: n,
    };
    Ok((plan, total_cost))
}
