//! Optimal transport on the quotient interval and between orbit
//! conditionals.
//!
//! The quotient of a cohomogeneity-one action is one-dimensional, so the
//! optimal map between two quotient measures is the monotone rearrangement
//! T = Q_1 o F_0 in closed form. The exact Kantorovich LP solver in [`lp`]
//! exists purely as an independent oracle against that closed form.
//!
//! Displacement interpolation follows particles along horizontal geodesics,
//! T_t(u) = u + t grad psi(u), tracking both the quotient stretch
//! dT_t/du and the full transport Jacobian on M,
//!
//!   J(t, u) = dT_t/du * (f(T_t(u)) / f(u))^m,
//!
//! whose N-th root delta = J^{1/N} feeds the Riccati comparison and the
//! convexity functionals.

pub mod lp;

pub use lp::{kantorovich_lp, PlanEntry, TransportPlan};

use crate::error::{Error, Result};
use crate::geometry::WarpedManifold;
use crate::measures::QuotientMeasure;
use crate::quad;
use serde::Serialize;

/// Quantile sample count for Wasserstein quadrature.
pub const QUANTILE_SAMPLES: usize = 4096;

/// Jacobian threshold below which a path is declared caustic.
pub const CAUSTIC_FLOOR: f64 = 1e-12;

/// Monotone transport map on the quotient with its Monge potential.
///
/// Invariants: `map` is nondecreasing, `map[i] = nodes[i] + grad[i]`, and
/// `potential` is the trapezoid integral of `grad` gauged to zero at the
/// first node.
#[derive(Debug, Clone)]
pub struct MongeMap {
    nodes: Vec<f64>,
    map: Vec<f64>,
    grad: Vec<f64>,
    potential: Vec<f64>,
    stretch: Vec<f64>,
}

impl MongeMap {
    fn assemble(nodes: Vec<f64>, map: Vec<f64>, stretch: Vec<f64>) -> Self {
        let grad: Vec<f64> = map.iter().zip(&nodes).map(|(t, u)| t - u).collect();
        let potential = quad::cumulative_trapezoid(&nodes, &grad);
        Self {
            nodes,
            map,
            grad,
            potential,
            stretch,
        }
    }

    pub fn identity(nodes: &[f64]) -> Self {
        Self::assemble(nodes.to_vec(), nodes.to_vec(), vec![1.0; nodes.len()])
    }

    /// Rigid translation by `shift`.
    pub fn translation(nodes: &[f64], shift: f64) -> Self {
        Self::assemble(
            nodes.to_vec(),
            nodes.iter().map(|u| u + shift).collect(),
            vec![1.0; nodes.len()],
        )
    }

    /// The map with the potential scaled by `theta`:
    /// T_theta(u) = u + theta grad psi(u).
    pub fn scaled(&self, theta: f64) -> Self {
        let map = self
            .nodes
            .iter()
            .zip(&self.grad)
            .map(|(u, g)| u + theta * g)
            .collect();
        let stretch = self
            .stretch
            .iter()
            .map(|s| 1.0 + theta * (s - 1.0))
            .collect();
        Self::assemble(self.nodes.clone(), map, stretch)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn map(&self) -> &[f64] {
        &self.map
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// dT/du at the nodes.
    pub fn stretch(&self) -> &[f64] {
        &self.stretch
    }

    pub fn is_monotone(&self) -> bool {
        self.map.windows(2).all(|w| w[1] >= w[0])
    }

    /// Image of an arbitrary point by linear interpolation of the node map.
    pub fn apply(&self, u: f64) -> f64 {
        if u <= self.nodes[0] {
            return self.map[0] + (u - self.nodes[0]);
        }
        if u >= *self.nodes.last().unwrap() {
            return self.map.last().unwrap() + (u - self.nodes.last().unwrap());
        }
        let i = self.nodes.partition_point(|&n| n <= u);
        let w = (u - self.nodes[i - 1]) / (self.nodes[i] - self.nodes[i - 1]);
        self.map[i - 1] * (1.0 - w) + self.map[i] * w
    }

    /// Small-theta admissibility: the scaled map must stay monotone, the
    /// 1-D stand-in for the compactly supported C^2-smallness that makes a
    /// potential d^2/2-convex.
    pub fn certify_scaling(&self, theta: f64) -> Result<()> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::Domain(format!("theta = {theta} outside (0, 1]")));
        }
        let scaled = self.scaled(theta);
        if scaled.is_monotone() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "scaled map loses monotonicity at theta = {theta}"
            )))
        }
    }
}

/// Smallest contiguous index range holding every density value above a
/// relative floor; returns `None` for an all-zero density.
pub(crate) fn support_hull(density: &[f64]) -> Option<(usize, usize)> {
    let peak = density.iter().fold(0.0f64, |a, &b| a.max(b));
    if !(peak > 0.0) {
        return None;
    }
    let floor = 1e-13 * peak;
    let lo = density.iter().position(|&d| d > floor)?;
    let hi = density.iter().rposition(|&d| d > floor)?;
    Some((lo, hi))
}

/// Monotone rearrangement between two quotient measures: T = Q_1 o F_0,
/// with the potential recovered by integrating grad psi = T - id.
///
/// The node-wise stretch dT/du comes from the change-of-variables identity
/// q_1(T(u)) T'(u) = q_0(u) rather than finite differences of T, which would
/// amplify quantile interpolation noise. Outside the support hull of mu0 the
/// quantile composition is meaningless (the CDF is flat), so the map is
/// extended from the hull edges with the edge stretch; this keeps it
/// strictly monotone and transports the edge ramp cells consistently.
pub fn quantile_monge(mu0: &QuotientMeasure, mu1: &QuotientMeasure) -> Result<MongeMap> {
    let f0 = mu0.quantile_fn()?;
    let q1 = mu1.quantile_fn()?;
    let nodes = mu0.nodes().to_vec();
    let (lo, hi) = support_hull(mu0.density()).ok_or_else(|| {
        Error::DegenerateMeasure("source measure has empty support".into())
    })?;

    let mut map = vec![0.0; nodes.len()];
    for i in lo..=hi {
        map[i] = q1.quantile(f0.cdf_at(nodes[i]));
    }

    let mass0 = mu0.mass();
    let mass1 = mu1.mass();
    let peak0 = mu0.density().iter().fold(0.0f64, |a, &b| a.max(b)) / mass0;
    let floor0 = 1e-13 * peak0;
    let mut stretch = vec![f64::NAN; nodes.len()];
    for i in lo..=hi {
        let d0 = mu0.density()[i] / mass0;
        let d1 = mu1.density_at(map[i]) / mass1;
        if d0 > floor0 && d1 > 0.0 {
            stretch[i] = d0 / d1;
        }
    }
    // Fill masked hull slots from the nearest well-defined neighbor.
    let valid: Vec<usize> = (lo..=hi).filter(|&i| !stretch[i].is_nan()).collect();
    if valid.is_empty() {
        return Err(Error::DegenerateMeasure(
            "no overlap between the map's source density and target density".into(),
        ));
    }
    for i in lo..=hi {
        if stretch[i].is_nan() {
            let j = *valid
                .iter()
                .min_by_key(|&&j| (j as isize - i as isize).unsigned_abs())
                .unwrap();
            stretch[i] = stretch[j];
        }
    }
    // Rigidly extend beyond the hull with the edge stretch.
    for i in (0..lo).rev() {
        stretch[i] = stretch[lo];
        map[i] = map[lo] - stretch[lo] * (nodes[lo] - nodes[i]);
    }
    for i in hi + 1..nodes.len() {
        stretch[i] = stretch[hi];
        map[i] = map[hi] + stretch[hi] * (nodes[i] - nodes[hi]);
    }

    let out = MongeMap::assemble(nodes, map, stretch);
    debug_assert!(out.is_monotone());
    Ok(out)
}

/// W2 squared by quantile quadrature with `n` midpoint samples.
pub fn w2_squared_with_samples(
    mu0: &QuotientMeasure,
    mu1: &QuotientMeasure,
    n: usize,
) -> Result<f64> {
    let q0 = mu0.quantile_fn()?;
    let q1 = mu1.quantile_fn()?;
    let mut acc = 0.0;
    for k in 0..n {
        let alpha = (k as f64 + 0.5) / n as f64;
        acc += (q1.quantile(alpha) - q0.quantile(alpha)).powi(2);
    }
    Ok(acc / n as f64)
}

/// Wasserstein-2 distance between quotient measures.
pub fn w2_distance(mu0: &QuotientMeasure, mu1: &QuotientMeasure) -> Result<f64> {
    Ok(w2_squared_with_samples(mu0, mu1, QUANTILE_SAMPLES)?.sqrt())
}

/// Exact squared W2 between two weighted atom lists (monotone matching by a
/// merged quantile sweep). Total masses must agree within 1e-9.
pub fn w2_atoms_squared(xs: &[(f64, f64)], ys: &[(f64, f64)]) -> Result<f64> {
    let mass = |zs: &[(f64, f64)]| zs.iter().map(|z| z.1).sum::<f64>();
    let (ma, mb) = (mass(xs), mass(ys));
    if (ma - mb).abs() > 1e-9 {
        return Err(Error::MarginalMismatch {
            mass_a: ma,
            mass_b: mb,
            tol: 1e-9,
        });
    }
    if !(ma > 0.0) {
        return Err(Error::DegenerateMeasure("atom lists carry no mass".into()));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|p, q| p.0.total_cmp(&q.0));
    b.sort_by(|p, q| p.0.total_cmp(&q.0));

    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut cost = 0.0;
    loop {
        let step = ra.min(rb);
        cost += step * (a[i].0 - b[j].0).powi(2);
        ra -= step;
        rb -= step;
        if ra <= 0.0 {
            i += 1;
            if i >= a.len() {
                break;
            }
            ra = a[i].1;
        }
        if rb <= 0.0 {
            j += 1;
            if j >= b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    Ok(cost / ma)
}

/// Midpoint-quantile atomization: `n` equal-weight atoms at Q((k+1/2)/n).
pub fn atomize(mu: &QuotientMeasure, n: usize) -> Result<Vec<(f64, f64)>> {
    let q = mu.quantile_fn()?;
    let w = 1.0 / n as f64;
    Ok((0..n)
        .map(|k| (q.quantile((k as f64 + 0.5) / n as f64), w))
        .collect())
}

/// A Wasserstein geodesic materialized on a time grid.
///
/// Particles sit at the support nodes of the base measure; positions move
/// affinely, densities follow the 1-D change of variables, and `jacobians`
/// holds the full M-Jacobian described at the module level.
#[derive(Debug, Clone)]
pub struct DisplacementPath {
    times: Vec<f64>,
    particles: Vec<f64>,
    base_density: Vec<f64>,
    grad: Vec<f64>,
    base_potential: Vec<f64>,
    positions: Vec<Vec<f64>>,
    densities: Vec<Vec<f64>>,
    jacobians: Vec<Vec<f64>>,
    fiber_dim: u32,
}

impl DisplacementPath {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn particles(&self) -> &[f64] {
        &self.particles
    }

    pub fn base_density(&self) -> &[f64] {
        &self.base_density
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn base_potential(&self) -> &[f64] {
        &self.base_potential
    }

    pub fn positions(&self, k: usize) -> &[f64] {
        &self.positions[k]
    }

    pub fn densities(&self, k: usize) -> &[f64] {
        &self.densities[k]
    }

    pub fn jacobians(&self, k: usize) -> &[f64] {
        &self.jacobians[k]
    }

    /// delta(t_k, i) = J^{1/N}.
    pub fn delta(&self, k: usize, i: usize) -> f64 {
        self.jacobians[k][i].powf(1.0 / (self.fiber_dim + 1) as f64)
    }

    /// Index of `t` in the time grid, within 1e-12.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12)
    }

    /// The interpolated measure at time index `k` as a standalone object.
    pub fn measure_at(&self, k: usize) -> QuotientMeasure {
        QuotientMeasure::new(self.positions[k].clone(), self.densities[k].clone())
            .expect("path snapshots are valid measures by construction")
    }

    /// Evolved potentials psi_t at the particle positions by the Hopf-Lax
    /// formula, one vector per time node. Quadratic in the particle count;
    /// intended for validation and export, not the sampling loop.
    pub fn hopf_lax_potentials(&self) -> Vec<Vec<f64>> {
        self.times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                hopf_lax_at(&self.particles, &self.base_potential, &self.positions[k], t)
            })
            .collect()
    }

    pub fn export(&self) -> PathExport {
        PathExport {
            times: self.times.clone(),
            nodes: self.positions.clone(),
            densities: self.densities.clone(),
            jacobians: self.jacobians.clone(),
        }
    }
}

/// Plot-ready serialization of a path: one row of nodes, densities, and
/// Jacobians per time node.
#[derive(Debug, Clone, Serialize)]
pub struct PathExport {
    pub times: Vec<f64>,
    pub nodes: Vec<Vec<f64>>,
    pub densities: Vec<Vec<f64>>,
    pub jacobians: Vec<Vec<f64>>,
}

/// Push the base measure along T_t(u) = u + t grad psi(u) for every t in
/// `t_grid`, which must start at 0, end at 1, and strictly increase.
///
/// Particles outside the effective support whose images collapse onto a
/// flat stretch of the map are trimmed at the edges; an interior collapse is
/// a caustic. Any particle leaving the principal stratum aborts the path.
pub fn displacement_interpolate(
    mu0: &QuotientMeasure,
    map: &MongeMap,
    t_grid: &[f64],
    mf: &WarpedManifold,
) -> Result<DisplacementPath> {
    if mu0.nodes() != map.nodes() {
        return Err(Error::ShapeMismatch(
            "map was not built on the measure's node set".into(),
        ));
    }
    if t_grid.len() < 2
        || t_grid[0] != 0.0
        || (*t_grid.last().unwrap() - 1.0).abs() > 1e-12
        || !quad::is_strictly_increasing(t_grid)
    {
        return Err(Error::Domain(
            "time grid must strictly increase from 0 to 1".into(),
        ));
    }

    // Particles cover the support hull plus one flanking node per side: the
    // flanks bound the edge ramp cells, so every snapshot carries the full
    // mass; nodes further out are massless and dropped.
    let n = mu0.nodes().len();
    let (hull_lo, hull_hi) = support_hull(mu0.density()).ok_or_else(|| {
        Error::DegenerateMeasure("measure has empty support".into())
    })?;
    let lo = hull_lo.saturating_sub(1);
    let hi = (hull_hi + 1).min(n - 1);
    if hi - lo + 1 < 2 {
        return Err(Error::DegenerateMeasure(
            "fewer than two particles in the support hull".into(),
        ));
    }

    let particles: Vec<f64> = mu0.nodes()[lo..=hi].to_vec();
    let mass0 = mu0.mass();
    let base_density: Vec<f64> = mu0.density()[lo..=hi].iter().map(|d| d / mass0).collect();
    let grad: Vec<f64> = map.grad()[lo..=hi].to_vec();
    let stretch: Vec<f64> = map.stretch()[lo..=hi].to_vec();
    let base_potential = quad::cumulative_trapezoid(&particles, &grad);

    let m = mf.fiber_dim() as i32;
    let (span_lo, span_hi) = mf.principal_span();
    let mut positions = Vec::with_capacity(t_grid.len());
    let mut densities = Vec::with_capacity(t_grid.len());
    let mut jacobians = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut pos = Vec::with_capacity(particles.len());
        let mut dens = Vec::with_capacity(particles.len());
        let mut jac = Vec::with_capacity(particles.len());
        for (i, &u) in particles.iter().enumerate() {
            let y = u + t * grad[i];
            if y < span_lo || y > span_hi {
                return Err(Error::ParticleEscape {
                    particle: lo + i,
                    time: t,
                    u: y,
                });
            }
            let s = 1.0 + t * (stretch[i] - 1.0);
            let full = s * (mf.warp(y) / mf.warp(u)).powi(m);
            if full <= CAUSTIC_FLOOR || s <= CAUSTIC_FLOOR {
                return Err(Error::Caustic {
                    particle: lo + i,
                    time: t,
                    jacobian: full,
                });
            }
            pos.push(y);
            dens.push(base_density[i] / s);
            jac.push(full);
        }
        if !quad::is_strictly_increasing(&pos) {
            let i = pos.windows(2).position(|w| w[0] >= w[1]).unwrap();
            return Err(Error::Caustic {
                particle: lo + i + 1,
                time: t,
                jacobian: 0.0,
            });
        }
        positions.push(pos);
        densities.push(dens);
        jacobians.push(jac);
    }

    Ok(DisplacementPath {
        times: t_grid.to_vec(),
        particles,
        base_density,
        grad,
        base_potential,
        positions,
        densities,
        jacobians,
        fiber_dim: mf.fiber_dim(),
    })
}

/// Full transport Jacobian J(t, u) and its root delta = J^{1/N} for a
/// particle start node of the path.
pub fn transport_jacobian(
    path: &DisplacementPath,
    t: f64,
    u: f64,
    mf: &WarpedManifold,
) -> Result<(f64, f64)> {
    let k = path
        .time_index(t)
        .ok_or_else(|| Error::Domain(format!("t = {t} is not on the path's time grid")))?;
    let i = path
        .particles
        .iter()
        .position(|&p| (p - u).abs() <= 1e-12)
        .ok_or_else(|| Error::Domain(format!("u = {u} is not a particle start node")))?;
    let jac = path.jacobians[k][i];
    if jac <= CAUSTIC_FLOOR {
        return Err(Error::Caustic {
            particle: i,
            time: t,
            jacobian: jac,
        });
    }
    Ok((jac, jac.powf(1.0 / mf.total_dim() as f64)))
}

/// Hopf-Lax viscosity solution of d psi/dt + |grad psi|^2/2 = 0 at the
/// source nodes themselves.
pub fn hopf_lax_potential(nodes: &[f64], psi0: &[f64], t: f64) -> Result<Vec<f64>> {
    if nodes.len() != psi0.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} nodes vs {} potential values",
            nodes.len(),
            psi0.len()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
    }
    Ok(hopf_lax_at(nodes, psi0, nodes, t))
}

/// Hopf-Lax infimal convolution evaluated at arbitrary query points:
/// psi_t(x) = min over source nodes y of psi0(y) + (x - y)^2 / (2 t).
pub fn hopf_lax_at(nodes: &[f64], psi0: &[f64], queries: &[f64], t: f64) -> Vec<f64> {
    if t <= 0.0 {
        // Initial datum, sampled at the queries by nearest linear interp.
        return queries
            .iter()
            .map(|&x| {
                if x <= nodes[0] {
                    psi0[0]
                } else if x >= *nodes.last().unwrap() {
                    *psi0.last().unwrap()
                } else {
                    let i = nodes.partition_point(|&n| n <= x);
                    let w = (x - nodes[i - 1]) / (nodes[i] - nodes[i - 1]);
                    psi0[i - 1] * (1.0 - w) + psi0[i] * w
                }
            })
            .collect();
    }
    queries
        .iter()
        .map(|&x| {
            nodes
                .iter()
                .zip(psi0)
                .map(|(&y, &p)| p + (x - y) * (x - y) / (2.0 * t))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Equivariance report for a lifted transport map on M (single fiber
/// dimension): the lift must commute with fiber rotations and send the
/// fiber-uniform conditional at u to the one at T(u).
#[derive(Debug, Clone, Serialize)]
pub struct OrbitCheckReport {
    /// max over samples of the distance between lift(g x) and g lift(x).
    pub max_commutator: f64,
    /// max deviation of an image fiber from a single rigidly rotated orbit.
    pub max_conditional_defect: f64,
}

impl OrbitCheckReport {
    pub fn max_violation(&self) -> f64 {
        self.max_commutator.max(self.max_conditional_defect)
    }
}

/// Check a lifted map `lift(u, theta) -> (u', theta')` against sampled fiber
/// rotations. A map lifted from quotient data is independent of theta, so
/// both defects vanish identically; a theta-dependent lift is reported.
pub fn orbit_transport_check(
    mf: &WarpedManifold,
    lift: impl Fn(f64, f64) -> (f64, f64),
    orbit_samples: &[f64],
    rotations: &[f64],
    fiber_samples: usize,
) -> OrbitCheckReport {
    let period = mf.fiber_period();
    let wrap = |d: f64| {
        let r = d.rem_euclid(period);
        r.min(period - r)
    };
    let mut max_commutator: f64 = 0.0;
    let mut max_conditional: f64 = 0.0;
    for &u in orbit_samples {
        let mut image_u = f64::NAN;
        let mut image_shift = f64::NAN;
        for j in 0..fiber_samples {
            let theta = period * j as f64 / fiber_samples as f64;
            let (tu, ttheta) = lift(u, theta);
            // Fibers must map onto fibers with a common rotation offset.
            if j == 0 {
                image_u = tu;
                image_shift = ttheta - theta;
            } else {
                max_conditional = max_conditional
                    .max((tu - image_u).abs())
                    .max(wrap(ttheta - theta - image_shift));
            }
            for &phi in rotations {
                let (au, atheta) = lift(u, (theta + phi).rem_euclid(period));
                let (bu, btheta) = lift(u, theta);
                max_commutator = max_commutator
                    .max((au - bu).abs())
                    .max(wrap(atheta - (btheta + phi)));
            }
        }
    }
    OrbitCheckReport {
        max_commutator,
        max_conditional_defect: max_conditional,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::smooth_bump;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn uniform_band(lo: f64, hi: f64, grid_lo: f64, grid_hi: f64, n: usize) -> QuotientMeasure {
        let nodes = quad::uniform_nodes(grid_lo, grid_hi, n);
        // Tolerant band membership so that on-grid band edges are hit
        // identically after fp node placement.
        QuotientMeasure::from_fn(&nodes, |u| {
            if u >= lo - 1e-9 && u <= hi + 1e-9 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    #[test]
    fn quantile_monge_translation() {
        // h = 0.005 divides 0.3, so both bands sit exactly on nodes.
        let mu0 = uniform_band(0.0, 1.0, -0.5, 2.0, 501);
        let mu1 = uniform_band(0.3, 1.3, -0.5, 2.0, 501);
        let map = quantile_monge(&mu0, &mu1).unwrap();
        for (i, &u) in map.nodes().iter().enumerate() {
            if (0.05..=0.95).contains(&u) {
                assert_abs_diff_eq!(map.map()[i], u + 0.3, epsilon = 1e-9);
                assert_abs_diff_eq!(map.grad()[i], 0.3, epsilon = 1e-9);
            }
        }
    }

    /// Exactly uniform measure whose grid spans exactly its support, so the
    /// discretized CDF has no edge ramps.
    fn uniform_on(lo: f64, hi: f64, n: usize) -> QuotientMeasure {
        let nodes = quad::uniform_nodes(lo, hi, n);
        QuotientMeasure::from_fn(&nodes, |_| 1.0)
            .unwrap()
            .normalized()
            .unwrap()
    }

    #[test]
    fn quantile_monge_identity_and_shrink() {
        let mu = uniform_on(0.0, 1.0, 401);
        let id = quantile_monge(&mu, &mu).unwrap();
        for (i, &u) in id.nodes().iter().enumerate() {
            assert_abs_diff_eq!(id.map()[i], u, epsilon = 1e-12);
            // The potential is constant (gauge fixed at zero).
            assert_abs_diff_eq!(id.potential()[i], 0.0, epsilon = 1e-12);
        }

        let half = uniform_on(0.0, 0.5, 401);
        let shrink = quantile_monge(&mu, &half).unwrap();
        for (i, &u) in shrink.nodes().iter().enumerate() {
            assert_abs_diff_eq!(shrink.map()[i], u / 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn quantile_monge_matches_lp_cost_on_shrink() {
        let mu = uniform_band(0.0, 1.0, -0.5, 1.5, 1601);
        let half = uniform_band(0.0, 0.5, -0.5, 1.5, 1601);
        let atoms0 = atomize(&mu, 64).unwrap();
        let atoms1 = atomize(&half, 64).unwrap();
        let w: Vec<f64> = atoms0.iter().map(|a| a.1).collect();
        let cost: Vec<f64> = atoms0
            .iter()
            .flat_map(|a| atoms1.iter().map(move |b| (a.0 - b.0).powi(2)))
            .collect();
        let (_, lp_cost) = kantorovich_lp(&w, &w, &cost, 64).unwrap();
        let sweep = w2_atoms_squared(&atoms0, &atoms1).unwrap();
        assert_abs_diff_eq!(lp_cost, sweep, epsilon = 1e-12);
        // Continuum value for T(u) = u/2 on uniform [0,1]: int (u/2)^2 = 1/12.
        assert_abs_diff_eq!(lp_cost, 1.0 / 12.0, epsilon = 1e-4);
    }

    #[test]
    fn w2_distance_between_shifted_uniforms() {
        let mu0 = uniform_band(0.0, 1.0, -1.0, 3.0, 801);
        let mu1 = uniform_band(0.7, 1.7, -1.0, 3.0, 801);
        assert_abs_diff_eq!(w2_distance(&mu0, &mu1).unwrap(), 0.7, epsilon = 1e-9);
        assert_abs_diff_eq!(w2_distance(&mu0, &mu0).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn displacement_path_translation_endpoints_and_midpoint() {
        let mf = WarpedManifold::cylinder(-1.0, 3.0);
        let mu0 = uniform_band(0.0, 1.0, -0.5, 2.0, 501);
        let mu1 = uniform_band(0.3, 1.3, -0.5, 2.0, 501);
        let map = quantile_monge(&mu0, &mu1).unwrap();
        let t_grid = quad::uniform_nodes(0.0, 1.0, 9);
        let path = displacement_interpolate(&mu0, &map, &t_grid, &mf).unwrap();

        // t = 0 reproduces mu0 exactly on the surviving particles.
        assert_abs_diff_eq!(
            w2_distance(&path.measure_at(0), &mu0).unwrap(),
            0.0,
            epsilon = 1e-9
        );
        // t = 1 reproduces mu1.
        let end = path.measure_at(8);
        assert!(w2_distance(&end, &mu1).unwrap() <= 1e-9);
        // t = 0.5 is the uniform band on [0.15, 1.15].
        let mid = path.measure_at(4);
        let expect = uniform_band(0.15, 1.15, -0.5, 2.0, 501);
        assert!(w2_distance(&mid, &expect).unwrap() <= 1e-9);
        // Mass is conserved along the path.
        for k in 0..9 {
            assert_abs_diff_eq!(path.measure_at(k).mass(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn displacement_path_geodesic_property() {
        let mf = WarpedManifold::cylinder(-2.0, 4.0);
        let nodes = quad::uniform_nodes(-1.0, 3.0, 1025);
        let mu0 = QuotientMeasure::from_fn(&nodes, |u| smooth_bump(u, 0.2, 0.6))
            .unwrap()
            .normalized()
            .unwrap();
        let mu1 = QuotientMeasure::from_fn(&nodes, |u| smooth_bump(u, 1.7, 0.9))
            .unwrap()
            .normalized()
            .unwrap();
        let map = quantile_monge(&mu0, &mu1).unwrap();
        let t_grid = quad::uniform_nodes(0.0, 1.0, 9);
        let path = displacement_interpolate(&mu0, &map, &t_grid, &mf).unwrap();
        let w01 = w2_distance(&path.measure_at(0), &path.measure_at(8)).unwrap();
        for s in 0..9 {
            for t in (s + 1)..9 {
                let w = w2_distance(&path.measure_at(s), &path.measure_at(t)).unwrap();
                let expect = (t_grid[t] - t_grid[s]) * w01;
                assert!(
                    (w - expect).abs() <= 1e-6,
                    "geodesic defect {} at (s, t) = ({s}, {t})",
                    (w - expect).abs()
                );
            }
        }
    }

    #[test]
    fn displacement_path_escape_is_reported() {
        let mf = WarpedManifold::cylinder(-0.1, 1.2);
        let mu0 = uniform_band(0.0, 1.0, 0.0, 1.0, 101);
        let map = MongeMap::translation(mu0.nodes(), 0.5);
        let t_grid = quad::uniform_nodes(0.0, 1.0, 5);
        match displacement_interpolate(&mu0, &map, &t_grid, &mf) {
            Err(Error::ParticleEscape { time, .. }) => assert!(time > 0.0),
            other => panic!("expected escape, got {other:?}"),
        }
    }

    #[test]
    fn transport_jacobian_translation_on_plane() {
        // Fiber-volume ratio (u + t c)/u for a rigid shift on f(u) = u.
        let mf = WarpedManifold::plane(6.0);
        let nodes = quad::uniform_nodes(1.0, 2.0, 101);
        let mu0 = QuotientMeasure::from_fn(&nodes, |_| 1.0)
            .unwrap()
            .normalized()
            .unwrap();
        let shift = 0.8;
        let map = MongeMap::translation(mu0.nodes(), shift);
        let t_grid = quad::uniform_nodes(0.0, 1.0, 5);
        let path = displacement_interpolate(&mu0, &map, &t_grid, &mf).unwrap();
        for &(t, u) in &[(0.25, 1.0), (0.5, 1.5), (1.0, 2.0)] {
            let (jac, delta) = transport_jacobian(&path, t, u, &mf).unwrap();
            let expect = (u + t * shift) / u;
            assert_abs_diff_eq!(jac, expect, epsilon = 1e-12);
            assert_abs_diff_eq!(delta, expect.sqrt(), epsilon = 1e-12);
        }

        // Identity map: jacobian one everywhere.
        let id = MongeMap::identity(mu0.nodes());
        let path = displacement_interpolate(&mu0, &id, &t_grid, &mf).unwrap();
        let (jac, _) = transport_jacobian(&path, 0.5, 1.5, &mf).unwrap();
        assert_abs_diff_eq!(jac, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn transport_jacobian_matches_volume_ratio_quadrature() {
        // J = lim vol(T(B_eps))/vol(B_eps); check against the band
        // [u - eps, u + eps] under a rigid shift on the plane, with the
        // band volume computed by direct quadrature of the density f(u) = u.
        let mf = WarpedManifold::plane(6.0);
        let (u, shift, t) = (1.5, 0.8, 1.0);
        let jac_expect = (u + t * shift) / u;
        let vol = |a: f64, b: f64| {
            let nodes = quad::uniform_nodes(a, b, 257);
            let vals: Vec<f64> = nodes
                .iter()
                .map(|&x| mf.quotient_volume_density(x).unwrap())
                .collect();
            quad::trapezoid(&nodes, &vals)
        };
        for eps in [1e-2, 1e-3] {
            let ratio = vol(u - eps + t * shift, u + eps + t * shift) / vol(u - eps, u + eps);
            assert!((ratio - jac_expect).abs() <= 2.0 * eps);
        }
    }

    #[test]
    fn caustic_detected_when_jacobian_collapses() {
        let mf = WarpedManifold::cylinder(-4.0, 4.0);
        let nodes = quad::uniform_nodes(-1.0, 1.0, 101);
        let mu0 = QuotientMeasure::from_fn(&nodes, |_| 1.0)
            .unwrap()
            .normalized()
            .unwrap();
        // grad psi = -u collapses everything onto the origin at t = 1.
        let map = MongeMap::assemble(
            nodes.clone(),
            vec![0.0; nodes.len()],
            vec![0.0; nodes.len()],
        );
        let t_grid = quad::uniform_nodes(0.0, 1.0, 5);
        match displacement_interpolate(&mu0, &map, &t_grid, &mf) {
            Err(Error::Caustic { time, .. }) => assert_abs_diff_eq!(time, 1.0),
            other => panic!("expected caustic, got {other:?}"),
        }
    }

    #[test]
    fn hopf_lax_examples() {
        let nodes = quad::uniform_nodes(-8.0, 8.0, 1601);
        // Linear datum a u: psi_t(u) = a u - a^2 t / 2 wherever the
        // minimizer u - a t stays on the grid.
        let a = 0.7;
        let psi0: Vec<f64> = nodes.iter().map(|&u| a * u).collect();
        let t = 0.9;
        let psi_t = hopf_lax_potential(&nodes, &psi0, t).unwrap();
        for (i, &u) in nodes.iter().enumerate() {
            if u.abs() <= 4.0 {
                assert_abs_diff_eq!(psi_t[i], a * u - a * a * t / 2.0, epsilon = 1e-4);
            }
        }

        // Constant datum is a fixed point.
        let c: Vec<f64> = vec![3.25; nodes.len()];
        let fixed = hopf_lax_potential(&nodes, &c, 0.6).unwrap();
        for &v in &fixed {
            assert_abs_diff_eq!(v, 3.25, epsilon = 1e-12);
        }

        // Quadratic datum u^2/2 at t = 1 halves: psi_1(u) = u^2/4.
        let quadratic: Vec<f64> = nodes.iter().map(|&u| u * u / 2.0).collect();
        let psi1 = hopf_lax_potential(&nodes, &quadratic, 1.0).unwrap();
        for (i, &u) in nodes.iter().enumerate() {
            if u.abs() <= 3.0 {
                assert_abs_diff_eq!(psi1[i], u * u / 4.0, epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn hopf_lax_semigroup_for_convex_datum() {
        let nodes = quad::uniform_nodes(-6.0, 6.0, 1201);
        let psi0: Vec<f64> = nodes.iter().map(|&u| u * u / 2.0).collect();
        let (s, t) = (0.3, 0.5);
        let two_step =
            hopf_lax_potential(&nodes, &hopf_lax_potential(&nodes, &psi0, s).unwrap(), t).unwrap();
        let one_step = hopf_lax_potential(&nodes, &psi0, s + t).unwrap();
        for (i, &u) in nodes.iter().enumerate() {
            if u.abs() <= 2.5 {
                assert!(
                    (two_step[i] - one_step[i]).abs() <= 1e-4,
                    "semigroup defect {} at u = {u}",
                    (two_step[i] - one_step[i]).abs()
                );
            }
        }
    }

    #[test]
    fn path_potentials_follow_characteristics() {
        // psi_t(T_t(u)) = psi(u) + t |grad psi(u)|^2 / 2 before caustics.
        let mf = WarpedManifold::cylinder(-3.0, 5.0);
        let nodes = quad::uniform_nodes(-1.0, 3.0, 801);
        let mu0 = QuotientMeasure::from_fn(&nodes, |u| smooth_bump(u, 0.4, 0.8))
            .unwrap()
            .normalized()
            .unwrap();
        let mu1 = QuotientMeasure::from_fn(&nodes, |u| smooth_bump(u, 1.5, 0.8))
            .unwrap()
            .normalized()
            .unwrap();
        let map = quantile_monge(&mu0, &mu1).unwrap();
        let t_grid = quad::uniform_nodes(0.0, 1.0, 5);
        let path = displacement_interpolate(&mu0, &map, &t_grid, &mf).unwrap();
        let potentials = path.hopf_lax_potentials();
        for (k, &t) in path.times().iter().enumerate().skip(1) {
            for i in 0..path.particles().len() {
                let expect = path.base_potential()[i] + t * path.grad()[i].powi(2) / 2.0;
                assert!(
                    (potentials[k][i] - expect).abs() <= 1e-4,
                    "HJ characteristic defect {} at (k, i) = ({k}, {i})",
                    (potentials[k][i] - expect).abs()
                );
            }
        }
    }

    #[test]
    fn orbit_check_quotient_lift_commutes() {
        let mf = WarpedManifold::plane(4.0);
        let nodes = quad::uniform_nodes(1.0, 2.0, 65);
        let shift = 0.6;
        let map = MongeMap::translation(&nodes, shift);
        let lift = |u: f64, theta: f64| (map.apply(u), theta);
        let rotations: Vec<f64> =
            (0..16).map(|k| mf.fiber_period() * k as f64 / 16.0).collect();
        let us: Vec<f64> = (0..8).map(|k| 1.0 + k as f64 / 8.0).collect();
        let report = orbit_transport_check(&mf, lift, &us, &rotations, 32);
        assert!(report.max_violation() <= 1e-12, "{report:?}");
    }

    #[test]
    fn orbit_check_flags_theta_dependent_lift() {
        let mf = WarpedManifold::plane(4.0);
        let lift = |u: f64, theta: f64| (u + 0.05 * theta.cos(), theta);
        let rotations: Vec<f64> = (0..16).map(|k| mf.fiber_period() * k as f64 / 16.0).collect();
        let report = orbit_transport_check(&mf, lift, &[1.5], &rotations, 32);
        assert!(report.max_violation() > 1e-3, "{report:?}");
    }

    #[test]
    fn certify_scaling_rejects_bad_theta() {
        let nodes = quad::uniform_nodes(0.0, 1.0, 11);
        let map = MongeMap::translation(&nodes, 0.2);
        assert!(map.certify_scaling(0.1).is_ok());
        assert!(map.certify_scaling(0.0).is_err());
        assert!(map.certify_scaling(1.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn quantile_monge_is_monotone(
            c0 in 0.2f64..0.8,
            r0 in 0.2f64..0.5,
            c1 in 0.2f64..0.8,
            r1 in 0.2f64..0.5,
        ) {
            let nodes = quad::uniform_nodes(-1.0, 2.0, 257);
            let mu0 = QuotientMeasure::from_fn(&nodes, |u| smooth_bump(u, c0, r0))
                .unwrap().normalized().unwrap();
            let mu1 = QuotientMeasure::from_fn(&nodes, |u| smooth_bump(u, c1, r1))
                .unwrap().normalized().unwrap();
            let map = quantile_monge(&mu0, &mu1).unwrap();
            prop_assert!(map.is_monotone());
            // The potential gradient matches T - id by construction.
            for i in 0..nodes.len() {
                prop_assert!((map.map()[i] - nodes[i] - map.grad()[i]).abs() < 1e-14);
            }
        }

        #[test]
        fn w2_symmetry_and_triangle_sanity(shift in 0.05f64..0.6) {
            let mu0 = uniform_band(0.0, 1.0, -1.0, 3.0, 401);
            let mu1 = uniform_band(shift, 1.0 + shift, -1.0, 3.0, 401);
            let d01 = w2_distance(&mu0, &mu1).unwrap();
            let d10 = w2_distance(&mu1, &mu0).unwrap();
            prop_assert!((d01 - d10).abs() <= 1e-12);
            prop_assert!(d01 >= 0.0);
        }
    }
}
