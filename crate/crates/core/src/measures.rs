//! Absolutely continuous measures on M and on the quotient, and their
//! disintegration along orbits.
//!
//! Conventions, fixed once here and relied on everywhere else:
//!
//! - An [`AbsContMeasure`] stores the density rho with respect to the volume
//!   measure of M, d vol = f(u)^m du dtheta, on a tensor grid
//!   (u nodes) x (periodic fiber nodes).
//! - A [`QuotientMeasure`] stores its density with respect to du on the
//!   quotient interval. For the pushforward of rho vol this density is
//!   q(u) = f(u)^m integral of rho over the fiber, so the f^m factor enters
//!   in exactly one place.
//! - An [`OrbitConditional`] stores its density with respect to vol_0, the
//!   fiber volume normalized to unit mass; its fiber mean is one.
//!
//! With these conventions the gluing identity
//! mu(E) = integral of mu_u(E) d(pi_* mu)(u) is a literal weighted sum and
//! `glue(disintegrate(mu))` reproduces mu node for node up to roundoff.

use crate::error::{Error, Result};
use crate::geometry::{QuotientGrid, WarpedManifold};
use crate::quad::{self, QuantileFn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Uniform periodic grid on the fiber torus T^m; `nodes_per_dim` points per
/// circle, no duplicated endpoint. Periodic trapezoid weights are uniform,
/// which is spectrally accurate for smooth periodic densities.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberGrid {
    dim: u32,
    nodes_per_dim: usize,
    period: f64,
}

impl FiberGrid {
    pub fn new(mf: &WarpedManifold, nodes_per_dim: usize) -> Result<Self> {
        if nodes_per_dim < 2 {
            return Err(Error::Config("fiber grid needs at least 2 nodes".into()));
        }
        Ok(Self {
            dim: mf.fiber_dim(),
            nodes_per_dim,
            period: mf.fiber_period(),
        })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn nodes_per_dim(&self) -> usize {
        self.nodes_per_dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Total number of tensor nodes, `nodes_per_dim^dim`.
    pub fn total_nodes(&self) -> usize {
        self.nodes_per_dim.pow(self.dim)
    }

    /// Lebesgue quadrature weight of one node, `(period/n)^dim`.
    pub fn node_weight(&self) -> f64 {
        (self.period / self.nodes_per_dim as f64).powi(self.dim as i32)
    }

    /// Total fiber coordinate volume, `period^dim`.
    pub fn coordinate_volume(&self) -> f64 {
        self.period.powi(self.dim as i32)
    }

    /// Angular coordinates of the flat node index.
    pub fn coords(&self, mut flat: usize) -> Vec<f64> {
        let step = self.period / self.nodes_per_dim as f64;
        let mut out = vec![0.0; self.dim as usize];
        for slot in out.iter_mut() {
            *slot = (flat % self.nodes_per_dim) as f64 * step;
            flat /= self.nodes_per_dim;
        }
        out
    }
}

/// An absolutely continuous measure rho vol on the principal stratum.
#[derive(Debug, Clone)]
pub struct AbsContMeasure {
    u_nodes: Vec<f64>,
    fiber: FiberGrid,
    /// Row-major density values, `density[i * fiber.total_nodes() + j]`.
    density: Vec<f64>,
}

impl AbsContMeasure {
    pub fn new(grid: &QuotientGrid, fiber: FiberGrid, density: Vec<f64>) -> Result<Self> {
        let expect = grid.len() * fiber.total_nodes();
        if density.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "density has {} entries, grid wants {}",
                density.len(),
                expect
            )));
        }
        if density.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
            return Err(Error::Domain("density must be finite and >= 0".into()));
        }
        Ok(Self {
            u_nodes: grid.nodes().to_vec(),
            fiber,
            density,
        })
    }

    /// Sample a density function rho(u, theta) on the tensor grid.
    pub fn from_fn(
        grid: &QuotientGrid,
        fiber: FiberGrid,
        mut rho: impl FnMut(f64, &[f64]) -> f64,
    ) -> Result<Self> {
        let nf = fiber.total_nodes();
        let mut density = Vec::with_capacity(grid.len() * nf);
        for &u in grid.nodes() {
            for j in 0..nf {
                density.push(rho(u, &fiber.coords(j)));
            }
        }
        Self::new(grid, fiber, density)
    }

    pub fn u_nodes(&self) -> &[f64] {
        &self.u_nodes
    }

    pub fn fiber(&self) -> &FiberGrid {
        &self.fiber
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.density[i * self.fiber.total_nodes() + j]
    }

    fn fiber_row(&self, i: usize) -> &[f64] {
        let nf = self.fiber.total_nodes();
        &self.density[i * nf..(i + 1) * nf]
    }

    /// Fiber average of rho over orbit i (the integral against vol_0).
    pub fn fiber_mean(&self, i: usize) -> f64 {
        let row = self.fiber_row(i);
        row.iter().sum::<f64>() / row.len() as f64
    }

    /// Total mass against d vol = f(u)^m du dtheta.
    pub fn mass(&self, mf: &WarpedManifold) -> f64 {
        let w_theta = self.fiber.node_weight();
        let m = mf.fiber_dim() as i32;
        let per_u: Vec<f64> = (0..self.u_nodes.len())
            .map(|i| {
                let row_sum: f64 = self.fiber_row(i).iter().sum();
                row_sum * w_theta * mf.warp(self.u_nodes[i]).powi(m)
            })
            .collect();
        quad::trapezoid(&self.u_nodes, &per_u)
    }

    pub fn normalize(&mut self, mf: &WarpedManifold) -> Result<()> {
        let mass = self.mass(mf);
        if !(mass > 0.0) {
            return Err(Error::DegenerateMeasure(format!(
                "total mass {mass} is not positive"
            )));
        }
        for d in &mut self.density {
            *d /= mass;
        }
        Ok(())
    }

    pub fn normalized(mut self, mf: &WarpedManifold) -> Result<Self> {
        self.normalize(mf)?;
        Ok(self)
    }

    pub fn max_node_difference(&self, other: &Self) -> f64 {
        self.density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A measure on the quotient interval, density with respect to du.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuotientMeasure {
    nodes: Vec<f64>,
    density: Vec<f64>,
}

impl QuotientMeasure {
    pub fn new(nodes: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if nodes.len() != density.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} nodes vs {} density values",
                nodes.len(),
                density.len()
            )));
        }
        if nodes.len() < 2 || !quad::is_strictly_increasing(&nodes) {
            return Err(Error::Domain(
                "quotient nodes must strictly increase (>= 2 of them)".into(),
            ));
        }
        if density.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
            return Err(Error::Domain("density must be finite and >= 0".into()));
        }
        Ok(Self { nodes, density })
    }

    pub fn from_fn(nodes: &[f64], mut q: impl FnMut(f64) -> f64) -> Result<Self> {
        Self::new(nodes.to_vec(), nodes.iter().map(|&u| q(u)).collect())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn mass(&self) -> f64 {
        quad::trapezoid(&self.nodes, &self.density)
    }

    pub fn normalize(&mut self) -> Result<()> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(Error::DegenerateMeasure(format!(
                "quotient mass {mass} is not positive"
            )));
        }
        for d in &mut self.density {
            *d /= mass;
        }
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    pub fn quantile_fn(&self) -> Result<QuantileFn> {
        QuantileFn::from_density(&self.nodes, &self.density)
    }

    /// Density value at `x` by linear interpolation (zero outside the grid).
    pub fn density_at(&self, x: f64) -> f64 {
        if x < self.nodes[0] || x > *self.nodes.last().unwrap() {
            return 0.0;
        }
        let i = self.nodes.partition_point(|&n| n <= x).clamp(1, self.nodes.len() - 1);
        let (x0, x1) = (self.nodes[i - 1], self.nodes[i]);
        let w = (x - x0) / (x1 - x0);
        self.density[i - 1] * (1.0 - w) + self.density[i] * w
    }
}

/// Conditional measure of one orbit; density with respect to vol_0.
#[derive(Debug, Clone)]
pub struct OrbitConditional {
    u: f64,
    density: Vec<f64>,
    degenerate: bool,
}

impl OrbitConditional {
    pub fn uniform(u: f64, fiber: &FiberGrid) -> Self {
        Self {
            u,
            density: vec![1.0; fiber.total_nodes()],
            degenerate: false,
        }
    }

    pub fn orbit(&self) -> f64 {
        self.u
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Fiber mass against vol_0; one for a well-formed conditional.
    pub fn fiber_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() / self.density.len() as f64
    }

    /// True when the underlying orbit carried no mass and the conditional is
    /// an arbitrary (uniform) filler.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

/// A quotient marginal plus one conditional per grid node.
#[derive(Debug, Clone)]
pub struct Disintegration {
    marginal: QuotientMeasure,
    conditionals: Vec<OrbitConditional>,
    fiber: FiberGrid,
    degenerate_nodes: Vec<usize>,
}

impl Disintegration {
    pub fn marginal(&self) -> &QuotientMeasure {
        &self.marginal
    }

    pub fn conditionals(&self) -> &[OrbitConditional] {
        &self.conditionals
    }

    pub fn fiber(&self) -> &FiberGrid {
        &self.fiber
    }

    /// Indices of orbits inside the grid that carried no fiber mass.
    pub fn degenerate_nodes(&self) -> &[usize] {
        &self.degenerate_nodes
    }
}

/// Pushforward of mu under the orbit projection. The returned density is
/// q(u) = f(u)^m * integral of rho(u, .) over the fiber, with respect to du.
pub fn pushforward_quotient(mu: &AbsContMeasure, mf: &WarpedManifold) -> Result<QuotientMeasure> {
    let m = mf.fiber_dim() as i32;
    let w_theta = mu.fiber().node_weight();
    let nf = mu.fiber().total_nodes();
    let density: Vec<f64> = (0..mu.u_nodes().len())
        .map(|i| {
            let row_sum: f64 = mu.density()[i * nf..(i + 1) * nf].iter().sum();
            row_sum * w_theta * mf.warp(mu.u_nodes()[i]).powi(m)
        })
        .collect();
    QuotientMeasure::new(mu.u_nodes().to_vec(), density)
}

/// Disintegrate mu along orbits: the marginal is the quotient pushforward
/// and the conditional at u is rho(u, .) normalized against vol_0. Orbits
/// with zero fiber mass are flagged and carry a uniform filler conditional.
pub fn disintegrate(mu: &AbsContMeasure, mf: &WarpedManifold) -> Result<Disintegration> {
    let marginal = pushforward_quotient(mu, mf)?;
    let nf = mu.fiber().total_nodes();
    let mut conditionals = Vec::with_capacity(mu.u_nodes().len());
    let mut degenerate_nodes = Vec::new();
    for (i, &u) in mu.u_nodes().iter().enumerate() {
        let mean = mu.fiber_mean(i);
        if mean > 0.0 {
            let density = mu.density()[i * nf..(i + 1) * nf]
                .iter()
                .map(|&d| d / mean)
                .collect();
            conditionals.push(OrbitConditional {
                u,
                density,
                degenerate: false,
            });
        } else {
            degenerate_nodes.push(i);
            conditionals.push(OrbitConditional {
                u,
                density: vec![1.0; nf],
                degenerate: true,
            });
        }
    }
    Ok(Disintegration {
        marginal,
        conditionals,
        fiber: mu.fiber().clone(),
        degenerate_nodes,
    })
}

/// Rebuild the measure from a disintegration:
/// rho(u, theta) = q(u) rho_u(theta) / (period^m f(u)^m).
pub fn glue(d: &Disintegration, mf: &WarpedManifold) -> Result<AbsContMeasure> {
    let n_u = d.marginal.nodes().len();
    if d.conditionals.len() != n_u {
        return Err(Error::ShapeMismatch(format!(
            "{} conditionals vs {} marginal nodes",
            d.conditionals.len(),
            n_u
        )));
    }
    let nf = d.fiber.total_nodes();
    let m = mf.fiber_dim() as i32;
    let coord_vol = d.fiber.coordinate_volume();
    let mut density = Vec::with_capacity(n_u * nf);
    for i in 0..n_u {
        let cond = &d.conditionals[i];
        if cond.density.len() != nf {
            return Err(Error::ShapeMismatch(format!(
                "conditional {i} has {} fiber nodes, expected {nf}",
                cond.density.len()
            )));
        }
        let u = d.marginal.nodes()[i];
        let scale = d.marginal.density()[i] / (coord_vol * mf.warp(u).powi(m));
        for j in 0..nf {
            density.push(scale * cond.density[j]);
        }
    }
    Ok(AbsContMeasure {
        u_nodes: d.marginal.nodes().to_vec(),
        fiber: d.fiber.clone(),
        density,
    })
}

/// Common conditional of the reference measure nu = e^{-V} vol for a
/// potential constant along horizontal directions. The potential is probed
/// on a coarse (u, theta) lattice and rejected if it varies with u.
pub fn reference_conditional(
    potential: impl Fn(f64, &[f64]) -> f64,
    mf: &WarpedManifold,
    fiber: &FiberGrid,
) -> Result<OrbitConditional> {
    let (lo, hi) = mf.principal_span();
    let probes = 17;
    let mut variation: f64 = 0.0;
    for j in 0..fiber.total_nodes() {
        let theta = fiber.coords(j);
        let base = potential(lo, &theta);
        for k in 1..probes {
            let u = lo + (hi - lo) * k as f64 / (probes - 1) as f64;
            variation = variation.max((potential(u, &theta) - base).abs());
        }
    }
    if variation > 1e-12 {
        return Err(Error::NonHorizontalPotential { variation });
    }

    let u0 = 0.5 * (lo + hi);
    let weights: Vec<f64> = (0..fiber.total_nodes())
        .map(|j| (-potential(u0, &fiber.coords(j))).exp())
        .collect();
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::MassError(format!(
            "e^{{-V}} has non-normalizable fiber mass (mean {mean})"
        )));
    }
    Ok(OrbitConditional {
        u: u0,
        density: weights.into_iter().map(|w| w / mean).collect(),
        degenerate: false,
    })
}

/// Built-in density generators for experiments and tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum DensityPreset {
    /// Gaussian in u, uniform along fibers.
    GaussianOnQuotient { center: f64, sigma: f64 },
    /// Compactly supported C-infinity bump in u, uniform along fibers.
    SmoothBump { center: f64, radius: f64 },
    /// The volume measure restricted to a band lo <= u <= hi (the annulus
    /// measure of the S^1-on-C example when f(u) = u).
    UniformBand { lo: f64, hi: f64 },
    /// Two smooth bumps with relative weight `first_weight` on the first.
    TwoBump {
        center_a: f64,
        radius_a: f64,
        center_b: f64,
        radius_b: f64,
        first_weight: f64,
    },
    /// Independent positive noise per node, for round-trip property runs.
    SeededRandom { seed: u64 },
}

/// C-infinity bump profile supported on |x - center| < radius.
pub fn smooth_bump(x: f64, center: f64, radius: f64) -> f64 {
    let xi = (x - center) / radius;
    if xi.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - xi * xi)).exp()
    }
}

impl DensityPreset {
    /// Materialize the preset on a grid and normalize to unit mass.
    pub fn build(
        &self,
        mf: &WarpedManifold,
        grid: &QuotientGrid,
        fiber: FiberGrid,
    ) -> Result<AbsContMeasure> {
        let mu = match self {
            DensityPreset::GaussianOnQuotient { center, sigma } => {
                if !(*sigma > 0.0) {
                    return Err(Error::Config("gaussian sigma must be positive".into()));
                }
                AbsContMeasure::from_fn(grid, fiber, |u, _| {
                    (-0.5 * ((u - center) / sigma).powi(2)).exp()
                })?
            }
            DensityPreset::SmoothBump { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config("bump radius must be positive".into()));
                }
                AbsContMeasure::from_fn(grid, fiber, |u, _| smooth_bump(u, *center, *radius))?
            }
            DensityPreset::UniformBand { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::Config(format!("empty band [{lo}, {hi}]")));
                }
                AbsContMeasure::from_fn(grid, fiber, |u, _| {
                    if (*lo..=*hi).contains(&u) {
                        1.0
                    } else {
                        0.0
                    }
                })?
            }
            DensityPreset::TwoBump {
                center_a,
                radius_a,
                center_b,
                radius_b,
                first_weight,
            } => {
                if !(*first_weight > 0.0 && *first_weight < 1.0) {
                    return Err(Error::Config(
                        "two-bump weight must lie strictly between 0 and 1".into(),
                    ));
                }
                AbsContMeasure::from_fn(grid, fiber, |u, _| {
                    first_weight * smooth_bump(u, *center_a, *radius_a)
                        + (1.0 - first_weight) * smooth_bump(u, *center_b, *radius_b)
                })?
            }
            DensityPreset::SeededRandom { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                AbsContMeasure::from_fn(grid, fiber, |_, _| 0.1 + rng.gen::<f64>())?
            }
        };
        mu.normalized(mf)
    }
}

/// Grid and mass metadata attached to exported densities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureMetadata {
    pub n_u: usize,
    pub n_theta: usize,
    pub fiber_dim: u32,
    pub u_first: f64,
    pub u_last: f64,
    pub fiber_period: f64,
    pub mass: f64,
    pub degenerate_orbits: Vec<usize>,
}

impl AbsContMeasure {
    pub fn metadata(&self, mf: &WarpedManifold, degenerate: Vec<usize>) -> MeasureMetadata {
        MeasureMetadata {
            n_u: self.u_nodes.len(),
            n_theta: self.fiber.nodes_per_dim(),
            fiber_dim: self.fiber.dim(),
            u_first: self.u_nodes[0],
            u_last: *self.u_nodes.last().unwrap(),
            fiber_period: self.fiber.period(),
            mass: self.mass(mf),
            degenerate_orbits: degenerate,
        }
    }

    /// Serialize as `u,theta,rho` rows (single fiber dimension only).
    pub fn to_csv(&self) -> Result<String> {
        if self.fiber.dim() != 1 {
            return Err(Error::Config(
                "csv export supports a single fiber dimension".into(),
            ));
        }
        let mut out = String::from("u,theta,rho\n");
        for (i, &u) in self.u_nodes.iter().enumerate() {
            for j in 0..self.fiber.total_nodes() {
                let theta = self.fiber.coords(j)[0];
                out.push_str(&format!("{u},{theta},{}\n", self.value(i, j)));
            }
        }
        Ok(out)
    }

    /// Parse `u,theta,rho` rows into a measure; the rows must enumerate a
    /// complete tensor grid with uniform u spacing.
    pub fn from_csv(text: &str, mf: &WarpedManifold) -> Result<Self> {
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (idx == 0 && line.starts_with("u")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::CsvParse {
                    line: idx + 1,
                    msg: format!("expected 3 fields, got {}", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| Error::CsvParse {
                    line: idx + 1,
                    msg: format!("bad number {s:?}: {e}"),
                })
            };
            rows.push((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
        }
        if rows.is_empty() {
            return Err(Error::CsvParse {
                line: 0,
                msg: "no data rows".into(),
            });
        }

        let mut us: Vec<f64> = rows.iter().map(|r| r.0).collect();
        us.sort_by(|a, b| a.total_cmp(b));
        us.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut thetas: Vec<f64> = rows.iter().map(|r| r.1).collect();
        thetas.sort_by(|a, b| a.total_cmp(b));
        thetas.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

        let (n_u, n_t) = (us.len(), thetas.len());
        if n_u < 2 || n_t < 2 || rows.len() != n_u * n_t {
            return Err(Error::CsvParse {
                line: 0,
                msg: format!(
                    "rows do not form a complete {n_u} x {n_t} tensor grid ({} rows)",
                    rows.len()
                ),
            });
        }
        let fiber = FiberGrid {
            dim: 1,
            nodes_per_dim: n_t,
            period: mf.fiber_period(),
        };
        let locate = |sorted: &[f64], x: f64, line: usize| -> Result<usize> {
            let i = sorted.partition_point(|&v| v < x - 1e-12);
            if i < sorted.len() && (sorted[i] - x).abs() < 1e-9 {
                Ok(i)
            } else {
                Err(Error::CsvParse {
                    line,
                    msg: format!("coordinate {x} does not sit on the detected grid"),
                })
            }
        };
        let mut density = vec![f64::NAN; n_u * n_t];
        for (k, &(u, theta, rho)) in rows.iter().enumerate() {
            let i = locate(&us, u, k + 1)?;
            let j = locate(&thetas, theta, k + 1)?;
            density[i * n_t + j] = rho;
        }
        if density.iter().any(|d| d.is_nan()) {
            return Err(Error::CsvParse {
                line: 0,
                msg: "grid has missing (u, theta) combinations".into(),
            });
        }
        if !mf.contains_principal(us[0]) || !mf.contains_principal(*us.last().unwrap()) {
            return Err(Error::Config(
                "csv support leaves the principal stratum".into(),
            ));
        }
        Ok(Self {
            u_nodes: us,
            fiber,
            density,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TAU;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn annulus_vol() -> (WarpedManifold, AbsContMeasure) {
        let mf = WarpedManifold::plane(3.0);
        let grid = QuotientGrid::on_interval(&mf, 1.0, 2.0, 65).unwrap();
        let fiber = FiberGrid::new(&mf, 32).unwrap();
        let mu = DensityPreset::UniformBand { lo: 1.0, hi: 2.0 }
            .build(&mf, &grid, fiber)
            .unwrap();
        (mf, mu)
    }

    #[test]
    fn pushforward_of_annulus_vol_is_linear_in_u() {
        let (mf, mu) = annulus_vol();
        let q = pushforward_quotient(&mu, &mf).unwrap();
        assert_abs_diff_eq!(q.mass(), 1.0, epsilon = 1e-12);
        // q(u) proportional to u: compare against the midpoint node.
        let nodes = q.nodes();
        let mid = nodes.len() / 2;
        for (i, &u) in nodes.iter().enumerate() {
            let expect = q.density()[mid] * u / nodes[mid];
            assert_abs_diff_eq!(q.density()[i], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn pushforward_fiber_constant_on_cylinder_tracks_rho() {
        let mf = WarpedManifold::cylinder(0.0, 1.0);
        let grid = QuotientGrid::span(&mf, 33).unwrap();
        let fiber = FiberGrid::new(&mf, 16).unwrap();
        let mu = AbsContMeasure::from_fn(&grid, fiber, |u, _| 1.0 + u * u)
            .unwrap()
            .normalized(&mf)
            .unwrap();
        let q = pushforward_quotient(&mu, &mf).unwrap();
        for (i, &u) in q.nodes().iter().enumerate() {
            let expect = q.density()[0] * (1.0 + u * u) / (1.0 + q.nodes()[0].powi(2));
            assert_abs_diff_eq!(q.density()[i], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn pushforward_separable_density_drops_fiber_factor() {
        let mf = WarpedManifold::cylinder(0.0, 1.0);
        let grid = QuotientGrid::span(&mf, 33).unwrap();
        let fiber = FiberGrid::new(&mf, 64).unwrap();
        // b(theta) integrates to one against d theta / period.
        let mu = AbsContMeasure::from_fn(&grid, fiber, |u, th| {
            (2.0 + u) * (1.0 + 0.5 * th[0].cos())
        })
        .unwrap()
        .normalized(&mf)
        .unwrap();
        let q = pushforward_quotient(&mu, &mf).unwrap();
        for (i, &u) in q.nodes().iter().enumerate() {
            let expect = q.density()[0] * (2.0 + u) / (2.0 + q.nodes()[0]);
            assert_abs_diff_eq!(q.density()[i], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn disintegrate_vol_gives_uniform_conditionals() {
        let (mf, mu) = annulus_vol();
        let d = disintegrate(&mu, &mf).unwrap();
        assert!(d.degenerate_nodes().is_empty());
        for cond in d.conditionals() {
            assert_abs_diff_eq!(cond.fiber_mass(), 1.0, epsilon = 1e-12);
            for &v in cond.density() {
                assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn disintegrate_separable_density_reproduces_fiber_factor() {
        let mf = WarpedManifold::cylinder(0.0, 1.0);
        let grid = QuotientGrid::span(&mf, 17).unwrap();
        let fiber = FiberGrid::new(&mf, 64).unwrap();
        let b = |th: f64| 1.0 + 0.3 * (2.0 * th).sin();
        let mu = AbsContMeasure::from_fn(&grid, fiber, |u, th| (1.0 + u) * b(th[0]))
            .unwrap()
            .normalized(&mf)
            .unwrap();
        let d = disintegrate(&mu, &mf).unwrap();
        let fiber = d.fiber().clone();
        for cond in d.conditionals() {
            let mean: f64 =
                (0..fiber.total_nodes()).map(|j| b(fiber.coords(j)[0])).sum::<f64>()
                    / fiber.total_nodes() as f64;
            for (j, &v) in cond.density().iter().enumerate() {
                assert_abs_diff_eq!(v, b(fiber.coords(j)[0]) / mean, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn disintegrate_spike_gives_one_hot_marginal() {
        let mf = WarpedManifold::cylinder(0.0, 1.0);
        let grid = QuotientGrid::span(&mf, 9).unwrap();
        let fiber = FiberGrid::new(&mf, 8).unwrap();
        let spike_u = grid.nodes()[4];
        let mu = AbsContMeasure::from_fn(&grid, fiber, |u, th| {
            if (u - spike_u).abs() < 1e-12 {
                1.0 + th[0]
            } else {
                0.0
            }
        })
        .unwrap()
        .normalized(&mf)
        .unwrap();
        let d = disintegrate(&mu, &mf).unwrap();
        assert_eq!(d.degenerate_nodes().len(), 8);
        assert!(!d.conditionals()[4].is_degenerate());
        assert_abs_diff_eq!(d.conditionals()[4].fiber_mass(), 1.0, epsilon = 1e-12);
        for (i, &q) in d.marginal().density().iter().enumerate() {
            if i != 4 {
                assert_eq!(q, 0.0);
            } else {
                assert!(q > 0.0);
            }
        }
        // A one-orbit measure glues back to itself up to a single
        // multiply/divide roundoff.
        let back = glue(&d, &mf).unwrap();
        assert!(back.max_node_difference(&mu) <= 1e-12);
    }

    #[test]
    fn glue_round_trip_annulus() {
        let (mf, mu) = annulus_vol();
        let back = glue(&disintegrate(&mu, &mf).unwrap(), &mf).unwrap();
        assert!(back.max_node_difference(&mu) <= 1e-10);
    }

    #[test]
    fn reference_conditional_uniform_for_constant_potentials() {
        let mf = WarpedManifold::cylinder(0.0, 1.0);
        let fiber = FiberGrid::new(&mf, 32).unwrap();
        for v0 in [0.0, 5.0] {
            let nu = reference_conditional(|_, _| v0, &mf, &fiber).unwrap();
            assert_abs_diff_eq!(nu.fiber_mass(), 1.0, epsilon = 1e-12);
            for &v in nu.density() {
                assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn reference_conditional_gibbs_weight() {
        let mf = WarpedManifold::cylinder(0.0, 1.0);
        let fiber = FiberGrid::new(&mf, 128).unwrap();
        let nu = reference_conditional(|_, th| th[0].cos(), &mf, &fiber).unwrap();
        assert_abs_diff_eq!(nu.fiber_mass(), 1.0, epsilon = 1e-12);
        // Proportional to e^{-cos theta}: check against the node-mean.
        let mean: f64 = (0..fiber.total_nodes())
            .map(|j| (-fiber.coords(j)[0].cos()).exp())
            .sum::<f64>()
            / fiber.total_nodes() as f64;
        for (j, &v) in nu.density().iter().enumerate() {
            let expect = (-fiber.coords(j)[0].cos()).exp() / mean;
            assert_abs_diff_eq!(v, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn reference_conditional_rejects_horizontal_dependence() {
        let mf = WarpedManifold::cylinder(0.0, 1.0);
        let fiber = FiberGrid::new(&mf, 16).unwrap();
        assert!(matches!(
            reference_conditional(|u, _| u, &mf, &fiber),
            Err(Error::NonHorizontalPotential { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let mf = WarpedManifold::cylinder(0.0, 1.0);
        let grid = QuotientGrid::span(&mf, 9).unwrap();
        let fiber = FiberGrid::new(&mf, 6).unwrap();
        let mu = AbsContMeasure::from_fn(&grid, fiber, |u, th| 1.0 + u + 0.1 * th[0].sin())
            .unwrap()
            .normalized(&mf)
            .unwrap();
        let text = mu.to_csv().unwrap();
        let back = AbsContMeasure::from_csv(&text, &mf).unwrap();
        assert!(back.max_node_difference(&mu) <= 1e-12);
    }

    #[test]
    fn csv_rejects_malformed_rows() {
        let mf = WarpedManifold::cylinder(0.0, 1.0);
        let bad = "u,theta,rho\n0.5,0.0\n";
        match AbsContMeasure::from_csv(bad, &mf) {
            Err(Error::CsvParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected csv error, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn glue_disintegrate_round_trip_random(seed in 0u64..1000) {
            let mf = WarpedManifold::unit_sphere();
            let grid = QuotientGrid::on_interval(&mf, 0.4, 2.7, 48).unwrap();
            let fiber = FiberGrid::new(&mf, 24).unwrap();
            let mu = DensityPreset::SeededRandom { seed }
                .build(&mf, &grid, fiber)
                .unwrap();
            let d = disintegrate(&mu, &mf).unwrap();
            for cond in d.conditionals() {
                prop_assert!((cond.fiber_mass() - 1.0).abs() <= 1e-12);
            }
            let back = glue(&d, &mf).unwrap();
            prop_assert!(back.max_node_difference(&mu) <= 1e-10);
            // Mass is conserved through the pushforward.
            prop_assert!((d.marginal().mass() - mu.mass(&mf)).abs() <= 1e-10);
        }
    }

    #[test]
    fn fiber_grid_two_dims() {
        let mf = WarpedManifold::new(
            crate::geometry::Profile::Constant(1.0),
            0.0,
            1.0,
            2,
            TAU,
        )
        .unwrap();
        let fiber = FiberGrid::new(&mf, 8).unwrap();
        assert_eq!(fiber.total_nodes(), 64);
        assert_abs_diff_eq!(
            fiber.node_weight() * fiber.total_nodes() as f64,
            TAU * TAU,
            epsilon = 1e-12
        );
        let c = fiber.coords(9);
        assert_abs_diff_eq!(c[0], TAU / 8.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[1], TAU / 8.0, epsilon = 1e-14);
    }
}
