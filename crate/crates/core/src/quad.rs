//! Quadrature and monotone-inverse helpers shared by the measure and
//! transport modules.
//!
//! Everything here works on plain node/value slices. Densities are treated
//! as piecewise linear between nodes, so cumulative integrals are exact
//! trapezoid sums of that model.

use crate::error::{Error, Result};

/// Composite trapezoid rule on an arbitrary strictly increasing node set.
pub fn trapezoid(nodes: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(nodes.len(), values.len());
    let mut acc = 0.0;
    for i in 1..nodes.len() {
        acc += 0.5 * (values[i] + values[i - 1]) * (nodes[i] - nodes[i - 1]);
    }
    acc
}

/// Trapezoid rule on a uniform grid with spacing `h`.
pub fn trapezoid_uniform(h: f64, values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let interior: f64 = values[1..values.len() - 1].iter().sum();
    h * (0.5 * values[0] + interior + 0.5 * values[values.len() - 1])
}

/// Composite Simpson rule on a uniform grid. Requires an odd node count.
pub fn simpson_uniform(h: f64, values: &[f64]) -> f64 {
    let n = values.len();
    assert!(n >= 3 && n % 2 == 1, "simpson needs an odd node count >= 3");
    let mut acc = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

/// Running trapezoid integral; entry `i` holds the integral over
/// `[nodes[0], nodes[i]]`.
pub fn cumulative_trapezoid(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..nodes.len() {
        acc += 0.5 * (values[i] + values[i - 1]) * (nodes[i] - nodes[i - 1]);
        out.push(acc);
    }
    out
}

/// `n` uniformly spaced nodes on `[lo, hi]`, endpoints included.
pub fn uniform_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let h = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + i as f64 * h })
        .collect()
}

pub fn is_strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

/// Cumulative distribution of a nonnegative density on a 1-D node set,
/// normalized to total mass one, with a piecewise-linear inverse.
///
/// The generalized inverse uses the `inf{x : F(x) >= alpha}` convention, so
/// flat stretches (zero-density cells) resolve to their left end.
#[derive(Debug, Clone)]
pub struct QuantileFn {
    nodes: Vec<f64>,
    cdf: Vec<f64>,
}

impl QuantileFn {
    /// Build from node positions and density values with respect to `du`.
    pub fn from_density(nodes: &[f64], density: &[f64]) -> Result<Self> {
        if nodes.len() != density.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} nodes vs {} density values",
                nodes.len(),
                density.len()
            )));
        }
        if nodes.len() < 2 || !is_strictly_increasing(nodes) {
            return Err(Error::Domain(
                "need at least two strictly increasing nodes".into(),
            ));
        }
        if density.iter().any(|&d| d < 0.0 || !d.is_finite()) {
            return Err(Error::Domain("density must be finite and >= 0".into()));
        }
        let mut cdf = cumulative_trapezoid(nodes, density);
        let mass = *cdf.last().unwrap();
        if mass <= 0.0 {
            return Err(Error::DegenerateMeasure(
                "density integrates to zero".into(),
            ));
        }
        for c in &mut cdf {
            *c /= mass;
        }
        Ok(Self {
            nodes: nodes.to_vec(),
            cdf,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Normalized CDF value at `x` (clamped to the node range).
    pub fn cdf_at(&self, x: f64) -> f64 {
        if x <= self.nodes[0] {
            return 0.0;
        }
        if x >= *self.nodes.last().unwrap() {
            return 1.0;
        }
        let i = self.nodes.partition_point(|&n| n <= x);
        let (x0, x1) = (self.nodes[i - 1], self.nodes[i]);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        c0 + (c1 - c0) * (x - x0) / (x1 - x0)
    }

    /// Generalized inverse of the CDF at `alpha` (clamped to `[0, 1]`).
    /// At `alpha = 0` this returns the left edge of the support (the limit
    /// from above) instead of the first grid node.
    pub fn quantile(&self, alpha: f64) -> f64 {
        let a = alpha.clamp(0.0, 1.0);
        if a <= 0.0 {
            let j = self.cdf.partition_point(|&c| c <= 0.0);
            return self.nodes[j.saturating_sub(1)];
        }
        let i = self.cdf.partition_point(|&c| c < a);
        if i == 0 {
            return self.nodes[0];
        }
        if i >= self.cdf.len() {
            return *self.nodes.last().unwrap();
        }
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        if c1 <= c0 {
            return self.nodes[i];
        }
        let w = (a - c0) / (c1 - c0);
        self.nodes[i - 1] + w * (self.nodes[i] - self.nodes[i - 1])
    }
}

/// Least-squares slope of `log|y|` against `log x`; the scaling exponent of
/// a sequence expected to behave like `y ~ C x^p`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(&x, &y)| x > 0.0 && y.abs() > 0.0)
        .map(|(&x, &y)| (x.ln(), y.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx
}
