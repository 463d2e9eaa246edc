//! Natural cubic splines with analytic first and second derivatives.
//!
//! Custom warp profiles are supplied as splines so that the curvature
//! formula -m f''/f uses the interpolant's own second derivative instead of
//! finite differences of sampled values.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots (natural boundary: zero at the ends).
    moments: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(knots: &[f64], values: &[f64]) -> Result<Self> {
        let n = knots.len();
        if n != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} knots vs {} values",
                n,
                values.len()
            )));
        }
        if n < 3 {
            return Err(Error::Config("spline needs at least 3 knots".into()));
        }
        if !crate::quad::is_strictly_increasing(knots) {
            return Err(Error::Config("spline knots must strictly increase".into()));
        }

        // Tridiagonal system for the interior moments, Thomas algorithm.
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let m = n - 2;
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            diag[i] = (h[i] + h[i + 1]) / 3.0;
            upper[i] = h[i + 1] / 6.0;
            rhs[i] = (values[i + 2] - values[i + 1]) / h[i + 1]
                - (values[i + 1] - values[i]) / h[i];
        }
        for i in 1..m {
            let lower = h[i] / 6.0;
            let w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut interior = vec![0.0; m];
        if m > 0 {
            interior[m - 1] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                interior[i] = (rhs[i] - upper[i] * interior[i + 1]) / diag[i];
            }
        }
        let mut moments = vec![0.0; n];
        moments[1..n - 1].copy_from_slice(&interior);

        Ok(Self {
            knots: knots.to_vec(),
            values: values.to_vec(),
            moments,
        })
    }

    pub fn knot_range(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    fn segment(&self, x: f64) -> usize {
        let i = self.knots.partition_point(|&k| k <= x);
        i.clamp(1, self.knots.len() - 1) - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - x) / h;
        let b = (x - self.knots[i]) / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a.powi(3) - a) * self.moments[i] + (b.powi(3) - b) * self.moments[i + 1]) * h * h
                / 6.0
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - x) / h;
        let b = (x - self.knots[i]) / h;
        (self.values[i + 1] - self.values[i]) / h
            - (3.0 * a * a - 1.0) * h * self.moments[i] / 6.0
            + (3.0 * b * b - 1.0) * h * self.moments[i + 1] / 6.0
    }

    pub fn second_deriv(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - x) / h;
        let b = (x - self.knots[i]) / h;
        a * self.moments[i] + b * self.moments[i + 1]
    }
}
