//! Warped-product test manifolds M = I x T^m with metric
//! du^2 + f(u)^2 (fiber metric).
//!
//! This is the cohomogeneity-one model of an isometric torus action: orbits
//! are the fibers {u} x T^m, the quotient is the interval I, and horizontal
//! directions are the meridians, which are unit-speed geodesics when
//! parameterized by u. The profile f carries all of the curvature seen by
//! horizontal transport: Ric(e_u) = -m f''(u)/f(u).
//!
//! Two independent curvature routes are kept deliberately separate: the
//! analytic profile derivatives and a central finite-difference stencil.
//! [`WarpedManifold::riccati_defect`] closes the loop against Jacobians
//! produced by the transport module.

use crate::error::{Error, Result};
use crate::spline::CubicSpline;
use serde::{Deserialize, Serialize};

pub const TAU: f64 = std::f64::consts::TAU;

/// Warp profile f: twice differentiable, positive on the open interval.
#[derive(Debug, Clone)]
pub enum Profile {
    /// f(u) = u; the flat plane/cone model (S^1 acting on C when the fiber
    /// period is 2 pi).
    Linear,
    /// f constant; the flat cylinder.
    Constant(f64),
    /// f(u) = sin u on (0, pi); the round sphere for m = 1.
    Sin,
    /// f(u) = sinh u; hyperbolic cusp model.
    Sinh,
    /// f(u) = cosh u; hyperbolic neck model.
    Cosh,
    /// User-supplied natural cubic spline.
    Spline(CubicSpline),
}

impl Profile {
    pub fn value(&self, u: f64) -> f64 {
        match self {
            Profile::Linear => u,
            Profile::Constant(c) => *c,
            Profile::Sin => u.sin(),
            Profile::Sinh => u.sinh(),
            Profile::Cosh => u.cosh(),
            Profile::Spline(s) => s.eval(u),
        }
    }

    pub fn deriv(&self, u: f64) -> f64 {
        match self {
            Profile::Linear => 1.0,
            Profile::Constant(_) => 0.0,
            Profile::Sin => u.cos(),
            Profile::Sinh => u.cosh(),
            Profile::Cosh => u.sinh(),
            Profile::Spline(s) => s.deriv(u),
        }
    }

    pub fn second_deriv(&self, u: f64) -> f64 {
        match self {
            Profile::Linear => 0.0,
            Profile::Constant(_) => 0.0,
            Profile::Sin => -u.sin(),
            Profile::Sinh => u.sinh(),
            Profile::Cosh => u.cosh(),
            Profile::Spline(s) => s.second_deriv(u),
        }
    }
}

/// Fraction of the interval length clipped off each end to keep supports
/// away from singular orbits (where f may vanish).
pub const DEFAULT_CLAMP_FRACTION: f64 = 1e-3;

/// The manifold M = [u_min, u_max] x T^m with metric du^2 + f(u)^2 dtheta^2,
/// each fiber circle having coordinate period `fiber_period`.
#[derive(Debug, Clone)]
pub struct WarpedManifold {
    profile: Profile,
    u_min: f64,
    u_max: f64,
    fiber_dim: u32,
    fiber_period: f64,
    clamp_fraction: f64,
}

impl WarpedManifold {
    pub fn new(
        profile: Profile,
        u_min: f64,
        u_max: f64,
        fiber_dim: u32,
        fiber_period: f64,
    ) -> Result<Self> {
        if !(u_min.is_finite() && u_max.is_finite()) || u_min >= u_max {
            return Err(Error::Config(format!(
                "quotient interval [{u_min}, {u_max}] is empty or unbounded"
            )));
        }
        if fiber_dim == 0 {
            return Err(Error::Config("fiber dimension must be >= 1".into()));
        }
        if !(fiber_period > 0.0) {
            return Err(Error::Config("fiber period must be positive".into()));
        }
        if let Profile::Spline(s) = &profile {
            let (lo, hi) = s.knot_range();
            if u_min < lo || u_max > hi {
                return Err(Error::Config(format!(
                    "interval [{u_min}, {u_max}] exceeds spline knot range [{lo}, {hi}]"
                )));
            }
        }
        let mf = Self {
            profile,
            u_min,
            u_max,
            fiber_dim,
            fiber_period,
            clamp_fraction: DEFAULT_CLAMP_FRACTION,
        };
        // The profile may vanish only at the endpoints (singular orbits).
        let (lo, hi) = mf.principal_span();
        for k in 0..=256 {
            let u = lo + (hi - lo) * k as f64 / 256.0;
            let f = mf.profile.value(u);
            if !(f > 0.0) {
                return Err(Error::SingularOrbit { u, f });
            }
        }
        Ok(mf)
    }

    pub fn with_clamp_fraction(mut self, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 0.5) {
            return Err(Error::Config(format!(
                "clamp fraction {fraction} must lie in (0, 0.5)"
            )));
        }
        self.clamp_fraction = fraction;
        Ok(self)
    }

    /// Round sphere of radius one for m = 1: f = sin on (0, pi).
    pub fn unit_sphere() -> Self {
        Self::new(Profile::Sin, 0.0, std::f64::consts::PI, 1, TAU).unwrap()
    }

    /// Flat cylinder over `[lo, hi]`.
    pub fn cylinder(lo: f64, hi: f64) -> Self {
        Self::new(Profile::Constant(1.0), lo, hi, 1, TAU).unwrap()
    }

    /// Flat plane in polar form (S^1 acting on C): f(u) = u on (0, hi].
    pub fn plane(hi: f64) -> Self {
        Self::new(Profile::Linear, 0.0, hi, 1, TAU).unwrap()
    }

    pub fn u_min(&self) -> f64 {
        self.u_min
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn fiber_dim(&self) -> u32 {
        self.fiber_dim
    }

    pub fn fiber_period(&self) -> f64 {
        self.fiber_period
    }

    /// Total dimension N = m + 1.
    pub fn total_dim(&self) -> u32 {
        self.fiber_dim + 1
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn interval_length(&self) -> f64 {
        self.u_max - self.u_min
    }

    /// The clamped open interval on which all measure supports must live.
    pub fn principal_span(&self) -> (f64, f64) {
        let margin = self.clamp_fraction * self.interval_length();
        (self.u_min + margin, self.u_max - margin)
    }

    pub fn contains_principal(&self, u: f64) -> bool {
        let (lo, hi) = self.principal_span();
        (lo..=hi).contains(&u)
    }

    fn check_interior(&self, u: f64) -> Result<()> {
        if u > self.u_min && u < self.u_max {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "u = {u} outside the open interval ({}, {})",
                self.u_min, self.u_max
            )))
        }
    }

    pub fn warp(&self, u: f64) -> f64 {
        self.profile.value(u)
    }

    /// Density of the pushed-forward volume pi_* vol with respect to du:
    /// f(u)^m * period^m, the total fiber volume over u.
    pub fn quotient_volume_density(&self, u: f64) -> Result<f64> {
        self.check_interior(u)?;
        let m = self.fiber_dim as i32;
        Ok(self.profile.value(u).powi(m) * self.fiber_period.powi(m))
    }

    /// Ricci curvature of M in the unit horizontal direction: -m f''(u)/f(u).
    pub fn horizontal_ricci(&self, u: f64) -> Result<f64> {
        self.check_interior(u)?;
        let f = self.profile.value(u);
        if !(f > 0.0) {
            return Err(Error::SingularOrbit { u, f });
        }
        Ok(-(self.fiber_dim as f64) * self.profile.second_deriv(u) / f)
    }

    /// Independent curvature oracle: central second difference of f.
    /// Agrees with [`Self::horizontal_ricci`] to O(h^2).
    pub fn horizontal_ricci_fd(&self, u: f64, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::Domain(format!("stencil width h = {h} must be positive")));
        }
        self.check_interior(u - h)?;
        self.check_interior(u + h)?;
        let f = self.profile.value(u);
        if !(f > 0.0) {
            return Err(Error::SingularOrbit { u, f });
        }
        let second =
            (self.profile.value(u + h) - 2.0 * f + self.profile.value(u - h)) / (h * h);
        Ok(-(self.fiber_dim as f64) * second / f)
    }

    /// Horizontal exponential map: meridians parameterized by arc length are
    /// geodesics, so exp_u(t v) = u + t v until the interval boundary.
    pub fn exp_horizontal(&self, u: f64, v: f64, t: f64) -> Result<f64> {
        self.check_interior(u)?;
        let target = u + t * v;
        if target >= self.u_min && target <= self.u_max {
            Ok(target)
        } else {
            let boundary = if target > self.u_max { self.u_max } else { self.u_min };
            Err(Error::GeodesicEscape {
                start: u,
                velocity: v,
                exit_time: (boundary - u) / v,
            })
        }
    }

    /// Residual of the reduced Riccati comparison along a horizontal
    /// trajectory gamma(t) = u0 + t v0, given uniform samples of
    /// delta(t) = J(t)^{1/N}:
    ///
    ///   defect = max over interior samples of
    ///            | N delta''(t)/delta(t) + ric(gamma(t)) |v0|^2 |
    ///
    /// with ric the unit-direction horizontal Ricci and delta'' by central
    /// differences. For one-dimensional slices the trace-free shear term of
    /// the full comparison is the only contribution, so the defect is small
    /// for small |v0| and vanishes identically on flat cylinders.
    pub fn riccati_defect(&self, u0: f64, v0: f64, samples: &[(f64, f64)]) -> Result<f64> {
        if samples.len() < 5 {
            return Err(Error::InsufficientData {
                need: 5,
                got: samples.len(),
            });
        }
        let dt = samples[1].0 - samples[0].0;
        if !(dt > 0.0) {
            return Err(Error::Domain("sample times must strictly increase".into()));
        }
        for w in samples.windows(2) {
            let step = w[1].0 - w[0].0;
            if (step - dt).abs() > 1e-9 * dt.abs().max(1.0) {
                return Err(Error::Domain(
                    "delta samples must be uniformly spaced in t".into(),
                ));
            }
        }
        let n_total = self.total_dim() as f64;
        let mut worst: f64 = 0.0;
        for i in 1..samples.len() - 1 {
            let (t, d) = samples[i];
            if !(d > 0.0) {
                return Err(Error::Domain(format!("delta({t}) = {d} must be positive")));
            }
            let dd = (samples[i + 1].1 - 2.0 * d + samples[i - 1].1) / (dt * dt);
            let ric = self.horizontal_ricci(u0 + t * v0)?;
            worst = worst.max((n_total * dd / d + ric * v0 * v0).abs());
        }
        Ok(worst)
    }
}

/// Uniform discretization of the principal part of the quotient interval.
#[derive(Debug, Clone)]
pub struct QuotientGrid {
    nodes: Vec<f64>,
    spacing: f64,
}

impl QuotientGrid {
    /// Uniform grid spanning the whole principal stratum.
    pub fn span(mf: &WarpedManifold, n: usize) -> Result<Self> {
        let (lo, hi) = mf.principal_span();
        Self::on_interval(mf, lo, hi, n)
    }

    /// Uniform grid on `[lo, hi]`, which must lie inside the principal stratum.
    pub fn on_interval(mf: &WarpedManifold, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config("grid needs at least 2 nodes".into()));
        }
        if !(lo < hi) {
            return Err(Error::Config(format!("empty grid interval [{lo}, {hi}]")));
        }
        if !mf.contains_principal(lo) || !mf.contains_principal(hi) {
            return Err(Error::Config(format!(
                "grid interval [{lo}, {hi}] leaves the principal stratum {:?}",
                mf.principal_span()
            )));
        }
        Ok(Self {
            nodes: crate::quad::uniform_nodes(lo, hi, n),
            spacing: (hi - lo) / (n - 1) as f64,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }
}

/// Declarative manifold description, the config-facing mirror of
/// [`WarpedManifold`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub profile: ProfileSpec,
    pub u_min: f64,
    pub u_max: f64,
    #[serde(default = "default_fiber_dim")]
    pub fiber_dim: u32,
    #[serde(default = "default_fiber_period")]
    pub fiber_period: f64,
    #[serde(default = "default_clamp_fraction")]
    pub clamp_fraction: f64,
}

fn default_fiber_dim() -> u32 {
    1
}

fn default_fiber_period() -> f64 {
    TAU
}

fn default_clamp_fraction() -> f64 {
    DEFAULT_CLAMP_FRACTION
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Preset(PresetProfile),
    Constant { constant: f64 },
    Spline { knots: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetProfile {
    Linear,
    Sin,
    Sinh,
    Cosh,
}

impl ManifoldSpec {
    pub fn build(&self) -> Result<WarpedManifold> {
        let profile = match &self.profile {
            ProfileSpec::Preset(PresetProfile::Linear) => Profile::Linear,
            ProfileSpec::Preset(PresetProfile::Sin) => Profile::Sin,
            ProfileSpec::Preset(PresetProfile::Sinh) => Profile::Sinh,
            ProfileSpec::Preset(PresetProfile::Cosh) => Profile::Cosh,
            ProfileSpec::Constant { constant } => Profile::Constant(*constant),
            ProfileSpec::Spline { knots, values } => {
                Profile::Spline(CubicSpline::natural(knots, values)?)
            }
        };
        WarpedManifold::new(
            profile,
            self.u_min,
            self.u_max,
            self.fiber_dim,
            self.fiber_period,
        )?
        .with_clamp_fraction(self.clamp_fraction)
    }
}
