//! # quocert
//!
//! A numerical laboratory for curvature certification on quotients of
//! isometric torus actions, realized as warped products M = I x T^m.
//!
//! The pipeline:
//!
//! 1. [`geometry`] — warped-product manifolds, horizontal geodesics, and two
//!    independent Ricci oracles (analytic profile derivatives vs finite
//!    differences), plus a Riccati-comparison validator for transport
//!    Jacobians.
//! 2. [`measures`] — absolutely continuous measures on M, their
//!    disintegration into per-orbit conditionals against the quotient
//!    marginal, the gluing reconstruction, and the non-compact reference
//!    measure variant.
//! 3. [`transport`] — quotient optimal transport: closed-form monotone
//!    rearrangements, an exact discrete LP oracle, Wasserstein-2 distances,
//!    displacement interpolation with full transport Jacobians, and
//!    Hopf-Lax potential evolution.
//! 4. [`convexity`] — the internal-energy functional, the Lambda_N quadratic
//!    form, the Green kernel, displacement-convexity residuals, the
//!    curvature-bound estimator, and second-order Taylor validators.
//!
//! The headline object is the [`convexity::ConvexityReport`]: per-geodesic
//! estimates of the largest K for which the energy functional is
//! K Lambda_N-displacement convex, whose infimum recovers the horizontal
//! Ricci lower bound of the manifold.

pub mod convexity;
pub mod error;
pub mod geometry;
pub mod measures;
pub mod quad;
pub mod spline;
pub mod transport;

pub use error::{Error, Result};
pub use geometry::{ManifoldSpec, Profile, QuotientGrid, WarpedManifold};
