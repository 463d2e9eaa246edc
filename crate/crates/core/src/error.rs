use thiserror::Error;

/// Error variants shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument left the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The warp profile vanished (or went negative) strictly inside the
    /// quotient interval, i.e. at a point that should be a principal orbit.
    #[error("singular orbit: profile f({u}) = {f} is not positive")]
    SingularOrbit { u: f64, f: f64 },

    /// A horizontal geodesic left the quotient interval.
    #[error("geodesic escape: started at u = {start} with velocity {velocity}, exits the domain at t = {exit_time}")]
    GeodesicEscape {
        start: f64,
        velocity: f64,
        exit_time: f64,
    },

    /// A transported particle left the principal stratum.
    #[error("particle {particle} escapes the principal stratum at t = {time} (reaches u = {u})")]
    ParticleEscape { particle: usize, time: f64, u: f64 },

    /// The transport Jacobian collapsed; the Monge description has failed.
    #[error("caustic: jacobian {jacobian:.3e} at particle {particle}, t = {time}")]
    Caustic {
        particle: usize,
        time: f64,
        jacobian: f64,
    },

    /// Too few samples for a finite-difference validator.
    #[error("insufficient data: need at least {need} samples, got {got}")]
    InsufficientData { need: usize, got: usize },

    /// A measure with empty (or numerically vanishing) support.
    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),

    /// Mismatched grid shapes between two objects that must share one.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Discrete marginals do not carry equal mass.
    #[error("marginal error: masses {mass_a} and {mass_b} differ by more than {tol:.1e}")]
    MarginalMismatch { mass_a: f64, mass_b: f64, tol: f64 },

    /// Instance too large for the exact LP cross-check solver.
    #[error("LP oracle limited to {limit} atoms per side, got {got}")]
    TooManyAtoms { limit: usize, got: usize },

    /// A reference potential produced a non-normalizable fiber measure.
    #[error("mass error: {0}")]
    MassError(String),

    /// Reference potentials must be constant along horizontal directions.
    #[error("potential varies along horizontal directions (max variation {variation:.3e}); only fiber-dependent potentials are admitted")]
    NonHorizontalPotential { variation: f64 },

    /// Invalid manifold or grid description.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed density CSV input.
    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
