use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("quaternion norm {norm:e} is below the inversion threshold")]
    NearZeroQuaternion { norm: f64 },

    #[error("point is not on the unit sphere (|P| = {norm})")]
    NotOnSphere { norm: f64 },

    #[error("point coincides with the projection center")]
    AtProjectionCenter,

    #[error("projection line misses the sphere")]
    NoIntersection,

    #[error("projection line is tangent to the sphere")]
    TangentDegenerate,

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("sample points coincide (min separation {min_sep:e})")]
    CoincidentPoints { min_sep: f64 },

    #[error("Im B vanishes: the image is a straight line, not a circle")]
    LineCase,

    #[error("point is outside the model disk (discriminant {disc:e})")]
    OutsideDisk { disc: f64 },

    #[error("Moebius transformation hits a pole")]
    MobiusPole,

    #[error("domain violation: {0}")]
    DomainViolation(Box<Error>),

    #[error("finite-difference stencil leaves the domain: {0}")]
    StencilOutsideDomain(Box<Error>),

    #[error("differential A is degenerate (condition number {cond:e})")]
    DegenerateA { cond: f64 },

    #[error("requested side {requested} is not admitted at this point")]
    SideMismatch { requested: String },

    #[error("x is real; the conjugation orbit is a single point")]
    RealX,

    #[error("invalid map specification: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn domain(cause: Error) -> Self {
        match cause {
            e @ Error::DomainViolation(_) => e,
            other => Error::DomainViolation(Box::new(other)),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
