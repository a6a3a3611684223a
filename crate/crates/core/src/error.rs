use thiserror::Error;

/// Errors raised by the geometric, lattice and estimation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("point ({x}, {y}) lies outside the domain")]
    PointOutside { x: f64, y: f64 },
    #[error("singular matrix (|det| = {0:e})")]
    SingularMatrix(f64),
    #[error("degenerate lattice basis (|det| = {0:e})")]
    DegenerateBasis(f64),
    #[error("lattice basis does not have co-area one (|det| = {0})")]
    NotUnimodular(f64),
    #[error("enumeration region too large ({0} candidate points)")]
    RegionTooLarge(f64),
    #[error("no lattice vector with finite coefficient found within the search cap")]
    NotAdmissible,
    #[error("domain is unbounded; the quadrature integrator needs a finite circumradius")]
    UnboundedDomain,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("too many flagged samples: {flagged} of {total}")]
    TooManyFlagged { flagged: usize, total: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("contour is open")]
    OpenContour,
    #[error("center lies outside the polygon")]
    CenterOutside,
    #[error("contour is not convex")]
    NonConvex,
    #[error("degenerate conic fit: {0}")]
    DegenerateFit(String),
    #[error("asymptote frame is singular")]
    FrameSingular,
    #[error("field has no finite values")]
    EmptyField,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
