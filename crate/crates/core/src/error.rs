use alloc::string::String;

/// Errors produced anywhere in the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite coordinate or value")]
    NonFinite,
    #[error("polyline needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("consecutive polyline vertices {0} and {1} coincide")]
    RepeatedVertex(usize, usize),
    #[error("polyline has zero length")]
    DegeneratePolyline,
    #[error("homography is singular (|det| = {0:e})")]
    SingularHomography(f64),
    #[error("projection is degenerate: homogeneous w = {0:e}")]
    DegenerateProjection(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parameter `{name}` = {value} outside [{lo}, {hi}]")]
    ParamOutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no valid direction group in scene `{0}`")]
    NoValidGroups(String),
    #[error("every grid point failed detection")]
    GridExhausted,
    #[error("wire message malformed: {0}")]
    Decode(String),
}

pub type Result<T> = core::result::Result<T, Error>;
