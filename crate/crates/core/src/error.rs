use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unsupported dimension {0}; expected 2 or 3")]
    UnsupportedDimension(usize),
    #[error("resolution too coarse: {got} nodes per diameter, need at least {min}")]
    ResolutionTooCoarse { got: usize, min: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("metric is not positive definite at node {coords:?}")]
    NotPositiveDefinite { coords: [f64; 3] },
    #[error("node {0:?} is outside the chart mask")]
    NodeOutsideMask([i32; 3]),
    #[error("{count} masked nodes are unreachable from the source")]
    Unreachable { count: usize },
    #[error("geodesic ball around {center:?} touches the chart boundary")]
    BallTouchesBoundary { center: [i32; 3] },
    #[error("linear system is singular or the solver failed: {0}")]
    SolverFailure(String),
    #[error("quadrature did not converge: successive refinements differ by {rel_diff:e}")]
    QuadratureNotConverged { rel_diff: f64 },
    #[error("point {0:?} lies outside the evaluation region")]
    OutsideEvaluationRegion([i32; 3]),
    #[error("cell centred at {center:?} could not be solved: {reason}")]
    CellUnsolvable { center: [i32; 3], reason: String },
    #[error("degenerate tangent frame: Gram matrix is singular")]
    DegenerateFrame,
    #[error("directions are nearly parallel")]
    ParallelDirections,
    #[error("operation requires dimension 2, got {0}")]
    RequiresPlanar(usize),
    #[error("derivative order {k} is not supported by the grid (max {max})")]
    InsufficientResolution { k: usize, max: usize },
    #[error("chart not injective: distinct preimages of one manifold point")]
    ChartNotInjective,
    #[error("lift left the chart ball at step {step}")]
    LiftExitsChart { step: usize },
    #[error("curve step {step} is too long to lift unambiguously")]
    StepTooLong { step: usize },
    #[error("preimages do not project to the same manifold point")]
    PreimageMismatch,
    #[error("sample point {index} at {point:?} is not covered by any chart")]
    Uncovered { index: usize, point: [f64; 2] },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
