use thiserror::Error;

/// Errors raised by mesh handling.
#[derive(Debug, Error)]
pub enum MeshError {
    #[error("boundary edges do not form closed loops at vertex {0}")]
    OpenBoundary(usize),
    #[error("boundary vertex {0} is visited by more than one loop")]
    NonManifoldBoundary(usize),
    #[error("layer is pinched: vertex {0} lies on both gamma and the inner layer boundary")]
    PinchedLayer(usize),
    #[error("element {0} has non-positive area")]
    Degenerate(usize),
    #[error("mesh text format: {0}")]
    Parse(String),
    #[error("hanging node at vertex {0}")]
    HangingNode(usize),
    #[error("element index {0} out of range")]
    BadIndex(usize),
}

/// Errors raised by the boundary element solvers.
#[derive(Debug, Error)]
pub enum BemError {
    #[error("segment {0} has zero length")]
    DegenerateSegment(usize),
    #[error("geometry diameter {0} is not below 1")]
    DiameterTooLarge(f64),
    #[error("linear system is not positive definite")]
    NotPositiveDefinite,
    #[error("collocation system is singular or ill-conditioned (condition estimate {0:.3e})")]
    IllConditioned(f64),
    #[error("gradient requested on the boundary at ({0}, {1})")]
    GradientOnBoundary(f64, f64),
    #[error("direct formulation cannot be combined with collocation")]
    DirectCollocation,
}

/// Errors raised by the layer finite element problems.
#[derive(Debug, Error)]
pub enum FemError {
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("layer component without boundary data")]
    Floating,
    #[error("trace degree {trace} does not match element degree {fem}")]
    DegreeMismatch { trace: usize, fem: usize },
}

/// Top-level error of the adaptive driver and experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Bem(#[from] BemError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
