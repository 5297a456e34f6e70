use thiserror::Error;

/// Errors raised by mesh construction, eigensolves, reduction maps, and the
/// critical point search.
#[derive(Error, Debug)]
pub enum FucikError {
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    #[error("mesh budget exceeded: {requested} unknowns > budget {budget}")]
    BudgetExceeded { requested: usize, budget: usize },

    #[error("mesh mismatch between grid functions")]
    MeshMismatch,

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {residual:.3e})")]
    EigNonConvergence { iterations: usize, residual: f64 },

    #[error("level {level} splits a multiplicity cluster (lambda_{level} = {lambda_l:.9e}, lambda_{next} = {lambda_next:.9e}); raise the level or refine the mesh", next = level + 1)]
    ClusterSplit {
        level: usize,
        lambda_l: f64,
        lambda_next: f64,
    },

    #[error("level {level} requires at least {needed} computed eigenpairs, spectrum has {available}")]
    LevelOutOfRange {
        level: usize,
        needed: usize,
        available: usize,
    },

    #[error("point (a,b) = ({a:.6}, {b:.6}) outside Q_l = ({lo:.6}, {hi:.6})^2 at level {level}")]
    PointOutsideQl {
        a: f64,
        b: f64,
        lo: f64,
        hi: f64,
        level: usize,
    },

    #[error("reduction map did not converge after {iterations} iterations (residual {residual:.3e}); (a,b) may be too close to the boundary of Q_l")]
    ReductionNonConvergence { iterations: usize, residual: f64 },

    #[error("level function has no sign change in ({lo:.6}, {hi:.6}) at a = {a:.6}; a is outside the curve's range at this mesh")]
    NoSignChange { a: f64, lo: f64, hi: f64 },

    #[error("nonlinearity incompatible with dimension {dim}: {reason}")]
    IncompatibleNonlinearity { dim: usize, reason: String },

    #[error("exponential overflow guard: |u| = {value:.3} exceeds the amplitude bound at node {node}")]
    ExponentialOverflow { value: f64, node: usize },

    #[error("geometry precondition violated: {0}")]
    GeometryPrecondition(String),

    #[error("spike degenerate: {0}")]
    SpikeDegenerate(String),

    #[error("invalid parameter window: {0}")]
    InvalidParameters(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),

    #[error("scaling fit needs at least 5 abscissae spanning 1.5 decades, got {points} over {decades:.2} decades")]
    InsufficientDecadeSpan { points: usize, decades: f64 },

    #[error("coercivity horizon not found within parameter range: {0}")]
    CoercivityHorizon(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FucikError>;
