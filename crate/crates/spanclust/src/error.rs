//! Error types, one enum per subsystem.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph is disconnected; components: {0:?}")]
    DisconnectedGraph(Vec<Vec<u32>>),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(u32, u32),
    #[error("self loop at region {0}")]
    SelfLoop(u32),
    #[error("edge endpoint {index} out of range for {n_regions} regions")]
    IndexOutOfRange { index: u32, n_regions: usize },
    #[error("graph needs at least 2 regions, got {0}")]
    TooFewRegions(usize),
    #[error("edge list is empty")]
    NoEdges,
    #[error("region id list has length {got}, expected {expected}")]
    RegionIdLength { got: usize, expected: usize },
    #[error("missing weight for edge ({0}, {1})")]
    MissingWeight(u32, u32),
    #[error("weight for edge ({0}, {1}) is not finite")]
    NonFiniteWeight(u32, u32),
    #[error("weight count {got} does not match edge count {expected}")]
    WeightCount { got: usize, expected: usize },
    #[error("edge ({0}, {1}) is not a tree edge")]
    EdgeNotInTree(u32, u32),
    #[error("unknown edge ({0}, {1})")]
    UnknownEdge(u32, u32),
}

#[derive(Debug, Error)]
pub enum MoveError {
    #[error("no eligible edge for {kind} move at C = {n_clusters}")]
    NoEligibleEdge { kind: &'static str, n_clusters: u32 },
    #[error("geometric prior parameter q = {0} outside [0, 1)")]
    InvalidQ(f64),
    #[error("move probabilities {0:?} must be nonnegative and sum to 1")]
    InvalidProbs([f64; 4]),
    #[error("cluster count {0} outside [1, {1}]")]
    InvalidClusterCount(u32, u32),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("hyperparameter slot '{0}' is unbound")]
    UnboundHyper(String),
    #[error("hyperparameter vector has length {got}, model has {expected} slots")]
    HyperLength { got: usize, expected: usize },
    #[error("seasonal period {period} too large for {t_len} time points")]
    PeriodTooLarge { period: usize, t_len: usize },
    #[error("seasonal period {0} must be at least 2")]
    PeriodTooSmall(usize),
    #[error("AR1 correlation {0} outside (-1, 1)")]
    NonStationaryRho(f64),
    #[error("precision {0} must be positive")]
    NonPositivePrecision(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("negative count {value} at region row {row}, time {col} for poisson family")]
    NegativeCount { value: f64, row: usize, col: usize },
    #[error("non-integer count {value} at region row {row}, time {col} for poisson family")]
    NonIntegerCount { value: f64, row: usize, col: usize },
    #[error("unknown component kind '{0}'")]
    UnknownComponent(String),
    #[error("unknown observation family '{0}'")]
    UnknownFamily(String),
    #[error("component '{0}' requires {1}")]
    MissingComponentInput(&'static str, &'static str),
    #[error("model needs at least {0} time points")]
    TooFewTimePoints(usize),
    #[error("invalid prior for slot '{slot}': {reason}")]
    InvalidPrior { slot: String, reason: String },
    #[error("duplicate component label '{0}'")]
    DuplicateLabel(String),
    #[error("missing observation at region row {row}, time {col}")]
    MissingObservation { row: usize, col: usize },
}

#[derive(Debug, Error)]
pub enum LaplaceError {
    #[error("inner Newton did not converge after {iters} iterations (grad norm {grad_norm:.3e})")]
    NoConvergence { iters: usize, grad_norm: f64 },
    #[error("updated precision is not positive definite")]
    SingularHessian,
    #[error("hyperparameter optimisation failed: {0}")]
    OptimFailed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("missing marginal for cluster {0:?}")]
    MissingMarginal(Vec<u32>),
    #[error("initial cluster count {c0} outside [1, {n_regions}]")]
    InvalidInitialClusters { c0: u32, n_regions: usize },
    #[error("iteration count must be at least 1")]
    NoIterations,
    #[error("panel has {got} regions, graph has {expected}")]
    PanelSize { got: usize, expected: usize },
    #[error("corrupt trace: {0}")]
    TraceCorrupt(String),
    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),
    #[error(transparent)]
    Laplace(#[from] LaplaceError),
    #[error(transparent)]
    Move(#[from] MoveError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error("empty trace")]
    EmptyTrace,
    #[error("membership vectors have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("region sets differ between estimate and truth")]
    RegionMismatch,
}
