use thiserror::Error;

/// Errors raised by the library. Variants carry the offending indices and values.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("positive-capacity subgraph is disconnected")]
    DisconnectedCapacity,
    #[error("linear solve residual {residual:e} exceeds bound {bound:e}")]
    SingularSolve { residual: f64, bound: f64 },
    #[error("nonzero flux on zero-capacity edge ({x}, {y})")]
    ZeroCapacityEdge { x: usize, y: usize },
    #[error("detailed balance fails on edge ({x}, {y}): relative violation {violation:e}")]
    NotReversible { x: usize, y: usize, violation: f64 },
    #[error("row {row} is not stochastic: sum {sum}")]
    NonStochasticRow { row: usize, sum: f64 },
    #[error("matrix exponential needs {squarings} squarings (limit 60)")]
    Stiff { squarings: u32 },
    #[error("absolute continuity fails at state {state}")]
    AbsoluteContinuity { state: usize },
    #[error("state space of size {states} is too large for grid mode (max 4)")]
    TooLargeForGrid { states: usize },
    #[error("path for pair ({x}, {y}) is broken at step {step}")]
    BrokenPath { x: usize, y: usize, step: usize },
    #[error("no canonical path supplied for pair ({x}, {y})")]
    MissingPath { x: usize, y: usize },
    #[error("negative rate argument {value}")]
    NegativeRate { value: f64 },
    #[error("support mismatch on ({x}, {y}): first rate positive where second vanishes")]
    SupportMismatch { x: usize, y: usize },
    #[error("rate {rate:e} exceeds cap {cap:e}")]
    RateCapExceeded { rate: f64, cap: f64 },
    #[error("zero rate on shared edge ({x}, {y})")]
    ZeroRateEdge { x: usize, y: usize },
    #[error("action unavailable: {0}")]
    ActionUnavailable(Box<Error>),
    #[error("at grid node {index} (s = {s}): {source}")]
    AtGridNode { index: usize, s: f64, source: Box<Error> },
    #[error("{what} has size {size}, above the cap {cap}")]
    TooLarge { what: &'static str, size: u128, cap: u128 },
    #[error("beta = {beta} is below the required minimum {min}")]
    PreconditionBeta { beta: f64, min: f64 },
    #[error("mass-rate vector is unbalanced: residual {residual:e}")]
    UnbalancedD { residual: f64 },
    #[error("symmetry hypothesis fails: {0}")]
    SymmetryViolated(String),
}

pub type Result<T> = std::result::Result<T, Error>;
