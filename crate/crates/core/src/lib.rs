//! Optimal-transport annealing on finite reversible Markov chains.

// Negated comparisons such as `!(x > 0)` are how inputs reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annealing;
pub mod combinatorics;
pub mod error;
pub mod gibbs;
pub mod girsanov;
pub mod graph;
pub mod ising;
pub mod linalg;
pub mod markov;
pub mod num;
pub mod potts;
pub mod quadrature;
pub mod schedule;
pub mod symmetry;
pub mod transport;

pub use error::{Error, Result};
pub use gibbs::GibbsModel;
pub use graph::{divergence, Capacity, Flux, MassRate, ProbVector, StateGraph};
pub use num::Real;
pub use schedule::Schedule;

/// Double-precision aliases for the common case.
pub type ProbVectorF64 = ProbVector<f64>;
pub type MassRateF64 = MassRate<f64>;
pub type CapacityF64 = Capacity<f64>;
pub type FluxF64 = Flux<f64>;
pub type RateKernelF64 = markov::RateKernel<f64>;
pub type ScheduleF64 = Schedule<f64>;
