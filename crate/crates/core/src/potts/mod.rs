//! Mean-field Potts model: Gibbs weights on `[q]ⁿ`, `(q-1)`-block heat-bath dynamics, exact
//! lumped chains on magnetization vectors, constructive paths and fluxes, and the annealing
//! harness.

pub mod chain;
pub mod flux;
pub mod paths;
pub mod pipeline;

pub use chain::{
    block_glauber_kernel, magnetization_projection, orbit_size, potts_distribution, sorted, sorting_projection, FullPotts, PottsModel,
    ProjectedPotts,
};
pub use flux::{greedy_flux, PlanCheck, TransportPlan};
pub use paths::{diagonal_mode, diagonal_point, diagonal_profile, is_unimodal, potts_path};
pub use pipeline::{potts_action, potts_init, potts_pipeline, PottsHorizon, PottsInit};
