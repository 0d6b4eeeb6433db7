//! EVCI siting: exhaustive enumeration and multi-objective PSO.

mod archive;
mod exhaustive;
mod pso;

pub use archive::{
    best_compromise, crowding_distances, dominates, fuzzy_scores, nearest_sigma, sigma, sigma_leader, ArchiveEntry,
    ObjectivePair, ParetoArchive,
};
pub use exhaustive::{
    combinations_count, enumerate_all, enumerate_with_budget, pareto_front, CloudPoint, ExhaustiveReport,
    DEFAULT_ENUMERATION_BUDGET,
};
pub use pso::{repair_position, run_mopso, Particle, PsoConfig, RunTrace, SitingReport};

use thiserror::Error;

use crate::loadflow::{objectives, solve, LoadFlowConfig};
use crate::network::{apply_placement, FeederNetwork, NetworkError, Placement};

#[derive(Debug, Error)]
pub enum SitingError {
    #[error("no feasible placement found")]
    NoFeasiblePlacement,
    #[error("{combinations} combinations exceed the enumeration budget of {budget}; use the PSO optimizer instead")]
    BudgetExceeded { combinations: u128, budget: u128 },
    #[error("cannot place {n_evci} EVCIs on {candidates} candidate buses")]
    TooManyEvcis { n_evci: usize, candidates: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Objective pair of a placement; unusable load flows map to `+inf`.
pub fn evaluate(net: &FeederNetwork, placement: &Placement, lf: &LoadFlowConfig) -> ObjectivePair {
    let Ok(placed) = apply_placement(net, placement) else {
        return ObjectivePair::INFEASIBLE;
    };
    evaluate_network(&placed, lf)
}

pub(crate) fn evaluate_network(net: &FeederNetwork, lf: &LoadFlowConfig) -> ObjectivePair {
    let sol = solve(net, lf);
    if !sol.is_usable() {
        return ObjectivePair::INFEASIBLE;
    }
    let (loss, dev) = objectives(&sol, lf);
    ObjectivePair::new(loss, dev)
}
