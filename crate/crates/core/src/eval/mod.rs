//! Evaluation machinery: ground-truth ranks and weighted Spearman, partition
//! function and guess-number estimation, and perturbation experiments.

mod attack;
mod experiment;
mod guess;
mod partition;
mod ranks;

pub use attack::{AttackConfig, NgramAttack};
pub use experiment::{agi_pnp, run_perturbation_experiment, ExperimentConfig, ExperimentReport, ExperimentRow};
pub use guess::{
    exact_guess_number, ExactRanker, GuessMethod, GuessNumberResult, MonteCarloGuesser, DESK_CAP, REPORTING_CAP,
};
pub use partition::{estimate_partition, exact_partition, PartitionEstimate, PartitionSampler, Proposal};
pub use ranks::{
    as_f64, competition_ranks, ground_truth_ranks, meter_ranks, rank_weights, ranks_from_scores, weighted_spearman,
    RankedTestSet,
};
