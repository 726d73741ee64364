//! Training loop, evaluation and the repeated-split experiment protocol.

mod experiment;
mod metrics;

pub use experiment::{
    baseline_scores, baseline_seed, predict, repetition_data, run_experiment, run_grid,
    run_repetition, train_model, BaselineSpec, EpochRecord, ExperimentReport, FeatureSource,
    GridCell, RepetitionData, RepetitionOutcome, RepetitionReport, ScoredSample, Summary,
    TrainConfig,
};
pub use metrics::{auc, bce_loss, mean_std, Adam};
