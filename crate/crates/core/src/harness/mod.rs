//! Experiment runner: configuration, per-fold training, cross-validation and
//! ablation sweeps.

mod config;
mod cv;
mod train;

pub use config::{synthetic_config_from_file, DatasetSpec, EvalLabels, ExperimentConfig, Strategy};
pub use cv::{
    run_ablation, run_cross_validation, strategy_label, AblationAxis, AblationTable, AlphaSetting,
    FoldFailure, RunArtifacts,
};
pub use train::{train_one_fold, EpochDiscards, FoldOutcome};
