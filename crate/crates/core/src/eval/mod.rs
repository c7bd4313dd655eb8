//! Scoring trained models and the ablation studies.

pub mod experiments;
pub mod report;
pub mod stats;
pub mod svg;

pub use experiments::{
    experiment_latent_variability, experiment_operator_init, experiment_resnet_ablation, AblationReport,
    InitReport, LatentReport,
};
pub use report::{evaluate, evaluate_set, per_sample_losses, stats_csv, Manifest, SetReport};
pub use stats::{quantile, select_exhibits, summarize, BoxStats, Exhibits};
