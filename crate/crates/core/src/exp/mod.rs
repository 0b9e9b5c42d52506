//! Experiment orchestration: JSON-driven configuration, dataset
//! generation, run directories, ablation sweeps, and noise tuning.

mod ablate;
mod config;
mod dataset;
mod lhs;
mod run;

pub use ablate::{
    ablate, tune_noise, AblateOutcome, AblateRow, SummaryMetrics, TuneOutcome, TuneRow,
    NOISE_GRID, RANKED_METRICS,
};
pub use config::{
    DatasetConfig, EvalConfig, ExperimentConfig, MeshConfig, Profile, SplitCounts, ToolConfig,
};
pub use dataset::{
    gen_data, load_split, worker_pool, CaseRecord, DatasetManifest, RESAMPLE_LIMIT, SPLITS,
    THREADS_ENV,
};
pub use lhs::{latin_hypercube, scale_to_range};
pub use run::{
    arch_tag, inspect_attention, load_split_guarded, run_eval, run_train, training_curve_csv,
    variant_tag, TEST_SPLIT,
};
