//! Experiment orchestration: seeded runs, suites, probes, baselines and
//! ablation grids.

mod ablation;
mod experiment;
mod method;
mod probe;
mod suite;

pub use ablation::{run_ablation, AblationCell, AblationGrid, AblationReport, AblationRow};
pub use experiment::{
    default_runs, run_experiment, run_once, run_seed, train_method, DataSource, ExperimentConfig, ModelEnvelope,
    PreparedData, RunOutcome, TrainedModel,
};
pub use method::{MethodId, ModelConfig};
pub use probe::{constant_baseline, probe_special_cases, PairCheck, ProbeReport, ProbeResult, SPECIAL_CASES};
pub use suite::{
    dataset_label, emit_loss_curves, loss_curve_path, run_suite, strip_timestamp, RunRecord, SuiteReport, SuiteRow,
    SuiteSettings,
};
