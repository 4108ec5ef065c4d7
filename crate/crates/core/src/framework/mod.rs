//! The mission loop tying terrain learning, planning and execution together,
//! plus benchmark metrics and file exports.

mod belief_map;
mod bench;
mod config;
mod export;
mod metrics;
mod mission;
mod model;

pub use belief_map::GridBelief;
pub use bench::{
    run_bench, summarize, sweep_retrain, write_runs_csv, write_summary_csv, write_sweep_csv,
    BenchRun, KernelSummary, SweepRow,
};
pub use config::{
    GlobalSettings, KernelChoice, LocalSettings, MissionConfig, ModelErrorSettings,
    TerrainGpSettings,
};
pub use export::{export, write_json};
pub use metrics::{compute_metrics, BenchmarkReport};
pub use mission::{
    run_mission, run_mission_on, train_model_error, CandidateRecord, EpochRecord, ExecutionModels,
    MissionLog, Outcome, RetrainReason, RetrainRecord, StepRecord,
};
pub use model::{RefitSummary, TerrainModel};
