//! Experiment orchestration: sampler × scheduler × trainer under a budget
//! ledger, with an event log that makes runs resumable and replayable.

pub mod config;
pub mod driver;
pub mod events;
pub mod ledger;
pub mod store;

pub use config::{ExperimentConfig, GenerationPlan, Inner, Method, SamplerSpec, SchedulerSpec, SurrogateSpec, TrainerSpec};
pub use driver::{
    best_trajectory, logged_config, resume, run_experiment, run_in_dir, run_with, EpochEntry, ExperimentResult,
    RepetitionResult, RunOptions, Summary, TrajectoryPoint, TrialRecord, EVENTS_FILE,
};
pub use events::{Event, EventLog};
pub use ledger::BudgetLedger;
pub use store::{write_atomic, CheckpointStore};
