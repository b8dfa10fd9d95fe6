//! Multi-fidelity hyperparameter optimization with recurring learning-rate
//! schedules.
//!
//! The crate is organised around the pieces of a successive-halving style
//! experiment:
//!
//! - [`search_space`]: hyperparameter domains, sampling and the unit-cube
//!   transform.
//! - [`lr_schedules`]: round boundaries and per-step learning rates, both
//!   recurring (restarted every promotion round) and full-horizon.
//! - [`trainers`]: the trainer contract plus a learning-curve surrogate and a
//!   small momentum-SGD network.
//! - [`schedulers`]: promotion state machines for SHA, MORL and Hyperband,
//!   together with the budget arithmetic.
//! - [`samplers`]: random search and a Tree-structured Parzen Estimator.
//! - [`runner`]: orchestration, budget ledger, event log, resume.
//!
//! Round work fans out over a rayon pool when the `parallel` feature is on
//! (the default); without it every map runs sequentially.

pub mod error;
pub mod lr_schedules;
pub mod parallel;
pub mod runner;
pub mod samplers;
pub mod schedulers;
pub mod search_space;
pub mod seeding;
pub mod stats;
pub mod trainers;

pub use error::{Error, Result};
pub use lr_schedules::{CyclePlan, LrSchedule, RoundBoundary, ScheduleKind};
pub use runner::{ExperimentConfig, ExperimentResult, RunOptions};
pub use schedulers::{RoundPlan, ScheduleMode};
pub use search_space::{Config, ParamDomain, SearchSpace};
pub use trainers::{EpochReport, Trainer};
