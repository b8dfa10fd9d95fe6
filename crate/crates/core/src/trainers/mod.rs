//! The trainer contract and its two implementations.
//!
//! A trainer owns whatever is shared between trials (a dataset, a hidden task)
//! and hands out per-trial [`Trainer::State`] values. States move between
//! workers only as checkpoint bytes.

pub mod blob;
pub mod surrogate;
pub mod toy_sgd;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::search_space::Config;

pub use surrogate::{SurrogateParams, SurrogateState, SurrogateTask, SurrogateTrainer};
pub use toy_sgd::{ToySgdState, ToySgdTrainer};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub val_metric: f64,
    pub final_step_lr: f64,
}

pub trait Trainer: Send + Sync {
    type State: Send;

    fn init(&self, config: &Config, seed: u64) -> Result<Self::State>;

    fn steps_per_epoch(&self, state: &Self::State) -> usize;

    fn epochs_trained(&self, state: &Self::State) -> usize;

    /// Trains one epoch. `lr_for_step` is queried once per step with the
    /// step index inside this epoch.
    fn train_epoch(&self, state: &mut Self::State, lr_for_step: &dyn Fn(usize) -> f64) -> Result<EpochReport>;

    fn evaluate(&self, state: &Self::State) -> f64;

    fn checkpoint(&self, state: &Self::State) -> Vec<u8>;

    fn restore(&self, bytes: &[u8]) -> Result<Self::State>;
}

pub(crate) fn check_lr(lr: f64) -> Result<f64> {
    if lr.is_finite() && lr >= 0.0 {
        Ok(lr)
    } else {
        Err(crate::Error::InvalidLearningRate(lr))
    }
}
