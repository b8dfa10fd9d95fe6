//! Configuration suggestion: uniform random search and TPE.

pub mod tpe;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::search_space::{Config, SearchSpace};

pub use tpe::{tpe_split, tpe_suggest, Suggestion, TpeParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub config: Config,
    /// Higher is better.
    pub objective: f64,
}

pub fn random_suggest<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Config {
    space.sample(rng, "random")
}
