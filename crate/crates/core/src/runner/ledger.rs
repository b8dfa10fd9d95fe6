use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Epoch accounting against the experiment budget.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub budget: u64,
    pub consumed: u64,
    pub per_trial: BTreeMap<u64, u64>,
}

impl BudgetLedger {
    pub fn new(budget: u64) -> Self {
        BudgetLedger {
            budget,
            ..Default::default()
        }
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.consumed
    }

    /// Bills `epochs` to `trial` and returns the new total.
    pub fn bill(&mut self, trial: u64, epochs: u64) -> Result<u64> {
        if self.consumed + epochs > self.budget {
            return Err(Error::BudgetExceeded {
                consumed: self.consumed,
                requested: epochs,
                budget: self.budget,
            });
        }
        self.consumed += epochs;
        *self.per_trial.entry(trial).or_default() += epochs;
        Ok(self.consumed)
    }

    pub fn billed(&self, trial: u64) -> u64 {
        self.per_trial.get(&trial).copied().unwrap_or(0)
    }
}
