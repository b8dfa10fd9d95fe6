//! Synchronous successive halving. MORL and SHA share this machine; they
//! differ only in the plan's [`ScheduleMode`](super::ScheduleMode).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{top_k, RoundPlan};
use crate::error::{Error, Result};
use crate::lr_schedules::RoundBoundary;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialStatus {
    Pending,
    Running { round: u32 },
    AwaitingPromotion { round: u32, metric: f64 },
    Stopped { round: u32 },
    Completed { metric: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundAssignment {
    pub index: usize,
    pub boundary: RoundBoundary,
    /// Active trial ids, ascending.
    pub trials: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RoundOutcome {
    Promoted { promoted: Vec<u64>, stopped: Vec<u64> },
    Finished { best: u64, metric: f64 },
}

#[derive(Clone, Debug)]
pub struct Halving {
    plan: RoundPlan,
    round: usize,
    active: Vec<u64>,
    in_round: bool,
    history: BTreeMap<u64, Vec<TrialStatus>>,
    selection: Option<(u64, f64)>,
}

impl Halving {
    pub fn new(plan: RoundPlan, mut trials: Vec<u64>) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::Empty("trial set"));
        }
        trials.sort_unstable();
        if trials.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Scheduler("duplicate trial id".into()));
        }
        let history = trials.iter().map(|&id| (id, vec![TrialStatus::Pending])).collect();
        Ok(Halving {
            plan,
            round: 0,
            active: trials,
            in_round: false,
            history,
            selection: None,
        })
    }

    pub fn plan(&self) -> &RoundPlan {
        &self.plan
    }

    pub fn is_finished(&self) -> bool {
        self.selection.is_some()
    }

    pub fn selection(&self) -> Option<(u64, f64)> {
        self.selection
    }

    pub fn status(&self, id: u64) -> Option<TrialStatus> {
        self.history.get(&id).and_then(|h| h.last().copied())
    }

    pub fn history(&self, id: u64) -> Option<&[TrialStatus]> {
        self.history.get(&id).map(Vec::as_slice)
    }

    fn push(&mut self, id: u64, status: TrialStatus) {
        self.history.get_mut(&id).expect("known trial").push(status);
    }

    /// Moves every active trial to `Running` and returns the round's work.
    pub fn start_round(&mut self) -> Result<RoundAssignment> {
        if self.is_finished() {
            return Err(Error::Scheduler("experiment already finished".into()));
        }
        if self.in_round {
            return Err(Error::Scheduler(format!("round {} already started", self.round)));
        }
        let boundary = self.plan.boundaries[self.round];
        for id in self.active.clone() {
            self.push(id, TrialStatus::Running { round: boundary.s });
        }
        self.in_round = true;
        Ok(RoundAssignment {
            index: self.round,
            boundary,
            trials: self.active.clone(),
        })
    }

    /// Takes one report per active trial, in any order, and promotes.
    pub fn complete_round(&mut self, results: &[(u64, f64)]) -> Result<RoundOutcome> {
        if !self.in_round {
            return Err(Error::Scheduler("no round in progress".into()));
        }
        let mut by_id = BTreeMap::new();
        for &(id, m) in results {
            if self.active.binary_search(&id).is_err() {
                return Err(Error::Scheduler(format!("report for inactive trial {id}")));
            }
            if by_id.insert(id, m).is_some() {
                return Err(Error::Scheduler(format!("duplicate report for trial {id}")));
            }
        }
        if let Some(missing) = self.active.iter().find(|id| !by_id.contains_key(id)) {
            return Err(Error::Scheduler(format!("missing report for trial {missing}")));
        }
        let s = self.plan.boundaries[self.round].s;
        for (&id, &metric) in &by_id {
            self.push(id, TrialStatus::AwaitingPromotion { round: s, metric });
        }
        let ranked = top_k(results, self.plan.eta)?;
        self.in_round = false;

        if self.round + 1 == self.plan.rounds() {
            for (&id, &metric) in &by_id {
                self.push(id, TrialStatus::Completed { metric });
            }
            let best = ranked[0];
            let metric = by_id[&best];
            self.selection = Some((best, metric));
            return Ok(RoundOutcome::Finished { best, metric });
        }

        let mut promoted = ranked;
        promoted.sort_unstable();
        let stopped: Vec<u64> = self
            .active
            .iter()
            .copied()
            .filter(|id| promoted.binary_search(id).is_err())
            .collect();
        for &id in &stopped {
            self.push(id, TrialStatus::Stopped { round: s });
        }
        self.active = promoted.clone();
        self.round += 1;
        Ok(RoundOutcome::Promoted { promoted, stopped })
    }
}
