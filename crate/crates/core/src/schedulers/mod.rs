//! Promotion state machines and budget arithmetic.

pub mod halving;
pub mod hyperband;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lr_schedules::{round_boundaries, RoundBoundary};

pub use halving::{Halving, RoundAssignment, RoundOutcome, TrialStatus};
pub use hyperband::{hyperband_plan, Bracket};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// One learning-rate cycle per round, restarted at the initial rate.
    Recurring,
    /// One schedule over `[1, r]`, sliced at round boundaries.
    FullHorizon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub boundaries: Vec<RoundBoundary>,
    pub eta: usize,
    pub s_min: u32,
    pub r: usize,
    pub mode: ScheduleMode,
}

impl RoundPlan {
    pub fn new(eta: usize, s_min: u32, r: usize, mode: ScheduleMode) -> Result<Self> {
        Ok(RoundPlan {
            boundaries: round_boundaries(eta, s_min, r)?,
            eta,
            s_min,
            r,
            mode,
        })
    }

    /// A single round covering `[1, r]`: full training without early stopping.
    pub fn single_round(eta: usize, r: usize, mode: ScheduleMode) -> Result<Self> {
        if r < 1 || eta < 2 {
            return Err(Error::InvalidPlan(format!("bad single-round plan (eta {eta}, r {r})")));
        }
        Ok(RoundPlan {
            boundaries: vec![RoundBoundary {
                s: 0,
                e_start: 1,
                e_end: r,
            }],
            eta,
            s_min: 0,
            r,
            mode,
        })
    }

    pub fn rounds(&self) -> usize {
        self.boundaries.len()
    }

    /// Number of trials entering each round when `n` start.
    pub fn survivor_ladder(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.rounds());
        let mut m = n;
        for _ in &self.boundaries {
            out.push(m);
            m = promoted_count(m, self.eta);
        }
        out
    }
}

/// `max(1, floor(n / eta))`.
pub fn promoted_count(n: usize, eta: usize) -> usize {
    (n / eta).max(1)
}

/// Total epochs billed when `n` trials start. Survivors resume from their
/// checkpoints, so each round only pays for its own epochs.
pub fn plan_cost(plan: &RoundPlan, n: usize) -> u64 {
    plan.survivor_ladder(n)
        .iter()
        .zip(&plan.boundaries)
        .map(|(&m, b)| (m * b.epochs()) as u64)
        .sum()
}

/// Largest `n` with `plan_cost(plan, n) <= budget`.
pub fn solve_n(budget: u64, plan: &RoundPlan) -> Result<usize> {
    if plan_cost(plan, 1) > budget {
        return Err(Error::InfeasibleBudget(format!(
            "budget {budget} cannot pay for one trial ({} epochs)",
            plan_cost(plan, 1)
        )));
    }
    // plan_cost grows at least linearly in n (every trial pays the first
    // round), so budget + 1 is a safe upper bound.
    let (mut lo, mut hi) = (1usize, budget as usize + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if plan_cost(plan, mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Ids of the `max(1, floor(|results| / eta))` best trials, by metric
/// descending then id ascending.
pub fn top_k(results: &[(u64, f64)], eta: usize) -> Result<Vec<u64>> {
    if results.is_empty() {
        return Err(Error::Empty("round results"));
    }
    if let Some((id, m)) = results.iter().find(|(_, m)| !m.is_finite()) {
        return Err(Error::Scheduler(format!("trial {id} reported non-finite metric {m}")));
    }
    let mut sorted = results.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(sorted
        .into_iter()
        .take(promoted_count(results.len(), eta))
        .map(|(id, _)| id)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn morl(eta: usize, s_min: u32, r: usize) -> RoundPlan {
        RoundPlan::new(eta, s_min, r, ScheduleMode::Recurring).unwrap()
    }

    #[test]
    fn top_k_counts() {
        let res = |n: u64| (0..n).map(|i| (i, i as f64)).collect::<Vec<_>>();
        assert_eq!(top_k(&res(27), 3).unwrap().len(), 9);
        assert_eq!(top_k(&res(4), 3).unwrap(), vec![3]);
        assert_eq!(top_k(&res(2), 3).unwrap(), vec![1]);
        assert!(top_k(&[], 3).is_err());
        assert!(top_k(&[(0, f64::NAN)], 3).is_err());
    }

    #[test]
    fn top_k_ties_prefer_small_ids() {
        let res: Vec<_> = [5u64, 3, 9, 1, 7, 2].iter().map(|&i| (i, 0.5)).collect();
        assert_eq!(top_k(&res, 3).unwrap(), vec![1, 2]);
    }

    #[test]
    fn plan_costs() {
        assert_eq!(plan_cost(&morl(3, 2, 27), 27), 405);
        assert_eq!(plan_cost(&morl(3, 2, 164), 27), 816);
        assert_eq!(plan_cost(&morl(3, 2, 164), 1), 164);
        assert_eq!(morl(3, 2, 164).survivor_ladder(27), vec![27, 9, 3]);
    }

    #[test]
    fn solve_n_examples() {
        let p = morl(3, 2, 27);
        assert_eq!(solve_n(500, &p).unwrap(), 33);
        assert_eq!(plan_cost(&p, 33), 495);
        assert_eq!(solve_n(plan_cost(&p, 1), &p).unwrap(), 1);
        assert!(matches!(solve_n(26, &p), Err(Error::InfeasibleBudget(_))));
    }

    #[test]
    fn single_round_is_full_training() {
        let p = RoundPlan::single_round(3, 81, ScheduleMode::FullHorizon).unwrap();
        assert_eq!(solve_n(64 * 81, &p).unwrap(), 64);
        assert_eq!(plan_cost(&p, 64), 64 * 81);
    }

    proptest! {
        #[test]
        fn solve_n_is_maximal(eta in 2usize..=4, s_min in 0u32..3, r in 1usize..300, slack in 0u64..5000) {
            prop_assume!(eta.pow(s_min) <= r);
            let p = morl(eta, s_min, r);
            let budget = r as u64 + slack;
            let n = solve_n(budget, &p).unwrap();
            prop_assert!(plan_cost(&p, n) <= budget);
            prop_assert!(plan_cost(&p, n + 1) > budget);
        }

        #[test]
        fn cost_monotone_in_n(eta in 2usize..=4, r in 1usize..300, n in 1usize..500) {
            let p = morl(eta, 0, r);
            prop_assert!(plan_cost(&p, n) <= plan_cost(&p, n + 1));
            let ladder = p.survivor_ladder(n);
            prop_assert!(*ladder.last().unwrap() >= 1);
        }

        #[test]
        fn top_k_is_permutation_invariant(
            metrics in proptest::collection::vec(0u8..5, 1..40),
            eta in 2usize..=4,
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let res: Vec<(u64, f64)> = metrics.iter().enumerate().map(|(i, &m)| (i as u64, m as f64)).collect();
            let mut shuffled = res.clone();
            shuffled.shuffle(&mut crate::seeding::rng(seed));
            let a = top_k(&res, eta).unwrap();
            prop_assert_eq!(&a, &top_k(&shuffled, eta).unwrap());
            let worst_promoted = a.iter().map(|&i| res[i as usize].1).fold(f64::INFINITY, f64::min);
            for (id, m) in &res {
                if !a.contains(id) {
                    prop_assert!(*m <= worst_promoted);
                }
            }
        }
    }
}
