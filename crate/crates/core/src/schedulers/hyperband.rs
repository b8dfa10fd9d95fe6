//! Hyperband as a grid over the minimum exponent, with an equal budget split.

use serde::{Deserialize, Serialize};

use super::{plan_cost, solve_n, RoundPlan, ScheduleMode};
use crate::error::{Error, Result};
use crate::lr_schedules::max_exponent;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub s_min: u32,
    pub plan: RoundPlan,
    pub allocated_budget: u64,
    pub n: usize,
}

/// One bracket per `s_min ∈ 0..=floor(log_eta r)`. The budget is split
/// equally; the remainder goes to the bracket with the smallest `s_min`.
pub fn hyperband_plan(budget: u64, eta: usize, r: usize, mode: ScheduleMode) -> Result<Vec<Bracket>> {
    if eta < 2 || r < 1 {
        return Err(Error::InvalidPlan(format!("bad hyperband grid (eta {eta}, r {r})")));
    }
    let count = max_exponent(eta, r) as u64 + 1;
    let share = budget / count;
    let remainder = budget % count;
    (0..count as u32)
        .map(|s_min| {
            let plan = RoundPlan::new(eta, s_min, r, mode)?;
            let allocated_budget = share + if s_min == 0 { remainder } else { 0 };
            if allocated_budget < plan_cost(&plan, 1) {
                return Err(Error::InfeasibleBudget(format!(
                    "bracket s_min={s_min} gets {allocated_budget} epochs, less than one full trial ({r})"
                )));
            }
            let n = solve_n(allocated_budget, &plan)?;
            Ok(Bracket {
                s_min,
                plan,
                allocated_budget,
                n,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brackets_for_r27() {
        let b = hyperband_plan(4000, 3, 27, ScheduleMode::Recurring).unwrap();
        assert_eq!(b.iter().map(|x| x.s_min).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert!(b.iter().all(|x| x.allocated_budget == 1000));
        for x in &b {
            assert!(plan_cost(&x.plan, x.n) <= x.allocated_budget);
        }
        // s_min = 3 is a single 27-epoch round.
        assert_eq!(b[3].n, 1000 / 27);
    }

    #[test]
    fn remainder_goes_to_first_bracket() {
        let b = hyperband_plan(4003, 3, 27, ScheduleMode::FullHorizon).unwrap();
        assert_eq!(b[0].allocated_budget, 1003);
        assert_eq!(b.iter().map(|x| x.allocated_budget).sum::<u64>(), 4003);
    }

    #[test]
    fn too_small_budget() {
        assert!(matches!(
            hyperband_plan(100, 3, 27, ScheduleMode::Recurring),
            Err(Error::InfeasibleBudget(_))
        ));
    }
}
