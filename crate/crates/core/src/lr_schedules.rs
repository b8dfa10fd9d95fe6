//! Round boundaries and per-step learning rates.
//!
//! A recurring schedule is condensed into each promotion round and restarted
//! at the initial rate when the round begins. A full-horizon schedule ignores
//! the round structure and reads the global epoch/step position over `[1, r]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fractions of the 164-epoch baseline at which the step schedule decays.
pub const BASELINE_FRACTIONS: [f64; 2] = [81.0 / 164.0, 122.0 / 164.0];
pub const BASELINE_FACTOR: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundBoundary {
    pub s: u32,
    pub e_start: usize,
    pub e_end: usize,
}

impl RoundBoundary {
    pub fn epochs(&self) -> usize {
        self.e_end - self.e_start + 1
    }
}

/// Largest `s` with `eta^s <= r`.
pub fn max_exponent(eta: usize, r: usize) -> u32 {
    let mut s = 0u32;
    let mut p = 1usize;
    while let Some(next) = p.checked_mul(eta) {
        if next > r {
            break;
        }
        p = next;
        s += 1;
    }
    s
}

pub fn round_boundaries(eta: usize, s_min: u32, r: usize) -> Result<Vec<RoundBoundary>> {
    if eta < 2 {
        return Err(Error::InvalidPlan(format!("eta must be at least 2, got {eta}")));
    }
    if r < 1 {
        return Err(Error::InvalidPlan("r must be at least 1".into()));
    }
    match eta.checked_pow(s_min) {
        Some(p) if p <= r => {}
        _ => {
            return Err(Error::InvalidPlan(format!(
                "eta^s_min = {eta}^{s_min} exceeds r = {r}"
            )))
        }
    }
    let s_max = max_exponent(eta, r);
    let out = (s_min..=s_max)
        .map(|s| RoundBoundary {
            s,
            e_start: if s == s_min { 1 } else { eta.pow(s - 1) + 1 },
            e_end: if s == s_max { r } else { eta.pow(s) },
        })
        .collect();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    CosineRecurring,
    StepCondensed {
        #[serde(default = "baseline_fractions")]
        fractions: Vec<f64>,
        #[serde(default = "baseline_factor")]
        factor: f64,
    },
    CyclicalTriangular {
        #[serde(default)]
        floor_fraction: f64,
    },
    LinearRecurring,
    FullHorizonCosine,
    /// `milestones: None` scales the baseline 81/164, 122/164 decay points to
    /// the horizon of the plan.
    FullHorizonStep {
        #[serde(default)]
        milestones: Option<Vec<usize>>,
        #[serde(default = "baseline_factor")]
        factor: f64,
    },
}

fn baseline_fractions() -> Vec<f64> {
    BASELINE_FRACTIONS.to_vec()
}

fn baseline_factor() -> f64 {
    BASELINE_FACTOR
}

impl ScheduleKind {
    pub fn step_condensed_baseline() -> Self {
        ScheduleKind::StepCondensed {
            fractions: baseline_fractions(),
            factor: BASELINE_FACTOR,
        }
    }

    pub fn full_horizon_step_baseline() -> Self {
        ScheduleKind::FullHorizonStep {
            milestones: None,
            factor: BASELINE_FACTOR,
        }
    }

    pub fn is_recurring(&self) -> bool {
        !matches!(
            self,
            ScheduleKind::FullHorizonCosine | ScheduleKind::FullHorizonStep { .. }
        )
    }

    /// Kinds whose rate never increases within a cycle.
    pub fn is_monotone(&self) -> bool {
        !matches!(self, ScheduleKind::CyclicalTriangular { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::CosineRecurring => "cosine_recurring",
            ScheduleKind::StepCondensed { .. } => "step_condensed",
            ScheduleKind::CyclicalTriangular { .. } => "cyclical_triangular",
            ScheduleKind::LinearRecurring => "linear_recurring",
            ScheduleKind::FullHorizonCosine => "full_horizon_cosine",
            ScheduleKind::FullHorizonStep { .. } => "full_horizon_step",
        }
    }

    /// Parses the short names used on the command line, with baseline
    /// parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "cosine_recurring" | "cosine" => ScheduleKind::CosineRecurring,
            "step_condensed" => Self::step_condensed_baseline(),
            "cyclical_triangular" | "triangular" => ScheduleKind::CyclicalTriangular { floor_fraction: 0.0 },
            "linear_recurring" | "linear" => ScheduleKind::LinearRecurring,
            "full_horizon_cosine" => ScheduleKind::FullHorizonCosine,
            "full_horizon_step" | "step" => Self::full_horizon_step_baseline(),
            other => return Err(Error::InvalidSchedule(format!("unknown schedule `{other}`"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSchedule(msg));
        match self {
            ScheduleKind::StepCondensed { fractions, factor } => {
                check_factor(*factor)?;
                if fractions.is_empty() {
                    return bad("step_condensed needs at least one fraction".into());
                }
                if fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
                    return bad(format!("fractions must lie in (0, 1): {fractions:?}"));
                }
                if fractions.windows(2).any(|w| w[0] >= w[1]) {
                    return bad(format!("fractions must be strictly increasing: {fractions:?}"));
                }
            }
            ScheduleKind::CyclicalTriangular { floor_fraction } => {
                if !(0.0..1.0).contains(floor_fraction) {
                    return bad(format!("floor_fraction must lie in [0, 1), got {floor_fraction}"));
                }
            }
            ScheduleKind::FullHorizonStep { milestones, factor } => {
                check_factor(*factor)?;
                if let Some(ms) = milestones {
                    if ms.contains(&0) || ms.windows(2).any(|w| w[0] >= w[1]) {
                        return bad(format!("milestones must be positive and strictly increasing: {ms:?}"));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn check_factor(factor: f64) -> Result<()> {
    if factor > 0.0 && factor < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidSchedule(format!("factor must lie in (0, 1), got {factor}")))
    }
}

/// Baseline decay epochs scaled to a horizon of `r` epochs.
///
/// Milestones below 2 are raised to 2 so the first epoch always trains at the
/// initial rate.
pub fn scaled_baseline_milestones(r: usize) -> Vec<usize> {
    [81, 122].iter().map(|&m| ((m * r) / 164).max(2)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub kind: ScheduleKind,
    pub init_lr: f64,
}

/// One cycle of training: the epochs of a round, plus the full horizon `r`
/// which the full-horizon kinds need.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CyclePlan {
    pub e_start: usize,
    pub e_end: usize,
    pub steps_per_epoch: usize,
    pub horizon: usize,
}

impl CyclePlan {
    pub fn new(e_start: usize, e_end: usize, steps_per_epoch: usize, horizon: usize) -> Result<Self> {
        if e_start < 1 || e_end < e_start || steps_per_epoch < 1 || e_end > horizon {
            return Err(Error::InvalidSchedule(format!(
                "bad cycle: epochs {e_start}..={e_end}, {steps_per_epoch} steps/epoch, horizon {horizon}"
            )));
        }
        Ok(CyclePlan {
            e_start,
            e_end,
            steps_per_epoch,
            horizon,
        })
    }

    pub fn for_round(b: &RoundBoundary, steps_per_epoch: usize, horizon: usize) -> Result<Self> {
        Self::new(b.e_start, b.e_end, steps_per_epoch, horizon)
    }

    pub fn steps(&self) -> usize {
        (self.e_end - self.e_start + 1) * self.steps_per_epoch
    }

    /// 1-based epoch that step `k` of this cycle belongs to.
    pub fn epoch_of(&self, k: usize) -> usize {
        self.e_start + k / self.steps_per_epoch
    }
}

/// Within-cycle progress `k / (K - 1)`, or 0 for a single-step cycle.
fn progress(k: usize, len: usize) -> f64 {
    if len <= 1 {
        0.0
    } else {
        k as f64 / (len - 1) as f64
    }
}

fn cosine(l: f64, t: f64) -> f64 {
    0.5 * l * (1.0 + (PI * t).cos())
}

/// Step indices at which a condensed step schedule decays.
pub fn condensed_step_milestones(fractions: &[f64], cycle: &CyclePlan) -> Vec<usize> {
    let k = cycle.steps() as f64;
    fractions
        .iter()
        .map(|f| ((f * k + 1e-9).floor() as usize).max(1))
        .collect()
}

impl LrSchedule {
    pub fn new(kind: ScheduleKind, init_lr: f64) -> Result<Self> {
        if !(init_lr.is_finite() && init_lr > 0.0) {
            return Err(Error::InvalidLearningRate(init_lr));
        }
        kind.validate()?;
        Ok(LrSchedule { kind, init_lr })
    }

    pub fn lr_at(&self, cycle: &CyclePlan, k: usize) -> Result<f64> {
        let len = cycle.steps();
        if k >= len {
            return Err(Error::StepOutOfRange { step: k, len });
        }
        let l = self.init_lr;
        let lr = match &self.kind {
            ScheduleKind::CosineRecurring => cosine(l, progress(k, len)),
            ScheduleKind::LinearRecurring => l * (1.0 - progress(k, len)),
            ScheduleKind::StepCondensed { fractions, factor } => {
                let j = condensed_step_milestones(fractions, cycle)
                    .into_iter()
                    .filter(|&m| k >= m)
                    .count();
                l * factor.powi(j as i32)
            }
            ScheduleKind::CyclicalTriangular { floor_fraction } => {
                let lo = floor_fraction * l;
                let t = progress(k, len);
                lo + (l - lo) * (1.0 - (2.0 * t - 1.0).abs())
            }
            ScheduleKind::FullHorizonCosine => {
                let spe = cycle.steps_per_epoch;
                let global = (cycle.e_start - 1) * spe + k;
                cosine(l, progress(global, cycle.horizon * spe))
            }
            ScheduleKind::FullHorizonStep { milestones, factor } => {
                let epoch = cycle.epoch_of(k);
                let j = match milestones {
                    Some(ms) => ms.iter().filter(|&&m| epoch >= m).count(),
                    None => scaled_baseline_milestones(cycle.horizon)
                        .into_iter()
                        .filter(|&m| epoch >= m)
                        .count(),
                };
                l * factor.powi(j as i32)
            }
        };
        Ok(lr.clamp(0.0, l))
    }

    /// Every learning rate of one cycle, in step order.
    pub fn cycle_rates(&self, cycle: &CyclePlan) -> Vec<f64> {
        (0..cycle.steps())
            .map(|k| self.lr_at(cycle, k).expect("k < K"))
            .collect()
    }

    /// The learning rate at every global step of a plan, one cycle per round.
    pub fn trace(&self, boundaries: &[RoundBoundary], steps_per_epoch: usize, horizon: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(horizon * steps_per_epoch);
        for b in boundaries {
            let cycle = CyclePlan::for_round(b, steps_per_epoch, horizon)?;
            out.extend(self.cycle_rates(&cycle));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rb(s: u32, e_start: usize, e_end: usize) -> RoundBoundary {
        RoundBoundary { s, e_start, e_end }
    }

    #[test]
    fn boundaries_r164() {
        assert_eq!(
            round_boundaries(3, 2, 164).unwrap(),
            vec![rb(2, 1, 9), rb(3, 10, 27), rb(4, 28, 164)]
        );
        assert_eq!(
            round_boundaries(3, 2, 81).unwrap(),
            vec![rb(2, 1, 9), rb(3, 10, 27), rb(4, 28, 81)]
        );
        assert_eq!(
            round_boundaries(2, 0, 8).unwrap(),
            vec![rb(0, 1, 1), rb(1, 2, 2), rb(2, 3, 4), rb(3, 5, 8)]
        );
    }

    #[test]
    fn infeasible_smin() {
        assert!(matches!(round_boundaries(3, 5, 164), Err(Error::InvalidPlan(_))));
        assert!(round_boundaries(1, 0, 10).is_err());
        assert_eq!(round_boundaries(3, 0, 1).unwrap(), vec![rb(0, 1, 1)]);
    }

    #[test]
    fn cosine_endpoints() {
        let s = LrSchedule::new(ScheduleKind::CosineRecurring, 0.1).unwrap();
        let c = CyclePlan::new(1, 9, 1, 164).unwrap();
        assert_eq!(s.lr_at(&c, 0).unwrap(), 0.1);
        assert_eq!(s.lr_at(&c, 8).unwrap(), 0.0);
        assert!((s.lr_at(&c, 4).unwrap() - 0.05).abs() < 1e-12);
        assert!(matches!(s.lr_at(&c, 9), Err(Error::StepOutOfRange { step: 9, len: 9 })));

        let one = CyclePlan::new(1, 1, 1, 1).unwrap();
        assert_eq!(s.lr_at(&one, 0).unwrap(), 0.1);
    }

    #[test]
    fn baseline_step_plateaus() {
        let s = LrSchedule::new(
            ScheduleKind::FullHorizonStep {
                milestones: Some(vec![81, 122]),
                factor: 0.1,
            },
            0.1,
        )
        .unwrap();
        let c = CyclePlan::new(1, 164, 1, 164).unwrap();
        let at_epoch = |e: usize| s.lr_at(&c, e - 1).unwrap();
        assert_eq!(at_epoch(80), 0.1);
        assert!((at_epoch(81) - 0.01).abs() < 1e-15);
        assert!((at_epoch(121) - 0.01).abs() < 1e-15);
        assert!((at_epoch(122) - 0.001).abs() < 1e-15);
        assert_eq!(scaled_baseline_milestones(164), vec![81, 122]);
    }

    #[test]
    fn condensed_milestones() {
        let c164 = CyclePlan::new(1, 164, 1, 164).unwrap();
        assert_eq!(condensed_step_milestones(&BASELINE_FRACTIONS, &c164), vec![81, 122]);
        let c2 = CyclePlan::new(1, 2, 1, 2).unwrap();
        assert_eq!(condensed_step_milestones(&[0.5], &c2), vec![1]);
        let c9 = CyclePlan::new(1, 9, 1, 9).unwrap();
        assert_eq!(condensed_step_milestones(&BASELINE_FRACTIONS, &c9), vec![4, 6]);
    }

    #[test]
    fn triangular_peaks_mid_cycle() {
        let s = LrSchedule::new(ScheduleKind::CyclicalTriangular { floor_fraction: 0.2 }, 1.0).unwrap();
        let c = CyclePlan::new(1, 5, 1, 5).unwrap();
        let rates = s.cycle_rates(&c);
        assert!((rates[0] - 0.2).abs() < 1e-15);
        assert_eq!(rates[2], 1.0);
        assert!((rates[4] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn full_horizon_cosine_spans_rounds() {
        let s = LrSchedule::new(ScheduleKind::FullHorizonCosine, 1.0).unwrap();
        let b = round_boundaries(3, 2, 27).unwrap();
        let t = s.trace(&b, 1, 27).unwrap();
        assert_eq!(t.len(), 27);
        assert_eq!(t[0], 1.0);
        assert_eq!(t[26], 0.0);
        assert!(t.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn validation() {
        assert!(LrSchedule::new(ScheduleKind::CosineRecurring, 0.0).is_err());
        assert!(LrSchedule::new(ScheduleKind::CosineRecurring, f64::NAN).is_err());
        let bad = ScheduleKind::StepCondensed {
            fractions: vec![0.7, 0.5],
            factor: 0.1,
        };
        assert!(bad.validate().is_err());
        let bad = ScheduleKind::StepCondensed {
            fractions: vec![0.5],
            factor: 1.0,
        };
        assert!(bad.validate().is_err());
        assert!(ScheduleKind::CyclicalTriangular { floor_fraction: 1.0 }.validate().is_err());
    }

    #[test]
    fn kind_json_defaults() {
        let k: ScheduleKind = serde_json::from_str(r#"{"kind":"step_condensed"}"#).unwrap();
        assert_eq!(k, ScheduleKind::step_condensed_baseline());
        let k: ScheduleKind = serde_json::from_str(r#"{"kind":"full_horizon_step"}"#).unwrap();
        assert_eq!(k, ScheduleKind::full_horizon_step_baseline());
    }

    fn any_kind() -> impl Strategy<Value = ScheduleKind> {
        prop_oneof![
            Just(ScheduleKind::CosineRecurring),
            Just(ScheduleKind::LinearRecurring),
            Just(ScheduleKind::step_condensed_baseline()),
            (0.0..0.99f64).prop_map(|f| ScheduleKind::CyclicalTriangular { floor_fraction: f }),
            Just(ScheduleKind::FullHorizonCosine),
            Just(ScheduleKind::full_horizon_step_baseline()),
        ]
    }

    proptest! {
        #[test]
        fn boundaries_tile_horizon(eta in 2usize..=5, s_min in 0u32..4, r in 1usize..2000) {
            prop_assume!(eta.pow(s_min) <= r);
            let b = round_boundaries(eta, s_min, r).unwrap();
            prop_assert_eq!(b.len() as u32, max_exponent(eta, r) - s_min + 1);
            prop_assert_eq!(b[0].e_start, 1);
            prop_assert_eq!(b.last().unwrap().e_end, r);
            for w in b.windows(2) {
                prop_assert_eq!(w[1].e_start, w[0].e_end + 1);
                prop_assert!(w[0].e_end >= w[0].e_start);
            }
        }

        #[test]
        fn rates_bounded_and_restart(
            kind in any_kind(),
            l in 1e-6..10.0f64,
            eta in 2usize..=4,
            r in 1usize..300,
            spe in 1usize..5,
        ) {
            let s = LrSchedule::new(kind.clone(), l).unwrap();
            let b = round_boundaries(eta, 0, r).unwrap();
            for round in &b {
                let c = CyclePlan::for_round(round, spe, r).unwrap();
                let rates = s.cycle_rates(&c);
                prop_assert!(rates.iter().all(|&x| (0.0..=l).contains(&x)));
                if kind.is_recurring() && kind.is_monotone() {
                    prop_assert_eq!(rates[0], l);
                    prop_assert!(rates.windows(2).all(|w| w[1] <= w[0]));
                }
                if matches!(kind, ScheduleKind::CosineRecurring | ScheduleKind::LinearRecurring) && rates.len() > 1 {
                    prop_assert_eq!(*rates.last().unwrap(), 0.0);
                }
            }
        }
    }
}
