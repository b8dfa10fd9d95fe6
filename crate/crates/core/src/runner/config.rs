//! The experiment config file (JSON) and the per-repetition generation plan
//! derived from it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lr_schedules::ScheduleKind;
use crate::samplers::TpeParams;
use crate::schedulers::{hyperband_plan, solve_n, RoundPlan, ScheduleMode};
use crate::search_space::SearchSpace;
use crate::trainers::{SurrogateParams, SurrogateTask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Successive halving with a recurring schedule.
    Morl,
    /// Successive halving with a full-horizon schedule.
    Sha,
    Hyperband,
    /// Every trial trained to `r`, no early stopping.
    Random,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inner {
    #[default]
    Morl,
    Sha,
}

fn default_eta() -> usize {
    3
}

fn default_s_min() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSpec {
    pub kind: Method,
    #[serde(default = "default_eta")]
    pub eta: usize,
    #[serde(default = "default_s_min")]
    pub s_min: u32,
    pub r: usize,
    /// Halving flavour used inside Hyperband brackets.
    #[serde(default)]
    pub inner: Inner,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerSpec {
    #[default]
    Random,
    Tpe {
        #[serde(default)]
        params: TpeParams,
        /// Number of batches the budget is split into. Ignored by Hyperband,
        /// whose brackets already form the batches.
        #[serde(default = "default_generations")]
        generations: usize,
    },
}

fn default_generations() -> usize {
    4
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSpec {
    /// Seed of the hidden task; defaults to the experiment's base seed.
    #[serde(default)]
    pub task_seed: Option<u64>,
    /// Pins the hidden optimum instead of drawing it.
    #[serde(default)]
    pub l_star: Option<f64>,
    #[serde(default)]
    pub w_star: Option<f64>,
    #[serde(default)]
    pub params: SurrogateParams,
}

fn default_data_seed() -> u64 {
    7
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainerSpec {
    Surrogate(SurrogateSpec),
    ToySgd {
        #[serde(default = "default_data_seed")]
        data_seed: u64,
    },
}

impl Default for TrainerSpec {
    fn default() -> Self {
        TrainerSpec::Surrogate(SurrogateSpec::default())
    }
}

fn default_multiplier() -> u64 {
    64
}

fn default_repetitions() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "SearchSpace::default_space")]
    pub space: SearchSpace,
    pub scheduler: SchedulerSpec,
    /// Learning-rate schedule; defaults to recurring cosine for MORL and the
    /// baseline step schedule otherwise.
    #[serde(default)]
    pub schedule: Option<ScheduleKind>,
    #[serde(default)]
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub trainer: TrainerSpec,
    #[serde(default = "default_multiplier")]
    pub budget_multiplier: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// One successive-halving run inside a repetition.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationPlan {
    pub index: usize,
    pub plan: RoundPlan,
    pub budget: u64,
    pub n: usize,
}

impl ExperimentConfig {
    pub fn new(scheduler: SchedulerSpec) -> Self {
        ExperimentConfig {
            space: SearchSpace::default_space(),
            scheduler,
            schedule: None,
            sampler: SamplerSpec::Random,
            trainer: TrainerSpec::default(),
            budget_multiplier: default_multiplier(),
            repetitions: default_repetitions(),
            base_seed: 0,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("cannot parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn budget(&self) -> u64 {
        self.budget_multiplier * self.scheduler.r as u64
    }

    pub fn mode(&self) -> ScheduleMode {
        match (self.scheduler.kind, self.scheduler.inner) {
            (Method::Morl, _) | (Method::Hyperband, Inner::Morl) => ScheduleMode::Recurring,
            _ => ScheduleMode::FullHorizon,
        }
    }

    pub fn schedule_kind(&self) -> ScheduleKind {
        match &self.schedule {
            Some(k) => k.clone(),
            None => match self.mode() {
                ScheduleMode::Recurring => ScheduleKind::CosineRecurring,
                ScheduleMode::FullHorizon => ScheduleKind::full_horizon_step_baseline(),
            },
        }
    }

    pub fn surrogate_task(&self) -> Option<SurrogateTask> {
        match &self.trainer {
            TrainerSpec::Surrogate(spec) => {
                let seed = spec.task_seed.unwrap_or(self.base_seed);
                let mut task = SurrogateTask::draw(seed, spec.params);
                if let Some(l) = spec.l_star {
                    task.log_l_star = l.ln();
                }
                if let Some(w) = spec.w_star {
                    task.log_w_star = w.ln();
                }
                Some(task)
            }
            TrainerSpec::ToySgd { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scheduler;
        if s.r < 1 {
            return Err(Error::Config("scheduler.r must be at least 1".into()));
        }
        if s.eta < 2 {
            return Err(Error::Config("scheduler.eta must be at least 2".into()));
        }
        if self.repetitions < 1 || self.budget_multiplier < 1 {
            return Err(Error::Config("repetitions and budget_multiplier must be at least 1".into()));
        }
        let kind = self.schedule_kind();
        kind.validate()?;
        let recurring = self.mode() == ScheduleMode::Recurring;
        if kind.is_recurring() != recurring {
            return Err(Error::Config(format!(
                "schedule `{}` does not fit a {} method",
                kind.name(),
                if recurring { "recurring" } else { "full-horizon" }
            )));
        }
        let required: &[&str] = match &self.trainer {
            TrainerSpec::Surrogate(spec) => {
                spec.params.validate()?;
                for v in [spec.l_star, spec.w_star].into_iter().flatten() {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(Error::Config(format!("hidden optimum must be positive, got {v}")));
                    }
                }
                &["l", "w"]
            }
            TrainerSpec::ToySgd { .. } => &["l", "w", "m", "b"],
        };
        for name in required {
            if self.space.domain(name).is_none() {
                return Err(Error::MissingDimension(name.to_string()));
            }
        }
        if let SamplerSpec::Tpe { params, generations } = &self.sampler {
            params.validate()?;
            if *generations < 1 {
                return Err(Error::Config("tpe generations must be at least 1".into()));
            }
        }
        self.generations()?;
        Ok(())
    }

    fn batches(&self) -> usize {
        match &self.sampler {
            SamplerSpec::Random => 1,
            SamplerSpec::Tpe { generations, .. } => *generations,
        }
    }

    /// The successive-halving runs making up one repetition.
    pub fn generations(&self) -> Result<Vec<GenerationPlan>> {
        let s = &self.scheduler;
        let budget = self.budget();
        if s.kind == Method::Hyperband {
            return Ok(hyperband_plan(budget, s.eta, s.r, self.mode())?
                .into_iter()
                .enumerate()
                .map(|(index, b)| GenerationPlan {
                    index,
                    plan: b.plan,
                    budget: b.allocated_budget,
                    n: b.n,
                })
                .collect());
        }
        let plan = match s.kind {
            Method::Random => RoundPlan::single_round(s.eta, s.r, self.mode())?,
            _ => RoundPlan::new(s.eta, s.s_min, s.r, self.mode())?,
        };
        let g = self.batches() as u64;
        (0..g)
            .map(|i| {
                let share = budget / g + if i == 0 { budget % g } else { 0 };
                Ok(GenerationPlan {
                    index: i as usize,
                    plan: plan.clone(),
                    budget: share,
                    n: solve_n(share, &plan)?,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: Method, s_min: u32, r: usize) -> SchedulerSpec {
        SchedulerSpec {
            kind,
            eta: 3,
            s_min,
            r,
            inner: Inner::Morl,
        }
    }

    #[test]
    fn minimal_json_gets_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"scheduler":{"kind":"morl","r":81}}"#).unwrap();
        assert_eq!(cfg.budget(), 64 * 81);
        assert_eq!(cfg.repetitions, 5);
        assert_eq!(cfg.schedule_kind(), ScheduleKind::CosineRecurring);
        assert_eq!(cfg.scheduler.s_min, 2);
        let g = cfg.generations().unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].n, solve_n(64 * 81, &g[0].plan).unwrap());
    }

    #[test]
    fn random_search_is_64_full_runs() {
        let cfg = ExperimentConfig::new(spec(Method::Random, 0, 164));
        let g = cfg.generations().unwrap();
        assert_eq!(g[0].n, 64);
        assert_eq!(g[0].plan.rounds(), 1);
    }

    #[test]
    fn mismatched_schedule_rejected() {
        let mut cfg = ExperimentConfig::new(spec(Method::Sha, 2, 81));
        cfg.schedule = Some(ScheduleKind::CosineRecurring);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.scheduler.kind = Method::Morl;
        cfg.validate().unwrap();
    }

    #[test]
    fn infeasible_plan_is_config_error() {
        let cfg = ExperimentConfig::new(spec(Method::Morl, 5, 81));
        let e = cfg.validate().unwrap_err();
        assert!(e.is_config_error(), "{e}");
    }

    #[test]
    fn tpe_splits_budget() {
        let mut cfg = ExperimentConfig::new(spec(Method::Morl, 2, 81));
        cfg.budget_multiplier = 10;
        cfg.sampler = SamplerSpec::Tpe {
            params: TpeParams::default(),
            generations: 3,
        };
        let g = cfg.generations().unwrap();
        assert_eq!(g.iter().map(|x| x.budget).collect::<Vec<_>>(), vec![270, 270, 270]);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"scheduler":{"kind":"morl","r":81},"bogus":1}"#).is_err());
    }
}
