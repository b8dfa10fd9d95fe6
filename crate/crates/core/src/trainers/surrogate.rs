//! A learning-curve surrogate with a hidden optimum and an LR-dependent
//! transient penalty.
//!
//! Each configuration has an asymptote `A` set by its log-distance from the
//! hidden optimum `(l*, w*)`. Training accumulates progress `U` at a rate that
//! peaks when `lr = l_ref`, and the observed metric is
//!
//! ```text
//! V = clamp(A · (1 − e^{−κU}) · (1 − β · min(1, lr_last / l_ref)) + ε, chance, 1)
//! ```
//!
//! so a configuration evaluated right after a large step looks worse than it
//! will end up. High-`l*` tasks therefore produce slow starters whenever the
//! evaluation happens at a high learning rate.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::blob::{self, Reader, Writer};
use super::{check_lr, EpochReport, Trainer};
use crate::error::{Error, Result};
use crate::search_space::Config;
use crate::seeding::{self, stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateParams {
    pub a_min: f64,
    pub a_max: f64,
    pub kappa: f64,
    pub beta: f64,
    pub sigma_l: f64,
    pub sigma_w: f64,
    pub noise: f64,
    pub chance: f64,
    /// `l_ref = lref_ratio · l*`.
    pub lref_ratio: f64,
    pub steps_per_epoch: usize,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams {
            a_min: 0.05,
            a_max: 0.75,
            kappa: 5.0,
            beta: 0.95,
            sigma_l: 2.0,
            sigma_w: 3.0,
            noise: 0.02,
            chance: 0.01,
            lref_ratio: 0.2,
            steps_per_epoch: 10,
        }
    }
}

impl SurrogateParams {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.a_min
            && self.a_min < self.a_max
            && self.a_max < 1.0
            && self.kappa > 0.0
            && (0.0..=1.0).contains(&self.beta)
            && self.sigma_l > 0.0
            && self.sigma_w > 0.0
            && self.noise >= 0.0
            && (0.0..1.0).contains(&self.chance)
            && self.lref_ratio > 0.0
            && self.steps_per_epoch >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid surrogate parameters {self:?}")))
        }
    }
}

/// A hidden optimum plus the constants of the curve model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateTask {
    pub log_l_star: f64,
    pub log_w_star: f64,
    pub params: SurrogateParams,
}

pub const L_STAR_RANGE: (f64, f64) = (1e-3, 1.0);
pub const W_STAR_RANGE: (f64, f64) = (1e-5, 1e-2);

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo.ln()..hi.ln())
}

impl SurrogateTask {
    /// Draws `l*` and `w*` log-uniformly from their task ranges.
    pub fn draw(seed: u64, params: SurrogateParams) -> Self {
        let mut rng = seeding::rng(seeding::derive(seed, stream::TASK));
        let log_l_star = log_uniform(&mut rng, L_STAR_RANGE);
        let log_w_star = log_uniform(&mut rng, W_STAR_RANGE);
        SurrogateTask {
            log_l_star,
            log_w_star,
            params,
        }
    }

    pub fn with_optimum(l_star: f64, w_star: f64, params: SurrogateParams) -> Self {
        SurrogateTask {
            log_l_star: l_star.ln(),
            log_w_star: w_star.ln(),
            params,
        }
    }

    pub fn l_star(&self) -> f64 {
        self.log_l_star.exp()
    }

    pub fn w_star(&self) -> f64 {
        self.log_w_star.exp()
    }

    pub fn l_ref(&self) -> f64 {
        self.params.lref_ratio * self.l_star()
    }

    pub fn asymptote(&self, l: f64, w: f64) -> f64 {
        let p = &self.params;
        let dl = l.ln() - self.log_l_star;
        let dw = w.ln() - self.log_w_star;
        let q = (-(dl * dl) / (2.0 * p.sigma_l * p.sigma_l) - (dw * dw) / (2.0 * p.sigma_w * p.sigma_w)).exp();
        p.a_min + (p.a_max - p.a_min) * q
    }

    pub fn config_asymptote(&self, config: &Config) -> Result<f64> {
        Ok(self.asymptote(config.require("l")?, config.require("w")?))
    }
}

/// `x · e^{1−x}`: progress per step as a function of `lr / l_ref`, maximal
/// (= 1) at `x = 1`.
pub fn progress_rate(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (1.0 - x).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateState {
    pub seed: u64,
    pub l: f64,
    pub w: f64,
    pub asymptote: f64,
    pub progress: f64,
    pub lr_last: f64,
    pub epochs_trained: usize,
}

#[derive(Clone, Debug)]
pub struct SurrogateTrainer {
    task: SurrogateTask,
    horizon: usize,
}

impl SurrogateTrainer {
    /// `horizon` is the full training length `r`; a trial trained at `l_ref`
    /// for all `r` epochs reaches `U = 1`.
    pub fn new(task: SurrogateTask, horizon: usize) -> Result<Self> {
        task.params.validate()?;
        if horizon == 0 {
            return Err(Error::Config("surrogate horizon must be positive".into()));
        }
        Ok(SurrogateTrainer { task, horizon })
    }

    pub fn task(&self) -> &SurrogateTask {
        &self.task
    }

    /// The noise-free, penalty-free part of the metric: `A · (1 − e^{−κU})`.
    pub fn true_progress(&self, state: &SurrogateState) -> f64 {
        state.asymptote * (1.0 - (-self.task.params.kappa * state.progress).exp())
    }

    fn noise(&self, state: &SurrogateState) -> f64 {
        let sigma = self.task.params.noise;
        if sigma == 0.0 {
            return 0.0;
        }
        let mut rng = seeding::rng(seeding::derive2(state.seed, stream::NOISE, state.epochs_trained as u64));
        Normal::new(0.0, sigma).expect("sigma > 0").sample(&mut rng)
    }
}

impl Trainer for SurrogateTrainer {
    type State = SurrogateState;

    fn init(&self, config: &Config, seed: u64) -> Result<SurrogateState> {
        let l = config.require("l")?;
        let w = config.require("w")?;
        Ok(SurrogateState {
            seed,
            l,
            w,
            asymptote: self.task.asymptote(l, w),
            progress: 0.0,
            lr_last: 0.0,
            epochs_trained: 0,
        })
    }

    fn steps_per_epoch(&self, _state: &SurrogateState) -> usize {
        self.task.params.steps_per_epoch
    }

    fn epochs_trained(&self, state: &SurrogateState) -> usize {
        state.epochs_trained
    }

    fn train_epoch(&self, state: &mut SurrogateState, lr_for_step: &dyn Fn(usize) -> f64) -> Result<EpochReport> {
        let spe = self.task.params.steps_per_epoch;
        let l_ref = self.task.l_ref();
        let scale = 1.0 / (self.horizon * spe) as f64;
        let mut last = state.lr_last;
        let mut gained = 0.0;
        for k in 0..spe {
            last = check_lr(lr_for_step(k))?;
            gained += progress_rate(last / l_ref) * scale;
        }
        state.progress += gained;
        state.lr_last = last;
        state.epochs_trained += 1;
        Ok(EpochReport {
            epoch: state.epochs_trained,
            val_metric: self.evaluate(state),
            final_step_lr: last,
        })
    }

    fn evaluate(&self, state: &SurrogateState) -> f64 {
        let p = &self.task.params;
        let penalty = 1.0 - p.beta * (state.lr_last / self.task.l_ref()).min(1.0);
        let v = self.true_progress(state) * penalty + self.noise(state);
        v.clamp(p.chance, 1.0)
    }

    fn checkpoint(&self, state: &SurrogateState) -> Vec<u8> {
        let mut w = Writer::default();
        w.u64(state.seed)
            .f64(state.l)
            .f64(state.w)
            .f64(state.asymptote)
            .f64(state.progress)
            .f64(state.lr_last)
            .u64(state.epochs_trained as u64);
        blob::encode(blob::KIND_SURROGATE, &w.finish())
    }

    fn restore(&self, bytes: &[u8]) -> Result<SurrogateState> {
        let mut r = Reader::new(blob::decode(blob::KIND_SURROGATE, bytes)?);
        let state = SurrogateState {
            seed: r.u64()?,
            l: r.f64()?,
            w: r.f64()?,
            asymptote: r.f64()?,
            progress: r.f64()?,
            lr_last: r.f64()?,
            epochs_trained: r.u64()? as usize,
        };
        r.finish()?;
        Ok(state)
    }
}
