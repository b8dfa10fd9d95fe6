//! A 2 → 8 (tanh) → 4 softmax network trained with momentum SGD on seeded
//! Gaussian blobs.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use super::blob::{self, Reader, Writer};
use super::{check_lr, EpochReport, Trainer};
use crate::error::{Error, Result};
use crate::search_space::Config;
use crate::seeding::{self, stream};

const IN: usize = 2;
const HIDDEN: usize = 8;
const CLASSES: usize = 4;
const W1: usize = 0;
const B1: usize = W1 + HIDDEN * IN;
const W2: usize = B1 + HIDDEN;
const B2: usize = W2 + CLASSES * HIDDEN;
pub const N_PARAMS: usize = B2 + CLASSES;

pub const N_POINTS: usize = 2000;
pub const N_TRAIN: usize = 1500;
const CENTER: f64 = 2.5;

pub struct Dataset {
    pub train: Vec<([f64; 2], usize)>,
    pub test: Vec<([f64; 2], usize)>,
}

impl Dataset {
    /// Four unit-variance blobs centred at `(±2.5, ±2.5)`, shuffled, then split
    /// 1500 / 500.
    pub fn blobs(seed: u64) -> Self {
        let mut rng = seeding::rng(seeding::derive(seed, stream::DATA));
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut points: Vec<([f64; 2], usize)> = (0..N_POINTS)
            .map(|i| {
                let c = i % CLASSES;
                let cx = if c & 1 == 0 { -CENTER } else { CENTER };
                let cy = if c & 2 == 0 { -CENTER } else { CENTER };
                ([cx + normal.sample(&mut rng), cy + normal.sample(&mut rng)], c)
            })
            .collect();
        points.shuffle(&mut rng);
        let test = points.split_off(N_TRAIN);
        Dataset { train: points, test }
    }
}

/// One momentum-SGD update with decoupled gradient and weight decay:
/// `v ← μv − lr(g + wθ)`, `θ ← θ + v`.
pub fn momentum_step(theta: &mut [f64], velocity: &mut [f64], grad: &[f64], lr: f64, mu: f64, weight_decay: f64) {
    for ((t, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = mu * *v - lr * (g + weight_decay * *t);
        *t += *v;
    }
}

fn logits(theta: &[f64], x: &[f64; 2], hidden: &mut [f64; HIDDEN]) -> [f64; CLASSES] {
    for (j, h) in hidden.iter_mut().enumerate() {
        let w = &theta[W1 + j * IN..W1 + (j + 1) * IN];
        *h = (w[0] * x[0] + w[1] * x[1] + theta[B1 + j]).tanh();
    }
    let mut z = [0.0; CLASSES];
    for (c, zc) in z.iter_mut().enumerate() {
        let w = &theta[W2 + c * HIDDEN..W2 + (c + 1) * HIDDEN];
        *zc = theta[B2 + c] + w.iter().zip(hidden.iter()).map(|(a, b)| a * b).sum::<f64>();
    }
    z
}

/// Mean cross-entropy over a batch; writes the gradient into `grad`.
fn loss_and_grad(theta: &[f64], batch: &[&([f64; 2], usize)], grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut hidden = [0.0; HIDDEN];
    for (x, y) in batch.iter().map(|p| (&p.0, p.1)) {
        let z = logits(theta, x, &mut hidden);
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - zmax).exp()).sum();
        loss += (sum.ln() + zmax - z[y]) * scale;

        let mut dz = [0.0; CLASSES];
        for c in 0..CLASSES {
            dz[c] = ((z[c] - zmax).exp() / sum - if c == y { 1.0 } else { 0.0 }) * scale;
        }
        let mut dh = [0.0; HIDDEN];
        for c in 0..CLASSES {
            grad[B2 + c] += dz[c];
            for j in 0..HIDDEN {
                grad[W2 + c * HIDDEN + j] += dz[c] * hidden[j];
                dh[j] += dz[c] * theta[W2 + c * HIDDEN + j];
            }
        }
        for j in 0..HIDDEN {
            let da = dh[j] * (1.0 - hidden[j] * hidden[j]);
            grad[B1 + j] += da;
            grad[W1 + j * IN] += da * x[0];
            grad[W1 + j * IN + 1] += da * x[1];
        }
    }
    loss
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToySgdState {
    pub seed: u64,
    pub theta: Vec<f64>,
    pub velocity: Vec<f64>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs_trained: usize,
    pub diverged: bool,
}

pub struct ToySgdTrainer {
    data_seed: u64,
    data: Arc<Dataset>,
}

impl ToySgdTrainer {
    pub fn new(data_seed: u64) -> Self {
        ToySgdTrainer {
            data_seed,
            data: Arc::new(Dataset::blobs(data_seed)),
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn steps_for_batch(batch_size: usize) -> usize {
        N_TRAIN.div_ceil(batch_size)
    }
}

impl Trainer for ToySgdTrainer {
    type State = ToySgdState;

    fn init(&self, config: &Config, seed: u64) -> Result<ToySgdState> {
        let m = config.require("m")?;
        let weight_decay = config.require("w")?;
        let b = config.require("b")?;
        if !(b >= 1.0 && b.fract() == 0.0) {
            return Err(Error::Config(format!("batch size must be a positive integer, got {b}")));
        }
        let mut rng = seeding::rng(seeding::derive(seed, stream::INIT));
        let mut theta = vec![0.0; N_PARAMS];
        let n1 = Normal::new(0.0, (1.0 / IN as f64).sqrt()).unwrap();
        let n2 = Normal::new(0.0, (1.0 / HIDDEN as f64).sqrt()).unwrap();
        for t in &mut theta[W1..B1] {
            *t = n1.sample(&mut rng);
        }
        for t in &mut theta[W2..B2] {
            *t = n2.sample(&mut rng);
        }
        Ok(ToySgdState {
            seed,
            theta,
            velocity: vec![0.0; N_PARAMS],
            momentum: 1.0 - m,
            weight_decay,
            batch_size: (b as usize).min(N_TRAIN),
            epochs_trained: 0,
            diverged: false,
        })
    }

    fn steps_per_epoch(&self, state: &ToySgdState) -> usize {
        Self::steps_for_batch(state.batch_size)
    }

    fn epochs_trained(&self, state: &ToySgdState) -> usize {
        state.epochs_trained
    }

    fn train_epoch(&self, state: &mut ToySgdState, lr_for_step: &dyn Fn(usize) -> f64) -> Result<EpochReport> {
        let mut order: Vec<usize> = (0..self.data.train.len()).collect();
        let mut rng = seeding::rng(seeding::derive2(state.seed, stream::SHUFFLE, state.epochs_trained as u64));
        order.shuffle(&mut rng);

        let mut grad = vec![0.0; N_PARAMS];
        let mut last = 0.0;
        for (k, idx) in order.chunks(state.batch_size).enumerate() {
            last = check_lr(lr_for_step(k))?;
            if state.diverged {
                continue;
            }
            let batch: Vec<_> = idx.iter().map(|&i| &self.data.train[i]).collect();
            let loss = loss_and_grad(&state.theta, &batch, &mut grad);
            if !loss.is_finite() {
                state.diverged = true;
                continue;
            }
            momentum_step(
                &mut state.theta,
                &mut state.velocity,
                &grad,
                last,
                state.momentum,
                state.weight_decay,
            );
            if state.theta.iter().any(|t| !t.is_finite()) {
                state.diverged = true;
            }
        }
        state.epochs_trained += 1;
        Ok(EpochReport {
            epoch: state.epochs_trained,
            val_metric: self.evaluate(state),
            final_step_lr: last,
        })
    }

    fn evaluate(&self, state: &ToySgdState) -> f64 {
        if state.diverged {
            return 0.0;
        }
        let mut hidden = [0.0; HIDDEN];
        let correct = self
            .data
            .test
            .iter()
            .filter(|(x, y)| {
                let z = logits(&state.theta, x, &mut hidden);
                let pred = (0..CLASSES).fold(0, |best, c| if z[c] > z[best] { c } else { best });
                pred == *y
            })
            .count();
        correct as f64 / self.data.test.len() as f64
    }

    fn checkpoint(&self, state: &ToySgdState) -> Vec<u8> {
        let mut w = Writer::default();
        w.u64(self.data_seed)
            .u64(state.seed)
            .f64(state.momentum)
            .f64(state.weight_decay)
            .u64(state.batch_size as u64)
            .u64(state.epochs_trained as u64)
            .u8(state.diverged as u8)
            .f64s(&state.theta)
            .f64s(&state.velocity);
        blob::encode(blob::KIND_TOY_SGD, &w.finish())
    }

    fn restore(&self, bytes: &[u8]) -> Result<ToySgdState> {
        let mut r = Reader::new(blob::decode(blob::KIND_TOY_SGD, bytes)?);
        let data_seed = r.u64()?;
        if data_seed != self.data_seed {
            return Err(Error::Checkpoint(format!(
                "checkpoint was taken on dataset {data_seed}, trainer uses {}",
                self.data_seed
            )));
        }
        let state = ToySgdState {
            seed: r.u64()?,
            momentum: r.f64()?,
            weight_decay: r.f64()?,
            batch_size: r.u64()? as usize,
            epochs_trained: r.u64()? as usize,
            diverged: r.u8()? != 0,
            theta: r.f64s()?,
            velocity: r.f64s()?,
        };
        r.finish()?;
        if state.theta.len() != N_PARAMS || state.velocity.len() != N_PARAMS || state.batch_size == 0 {
            return Err(Error::Checkpoint("parameter vector has the wrong shape".into()));
        }
        Ok(state)
    }
}
