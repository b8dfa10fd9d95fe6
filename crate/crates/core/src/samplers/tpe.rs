//! Tree-structured Parzen Estimator over the unit cube.
//!
//! Observations are split into a good and a bad set by objective. Each set is
//! modelled by a mixture of truncated Gaussian kernels on `[0, 1]^d`, one
//! kernel per observation. Candidates are drawn from the good density `ℓ` and
//! the one maximising `log ℓ − log g` is returned.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{random_suggest, Observation};
use crate::error::{Error, Result};
use crate::search_space::{Config, SearchSpace};

pub const MIN_BANDWIDTH: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `max(N^{-1/(d+4)} · σ̂, 1e-3)` per dimension, with σ̂ and N taken from
    /// the good set.
    #[default]
    Scott,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TpeParams {
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
    pub multivariate: bool,
    pub bandwidth: BandwidthRule,
}

impl Default for TpeParams {
    fn default() -> Self {
        TpeParams {
            gamma: 0.25,
            n_startup: 10,
            n_candidates: 24,
            multivariate: true,
            bandwidth: BandwidthRule::Scott,
        }
    }
}

impl TpeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("tpe gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.n_startup < 1 || self.n_candidates < 1 {
            return Err(Error::Config("tpe n_startup and n_candidates must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Suggestion {
    pub config: Config,
    /// `log ℓ − log g` of the chosen candidate; `None` for random suggestions.
    pub score: Option<f64>,
}

/// Number of observations that land in the good set.
pub fn good_count(n: usize, gamma: f64) -> usize {
    ((gamma * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1))
}

/// Splits `history` into the top `ceil(γN)` by objective (earlier
/// observations first on ties) and the rest.
pub fn tpe_split(history: &[Observation], gamma: f64) -> (Vec<&Observation>, Vec<&Observation>) {
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by(|&a, &b| history[b].objective.total_cmp(&history[a].objective));
    let k = good_count(history.len(), gamma).min(history.len());
    let mut good: Vec<usize> = order[..k].to_vec();
    let mut bad: Vec<usize> = order[k..].to_vec();
    good.sort_unstable();
    bad.sort_unstable();
    (
        good.into_iter().map(|i| &history[i]).collect(),
        bad.into_iter().map(|i| &history[i]).collect(),
    )
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// A Parzen mixture of axis-aligned truncated Gaussians. An empty mixture is
/// the uniform density.
#[derive(Clone, Debug)]
pub struct Parzen {
    points: Vec<Vec<f64>>,
    bandwidth: Vec<f64>,
    /// `log` of each kernel's truncation mass, `[point][dim]`.
    log_mass: Vec<Vec<f64>>,
}

/// Scott's rule per dimension, `max(N^{-1/(d+4)} · σ̂, 1e-3)`.
pub fn scott_bandwidth(points: &[Vec<f64>], dims: usize) -> Vec<f64> {
    let n = points.len();
    (0..dims)
        .map(|j| {
            let sigma = if n < 2 {
                0.0
            } else {
                let mean = points.iter().map(|p| p[j]).sum::<f64>() / n as f64;
                (points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            let factor = (n.max(1) as f64).powf(-1.0 / (dims as f64 + 4.0));
            (factor * sigma).max(MIN_BANDWIDTH)
        })
        .collect()
}

impl Parzen {
    /// Fits with Scott's rule on the points themselves.
    pub fn fit(points: Vec<Vec<f64>>, dims: usize) -> Self {
        let bandwidth = scott_bandwidth(&points, dims);
        Self::with_bandwidth(points, bandwidth)
    }

    pub fn with_bandwidth(points: Vec<Vec<f64>>, bandwidth: Vec<f64>) -> Self {
        let phi = std_normal();
        let log_mass = points
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&bandwidth)
                    .map(|(&mu, &h)| {
                        let mass = phi.cdf((1.0 - mu) / h) - phi.cdf(-mu / h);
                        mass.max(1e-300).ln()
                    })
                    .collect()
            })
            .collect();
        Parzen {
            points,
            bandwidth,
            log_mass,
        }
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    fn log_kernel(&self, i: usize, j: usize, x: f64) -> f64 {
        let h = self.bandwidth[j];
        let z = (x - self.points[i][j]) / h;
        -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() - h.ln() - self.log_mass[i][j]
    }

    pub fn log_pdf(&self, x: &[f64], multivariate: bool) -> f64 {
        let n = self.points.len();
        if n == 0 {
            return 0.0;
        }
        let log_n = (n as f64).ln();
        if multivariate {
            let terms: Vec<f64> = (0..n)
                .map(|i| (0..x.len()).map(|j| self.log_kernel(i, j, x[j])).sum())
                .collect();
            log_sum_exp(&terms) - log_n
        } else {
            (0..x.len())
                .map(|j| {
                    let terms: Vec<f64> = (0..n).map(|i| self.log_kernel(i, j, x[j])).collect();
                    log_sum_exp(&terms) - log_n
                })
                .sum()
        }
    }

    fn sample_coord<R: Rng + ?Sized>(&self, rng: &mut R, i: usize, j: usize) -> f64 {
        let phi = std_normal();
        let (mu, h) = (self.points[i][j], self.bandwidth[j]);
        let lo = phi.cdf(-mu / h);
        let hi = phi.cdf((1.0 - mu) / h);
        let u = lo + rng.random::<f64>() * (hi - lo);
        let x = mu + h * phi.inverse_cdf(u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON));
        x.clamp(0.0, 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, dims: usize, multivariate: bool) -> Vec<f64> {
        let n = self.points.len();
        if n == 0 {
            return (0..dims).map(|_| rng.random::<f64>()).collect();
        }
        if multivariate {
            let i = rng.random_range(0..n);
            (0..dims).map(|j| self.sample_coord(rng, i, j)).collect()
        } else {
            (0..dims)
                .map(|j| {
                    let i = rng.random_range(0..n);
                    self.sample_coord(rng, i, j)
                })
                .collect()
        }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn tpe_suggest<R: Rng + ?Sized>(
    space: &SearchSpace,
    history: &[Observation],
    params: &TpeParams,
    rng: &mut R,
) -> Result<Suggestion> {
    params.validate()?;
    if history.len() < params.n_startup {
        return Ok(Suggestion {
            config: random_suggest(space, rng),
            score: None,
        });
    }
    if let Some(o) = history.iter().find(|o| !o.objective.is_finite()) {
        return Err(Error::Config(format!("non-finite objective {} in history", o.objective)));
    }
    let d = space.len();
    let (good, bad) = tpe_split(history, params.gamma);
    let to_units = |set: &[&Observation]| -> Result<Vec<Vec<f64>>> {
        set.iter().map(|o| space.to_unit_vec(&o.config)).collect()
    };
    // Both densities share the good set's bandwidth.
    let good = to_units(&good)?;
    let bandwidth = scott_bandwidth(&good, d);
    let l = Parzen::with_bandwidth(good, bandwidth.clone());
    let g = Parzen::with_bandwidth(to_units(&bad)?, bandwidth);

    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..params.n_candidates {
        let x = l.sample(rng, d, params.multivariate);
        let score = l.log_pdf(&x, params.multivariate) - g.log_pdf(&x, params.multivariate);
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((x, score));
        }
    }
    let (x, score) = best.expect("n_candidates >= 1");
    Ok(Suggestion {
        config: space.config_from_unit(&x, "tpe")?,
        score: Some(score),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search_space::ParamDomain;
    use crate::seeding;
    use proptest::prelude::*;

    fn line() -> SearchSpace {
        SearchSpace::from_domains([("x", ParamDomain::Uniform { lo: 0.0, hi: 1.0 })]).unwrap()
    }

    fn obs(x: f64, objective: f64) -> Observation {
        Observation {
            config: Config::new([("x", x)], "test"),
            objective,
        }
    }

    #[test]
    fn split_sizes() {
        let h: Vec<_> = (0..10).map(|i| obs(i as f64 / 10.0, i as f64)).collect();
        let (good, bad) = tpe_split(&h, 0.25);
        assert_eq!((good.len(), bad.len()), (3, 7));
        assert_eq!(good[0].objective, 7.0);
        let (good, bad) = tpe_split(&h[..1], 0.25);
        assert_eq!((good.len(), bad.len()), (1, 0));
    }

    #[test]
    fn split_ties_keep_earliest() {
        let h: Vec<_> = (0..8).map(|i| obs(i as f64 / 8.0, 1.0)).collect();
        let (good, _) = tpe_split(&h, 0.25);
        let xs: Vec<f64> = good.iter().map(|o| o.config.values[0].1).collect();
        assert_eq!(xs, vec![0.0, 0.125]);
    }

    #[test]
    fn good_count_is_exact_ceil() {
        assert_eq!(good_count(30, 0.1), 3);
        assert_eq!(good_count(10, 0.25), 3);
        assert_eq!(good_count(4, 0.25), 1);
    }

    #[test]
    fn startup_is_random() {
        let s = tpe_suggest(&line(), &[], &TpeParams::default(), &mut seeding::rng(0)).unwrap();
        assert_eq!(s.score, None);
        assert_eq!(s.config.origin, "random");
    }

    #[test]
    fn degenerate_good_set_uses_floor() {
        let mut h: Vec<_> = (0..5).map(|_| obs(0.5, 1.0)).collect();
        h.extend((0..15).map(|i| obs(i as f64 / 15.0, 0.0)));
        let params = TpeParams {
            n_startup: 1,
            ..TpeParams::default()
        };
        let mut inside = 0;
        for seed in 0..500 {
            let s = tpe_suggest(&line(), &h, &params, &mut seeding::rng(seed)).unwrap();
            assert!(s.score.unwrap().is_finite());
            if (s.config.values[0].1 - 0.5).abs() <= 3.0 * MIN_BANDWIDTH {
                inside += 1;
            }
        }
        assert!(inside >= 495, "{inside}/500");
    }

    #[test]
    fn empty_set_is_uniform() {
        let p = Parzen::fit(vec![], 2);
        assert_eq!(p.log_pdf(&[0.3, 0.9], true), 0.0);
    }

    #[test]
    fn truncated_kernel_integrates_to_one() {
        let p = Parzen::fit(vec![vec![0.05], vec![0.9]], 1);
        let n = 20_000;
        let integral: f64 = (0..n)
            .map(|i| p.log_pdf(&[(i as f64 + 0.5) / n as f64], true).exp() / n as f64)
            .sum();
        assert!((integral - 1.0).abs() < 1e-3, "{integral}");
    }

    proptest! {
        #[test]
        fn suggestions_in_bounds_and_deterministic(
            xs in proptest::collection::vec((0.0..1.0f64, -1.0..1.0f64), 1..30),
            gamma in 0.05..0.99f64,
            multivariate in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let space = SearchSpace::from_domains([
                ("a", ParamDomain::LogUniform { lo: 1e-6, hi: 10.0 }),
                ("b", ParamDomain::IntUniform { lo: 16, hi: 256 }),
            ]).unwrap();
            let history: Vec<Observation> = xs.iter().map(|&(u, y)| Observation {
                config: space.config_from_unit(&[u, 1.0 - u], "test").unwrap(),
                objective: y,
            }).collect();
            let params = TpeParams { gamma, n_startup: 1, multivariate, ..TpeParams::default() };
            let a = tpe_suggest(&space, &history, &params, &mut seeding::rng(seed)).unwrap();
            let b = tpe_suggest(&space, &history, &params, &mut seeding::rng(seed)).unwrap();
            prop_assert_eq!(&a, &b);
            space.validate_config(&a.config).unwrap();
            prop_assert!(a.score.unwrap().is_finite());
        }
    }
}
