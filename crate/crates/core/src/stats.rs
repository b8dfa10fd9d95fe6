//! Small statistics used for reporting repetitions and comparing methods.

use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Half-width of the two-sided 95% t-interval for the mean,
/// `t(0.975, k − 1) · s / sqrt(k)`. `None` for fewer than two samples.
pub fn ci95_half_width(xs: &[f64]) -> Option<f64> {
    let k = xs.len();
    if k < 2 {
        return None;
    }
    let t = StudentsT::new(0.0, 1.0, (k - 1) as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.975);
    Some(t * sample_std(xs) / (k as f64).sqrt())
}

/// Outcome of a paired one-sided sign test of "a > b".
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// P(X ≥ wins) for X ~ Binomial(wins + losses, 1/2); ties are dropped.
    pub p_value: f64,
}

pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    assert_eq!(a.len(), b.len(), "sign test needs paired samples");
    let (mut wins, mut losses, mut ties) = (0usize, 0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        if x > y {
            wins += 1;
        } else if x < y {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    let n = wins + losses;
    let p_value = if n == 0 || wins == 0 {
        1.0
    } else {
        let bin = Binomial::new(0.5, n as u64).expect("valid binomial");
        // P(X >= wins) = 1 - P(X <= wins - 1)
        bin.sf(wins as u64 - 1)
    };
    SignTest {
        wins,
        losses,
        ties,
        p_value,
    }
}
