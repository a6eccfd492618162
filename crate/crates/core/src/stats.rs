//! Ensemble reduction, stream seeding and goodness-of-fit tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erf;
use std::f64::consts::PI;

/// Time-gridded mean kinetic energy over an ensemble of trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub time_grid: Vec<f64>,
    pub mean_h: Vec<f64>,
    pub stderr_h: Vec<f64>,
    pub n_traj: usize,
}

impl EnsembleStats {
    /// Reduces per-trajectory samples (`rows[i][j]` = energy of trajectory `i`
    /// at grid point `j`). Rows are combined in index order with pairwise
    /// summation, so the result does not depend on how rows were produced.
    pub fn from_rows(time_grid: Vec<f64>, rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut mean_h = Vec::with_capacity(time_grid.len());
        let mut stderr_h = Vec::with_capacity(time_grid.len());
        let mut column = vec![0.0; n];
        for j in 0..time_grid.len() {
            for (c, row) in column.iter_mut().zip(rows) {
                *c = row[j];
            }
            let (m, se) = mean_stderr(&column);
            mean_h.push(m);
            stderr_h.push(se);
        }
        Self {
            time_grid,
            mean_h,
            stderr_h,
            n_traj: n,
        }
    }
}

/// Recursive pairwise sum; fixed tree shape for a given length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Sample mean and standard error of the mean (`n - 1` denominator).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `index`: `mix64(mix64(master) ^ index)`.
pub fn stream_seed(master_seed: u64, index: u64) -> u64 {
    mix64(mix64(master_seed) ^ index)
}

pub fn stream_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Asymptotic Kolmogorov survival function `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against `cdf`, with Stephens'
/// finite-sample correction for the p-value.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> TestOutcome {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    TestOutcome {
        statistic: d,
        p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d),
    }
}

/// Pearson chi-square of observed counts against expected probabilities.
/// Degrees of freedom are `bins - 1`.
pub fn chi_square_test(observed: &[u64], probabilities: &[f64]) -> TestOutcome {
    let total: u64 = observed.iter().sum();
    let total = total as f64;
    let stat: f64 = observed
        .iter()
        .zip(probabilities)
        .map(|(&o, &p)| {
            let e = p * total;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = (observed.len() - 1) as f64;
    let dist = ChiSquared::new(dof).expect("positive degrees of freedom");
    TestOutcome {
        statistic: stat,
        p_value: dist.sf(stat),
    }
}

/// CDF of the Maxwell speed distribution with per-component variance `a^2`.
pub fn maxwell_speed_cdf(v: f64, a: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let z = v / a;
    erf(z / 2f64.sqrt()) - (2.0 / PI).sqrt() * z * (-0.5 * z * z).exp()
}
