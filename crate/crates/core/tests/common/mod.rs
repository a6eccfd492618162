//! Independent oracles for the jump-density tests (composite Simpson rule on
//! the analytic density; no library quadrature).

#![allow(dead_code)]

use dissipative_collapse::jump_kinetics::{JumpProcess, MomentumState};
use dissipative_collapse::stats::stream_rng;
use dissipative_collapse::ModelParams;

pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Analytic jump density in working units for momentum `p_norm` along z,
/// as a function of transfer magnitude `u` and cosine `mu` to `p`.
#[derive(Clone, Copy)]
pub struct DensityOracle {
    pub radial_power: i32,
    pub beta: f64,
    pub p_norm: f64,
}

impl DensityOracle {
    pub fn new(params: &ModelParams, p_norm: f64) -> Self {
        Self {
            radial_power: params.model.radial_power() as i32,
            beta: params.beta,
            p_norm,
        }
    }

    fn b(&self, u: f64) -> f64 {
        1.0 - self.beta * u * u / 8.0
    }

    fn c(&self, u: f64) -> f64 {
        self.beta * u * self.p_norm / 4.0
    }

    fn radial(&self, u: f64) -> f64 {
        u.powi(2 * self.radial_power) * (-u * u).exp()
    }

    /// Integral over `mu in [m1, m2]` of `(B - C mu)^2` times the radial factor.
    pub fn band(&self, u: f64, m1: f64, m2: f64) -> f64 {
        let (b, c) = (self.b(u), self.c(u));
        let angular = b * b * (m2 - m1) - b * c * (m2 * m2 - m1 * m1)
            + c * c * (m2.powi(3) - m1.powi(3)) / 3.0;
        self.radial(u) * angular
    }

    pub fn marginal(&self, u: f64) -> f64 {
        self.band(u, -1.0, 1.0)
    }

    /// Mean of `u * mu` (transfer component along `p`).
    pub fn mean_parallel_transfer(&self) -> f64 {
        let num = simpson(
            |u| u * self.radial(u) * (-4.0 / 3.0 * self.b(u) * self.c(u)),
            0.0,
            9.0,
            20_000,
        );
        let den = simpson(|u| self.marginal(u), 0.0, 9.0, 20_000);
        num / den
    }

    /// Radial edges splitting the marginal into `n` equal-probability bins
    /// (last edge is infinity).
    pub fn radial_quantile_edges(&self, n: usize) -> Vec<f64> {
        let steps = 40_000;
        let umax = 9.0;
        let h = umax / steps as f64;
        let mut cdf = vec![0.0; steps + 1];
        for i in 0..steps {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            cdf[i + 1] = cdf[i] + simpson(|u| self.marginal(u), a, b, 2);
        }
        let total = cdf[steps];
        let mut edges = vec![0.0];
        for q in 1..n {
            let target = total * q as f64 / n as f64;
            let i = cdf.partition_point(|&c| c < target);
            let frac = (target - cdf[i - 1]) / (cdf[i] - cdf[i - 1]);
            edges.push((i as f64 - 1.0 + frac) * h);
        }
        edges.push(f64::INFINITY);
        edges
    }

    /// Probabilities of the `radial x cosine` grid, row-major in radius.
    pub fn bin_probabilities(&self, r_edges: &[f64], mu_edges: &[f64]) -> Vec<f64> {
        let mut probs = Vec::new();
        for w in r_edges.windows(2) {
            let hi = w[1].min(9.0);
            for m in mu_edges.windows(2) {
                probs.push(simpson(|u| self.band(u, m[0], m[1]), w[0], hi, 2_000));
            }
        }
        let total: f64 = probs.iter().sum();
        probs.iter().map(|p| p / total).collect()
    }
}

/// Draws `n` accepted jumps from a fixed momentum along z and returns
/// `(|k|, cos theta)` in working units.
pub fn sample_transfers(params: &ModelParams, p_norm: f64, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let process = JumpProcess::new(params).unwrap();
    let unit = process.units().momentum;
    let state = MomentumState {
        t: 0.0,
        p: [0.0, 0.0, p_norm * unit],
    };
    let mut rng = stream_rng(seed);
    (0..n)
        .map(|_| {
            let jump = process.sample_next_jump(&state, &mut rng).unwrap().unwrap();
            let q = jump.transfer;
            let k = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
            (k / unit, q[2] / k)
        })
        .collect()
}

pub fn histogram(samples: &[(f64, f64)], r_edges: &[f64], mu_edges: &[f64]) -> Vec<u64> {
    let nm = mu_edges.len() - 1;
    let mut counts = vec![0u64; (r_edges.len() - 1) * nm];
    for &(k, mu) in samples {
        let i = r_edges.partition_point(|&e| e <= k) - 1;
        let j = (mu_edges.partition_point(|&e| e <= mu) - 1).min(nm - 1);
        counts[i * nm + j] += 1;
    }
    counts
}

pub fn uniform_edges(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}
