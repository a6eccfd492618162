//! Single-particle linear-friction model with Lindblad generator `x + i (hbar beta/4m) p`.
//!
//! Its momentum statistics are those of an Ornstein–Uhlenbeck process with
//! per-component drift `beta D / m` and diffusion `D`:
//! `d<H>/dt = 3D/m - (2 beta D/m) <H>`, relaxing to the Gibbs state
//! `exp(-beta p^2 / 2m)`.

use crate::stats::{stream_rng, stream_seed, EnsembleStats};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToyError {
    #[error("toy parameter `{name}` must be finite and > 0, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("time step {dt:e} exceeds the stability bound {bound:e} = 0.01 m/(beta D)")]
    UnstableStep { dt: f64, bound: f64 },
    #[error("invalid ensemble input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyParams {
    /// Momentum diffusion strength.
    pub d: f64,
    pub beta: f64,
    pub mass: f64,
}

impl ToyParams {
    pub fn new(d: f64, beta: f64, mass: f64) -> Result<Self, ToyError> {
        for (name, value) in [("D", d), ("beta", beta), ("mass", mass)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ToyError::NotPositive { name, value });
            }
        }
        Ok(Self { d, beta, mass })
    }

    /// Heating power `3D/m`.
    pub fn power(&self) -> f64 {
        3.0 * self.d / self.mass
    }

    /// Energy relaxation rate `2 beta D / m`.
    pub fn gamma(&self) -> f64 {
        2.0 * self.beta * self.d / self.mass
    }

    /// Per-component momentum drift `beta D / m`.
    pub fn drift(&self) -> f64 {
        self.beta * self.d / self.mass
    }

    /// Largest admissible time step, `0.01 m / (beta D)`.
    pub fn max_dt(&self) -> f64 {
        0.01 / self.drift()
    }
}

pub fn toy_energy_ode(e0: f64, params: &ToyParams, t: f64) -> f64 {
    let decay = (-params.gamma() * t).exp();
    e0 * decay + 1.5 / params.beta * (1.0 - decay)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    EulerMaruyama,
    /// Exact Ornstein–Uhlenbeck transition (no discretisation bias).
    ExactOu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEnsemble {
    pub stats: EnsembleStats,
    /// Momenta at the horizon, in trajectory order.
    pub final_momenta: Vec<[f64; 3]>,
}

impl ToyEnsemble {
    /// `<p^2>` averaged over the ensemble and over grid points with `t >= from`.
    pub fn stationary_second_moment(&self, mass: f64, from: f64) -> Option<f64> {
        let late: Vec<f64> = self
            .stats
            .time_grid
            .iter()
            .zip(&self.stats.mean_h)
            .filter(|(t, _)| **t >= from)
            .map(|(_, h)| 2.0 * mass * h)
            .collect();
        (!late.is_empty()).then(|| late.iter().sum::<f64>() / late.len() as f64)
    }

    /// Least-squares slope of `<H>(t)` through the origin over `t <= until`.
    pub fn initial_heating_slope(&self, until: f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (t, h) in self.stats.time_grid.iter().zip(&self.stats.mean_h) {
            if *t <= until {
                num += t * h;
                den += t * t;
            }
        }
        num / den
    }
}

/// Ensemble of momentum paths started at `p = 0`, sampled on `n_grid` evenly
/// spaced times in `(0, horizon]`. Trajectory `i` uses stream
/// `stream_seed(seed, i)`.
pub fn toy_langevin_ensemble(
    params: &ToyParams,
    n_traj: usize,
    horizon: f64,
    dt: f64,
    n_grid: usize,
    seed: u64,
    integrator: Integrator,
) -> Result<ToyEnsemble, ToyError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(ToyError::Input(format!("dt must be > 0, got {dt}")));
    }
    if dt > params.max_dt() {
        return Err(ToyError::UnstableStep {
            dt,
            bound: params.max_dt(),
        });
    }
    if n_traj < 2 || n_grid == 0 || !(horizon.is_finite() && horizon > 0.0) {
        return Err(ToyError::Input(
            "need n_traj >= 2, n_grid >= 1 and horizon > 0".into(),
        ));
    }
    let grid: Vec<f64> = (1..=n_grid).map(|i| horizon * i as f64 / n_grid as f64).collect();
    let theta = params.drift();
    let (decay, spread) = match integrator {
        Integrator::EulerMaruyama => (1.0 - theta * dt, (2.0 * params.d * dt).sqrt()),
        Integrator::ExactOu => (
            (-theta * dt).exp(),
            // stationary variance m/beta per component
            (params.mass / params.beta * -(-2.0 * theta * dt).exp_m1()).sqrt(),
        ),
    };
    let results: Vec<(Vec<f64>, [f64; 3])> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(stream_seed(seed, i as u64));
            let mut p = [0.0f64; 3];
            let mut t = 0.0;
            let mut row = Vec::with_capacity(grid.len());
            for &tg in &grid {
                let steps = ((tg - t) / dt).round().max(0.0) as usize;
                for _ in 0..steps {
                    for x in p.iter_mut() {
                        *x = decay * *x + spread * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                t += steps as f64 * dt;
                row.push((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / (2.0 * params.mass));
            }
            (row, p)
        })
        .collect();
    let (rows, final_momenta): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(ToyEnsemble {
        stats: EnsembleStats::from_rows(grid, &rows),
        final_momenta,
    })
}
