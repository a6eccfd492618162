//! Exact event-driven simulation of the single-particle momentum jump process.
//!
//! Between jumps the momentum is constant. A transfer `p -> p + hbar k` happens
//! at rate density
//!
//! ```text
//! (m^2/hbar^2) D_k / (2 pi)^3 * (1 + (beta/8m) [p^2 - (p + hbar k)^2])^2
//!   = (m^2/hbar^2) D_k / (2 pi)^3 * (1 - beta hbar^2 k^2/8m - beta hbar k.p/4m)^2
//! ```
//!
//! so transfers that raise the kinetic energy are suppressed and transfers
//! that lower it are enhanced (for `beta hbar^2 k^2 / 8m < 1`). The mean
//! energy then obeys `d<H>/dt = P - Gamma <H>` exactly, for any state.
//!
//! Jumps are drawn by thinning. For fixed `|p|` the angle-independent envelope
//! `(1 + beta hbar^2 k^2/8m + beta hbar k |p|/4m)^2` multiplies the standard
//! isotropic density; expanding it gives a mixture of terms
//! `k^n exp(-sigma^2 k^2)`, each of which is a gamma variate in `k^2`. The
//! envelope rate is therefore known in closed form and radial proposals are
//! exact. Sampling is done in working units (`hbar = m = sigma = 1`).

use crate::kernels::{kernel_value, KernelError};
use crate::quadrature::gaussian_moment;
use crate::rates::{power_gamma_closed_form, EnvironmentParams, RateError};
use crate::stats::{stream_rng, stream_seed, EnsembleStats};
use crate::units::{base_jump_rate, ModelParams, ParamError, WorkingUnits};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

pub type Vec3 = [f64; 3];

/// Default limit on the number of jumps in one trajectory.
pub const DEFAULT_JUMP_CAP: u64 = 10_000_000;

/// Proposals tried for a single jump before the sampler gives up.
const MAX_PROPOSALS: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("thinning envelope rejected {0} consecutive proposals")]
    EnvelopeExhausted(u64),
    #[error("jump cap of {cap} exceeded at t = {t:e}; partial trajectory kept")]
    JumpCapExceeded {
        cap: u64,
        t: f64,
        partial: Box<Trajectory>,
    },
    #[error("trajectory {index} failed: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error("invalid simulation input: {0}")]
    Input(String),
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn scale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumState {
    pub t: f64,
    pub p: Vec3,
}

impl MomentumState {
    pub fn kinetic_energy(&self, mass: f64) -> f64 {
        dot(&self.p, &self.p) / (2.0 * mass)
    }
}

/// One accepted jump: waiting time and momentum transfer `hbar k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub wait: f64,
    pub transfer: Vec3,
}

/// Rate density (per unit `d^3k`) of the transfer `p -> p + hbar k`.
pub fn jump_rate_density(p: &Vec3, k: &Vec3, params: &ModelParams) -> Result<f64, SimError> {
    let kk = dot(k, k);
    let d = kernel_value(params, kk.sqrt())?;
    let hbar = params.constants.hbar;
    let (m, beta) = (params.mass, params.beta);
    let factor = 1.0 - beta * hbar * hbar * kk / (8.0 * m) - beta * hbar * dot(k, p) / (4.0 * m);
    Ok(m * m / (hbar * hbar) * d / (8.0 * PI.powi(3)) * factor * factor)
}

/// Precomputed sampler for one parameter set.
#[derive(Debug, Clone)]
pub struct JumpProcess {
    params: ModelParams,
    units: WorkingUnits,
    /// Standard-model jump rate in working time.
    base_rate: f64,
    /// `beta / 4` in working units (`beta hbar^2 / (4 m sigma^2)`).
    a2: f64,
    /// Normalised moments `M_{2j+n} / M_{2j}`, n = 0..=4.
    moments: [f64; 5],
    shells: [Gamma<f64>; 5],
}

impl JumpProcess {
    pub fn new(params: &ModelParams) -> Result<Self, SimError> {
        params.validate()?;
        let units = params.units();
        let j = params.model.radial_power();
        let m0 = gaussian_moment(2 * j);
        let mut moments = [0.0; 5];
        for (n, m) in moments.iter_mut().enumerate() {
            *m = gaussian_moment(2 * j + n as u32) / m0;
        }
        let shells = [0, 1, 2, 3, 4].map(|n| {
            Gamma::new((2 * j + n + 1) as f64 / 2.0, 1.0).expect("positive shape")
        });
        Ok(Self {
            params: *params,
            units,
            base_rate: base_jump_rate(params) * units.time,
            a2: params.beta * units.energy / 4.0,
            moments,
            shells,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn units(&self) -> &WorkingUnits {
        &self.units
    }

    /// Total envelope rate and mixture coefficients at working momentum `|p|`.
    fn envelope(&self, p_norm: f64) -> (f64, [f64; 5]) {
        let c1 = self.a2 * p_norm;
        let c2 = 0.5 * self.a2;
        let coef = [1.0, 2.0 * c1, c1 * c1 + 2.0 * c2, 2.0 * c1 * c2, c2 * c2];
        let mut weights = [0.0; 5];
        for n in 0..5 {
            weights[n] = coef[n] * self.moments[n];
        }
        let total: f64 = weights.iter().sum();
        (self.base_rate * total, weights)
    }

    /// Next accepted jump from working momentum `p` within working time
    /// `limit`, or `None` if no jump occurs before `limit`.
    fn next_jump_working<R: Rng>(
        &self,
        p: &Vec3,
        limit: f64,
        rng: &mut R,
    ) -> Result<Option<(f64, Vec3)>, SimError> {
        let p_norm = dot(p, p).sqrt();
        let (rate, weights) = self.envelope(p_norm);
        if rate <= 0.0 {
            return Ok(None);
        }
        let total: f64 = weights.iter().sum();
        let c1 = self.a2 * p_norm;
        let c2 = 0.5 * self.a2;
        let mut elapsed = 0.0;
        for _ in 0..MAX_PROPOSALS {
            let e: f64 = Exp1.sample(rng);
            elapsed += e / rate;
            if elapsed > limit {
                return Ok(None);
            }
            let mut pick = rng.gen::<f64>() * total;
            let mut shell = 4;
            for (n, w) in weights.iter().enumerate() {
                if pick < *w {
                    shell = n;
                    break;
                }
                pick -= w;
            }
            let u = self.shells[shell].sample(rng).sqrt();
            let dir: Vec3 = UnitSphere.sample(rng);
            let q = scale(&dir, u);
            let exact = 1.0 - c2 * u * u - self.a2 * dot(&q, p);
            let bound = 1.0 + c2 * u * u + c1 * u;
            if rng.gen::<f64>() * bound * bound < exact * exact {
                return Ok(Some((elapsed, q)));
            }
        }
        Err(SimError::EnvelopeExhausted(MAX_PROPOSALS))
    }

    /// Samples the waiting time and transfer of the next jump from `state`.
    /// Returns `None` when all jump rates vanish.
    pub fn sample_next_jump<R: Rng>(
        &self,
        state: &MomentumState,
        rng: &mut R,
    ) -> Result<Option<Jump>, SimError> {
        let p = scale(&state.p, 1.0 / self.units.momentum);
        Ok(self
            .next_jump_working(&p, f64::INFINITY, rng)?
            .map(|(wait, q)| Jump {
                wait: wait * self.units.time,
                transfer: scale(&q, self.units.momentum),
            }))
    }

    /// Runs the exact process from working momentum `p0` up to working time
    /// `horizon`, calling `on_jump(t, p_before, p_after)` for each jump.
    fn walk<R: Rng, F: FnMut(f64, &Vec3, &Vec3)>(
        &self,
        p0: Vec3,
        horizon: f64,
        cap: u64,
        rng: &mut R,
        mut on_jump: F,
    ) -> Result<Vec3, WalkStop> {
        let mut t = 0.0;
        let mut p = p0;
        let mut count = 0u64;
        while let Some((wait, q)) = self
            .next_jump_working(&p, horizon - t, rng)
            .map_err(WalkStop::Failed)?
        {
            if count >= cap {
                return Err(WalkStop::Cap { t });
            }
            t += wait;
            let next = [p[0] + q[0], p[1] + q[1], p[2] + q[2]];
            on_jump(t, &p, &next);
            p = next;
            count += 1;
        }
        Ok(p)
    }
}

enum WalkStop {
    /// Working time at which the cap was hit.
    Cap { t: f64 },
    Failed(SimError),
}

/// Jump record of one realisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Initial state followed by the state after each jump.
    pub states: Vec<MomentumState>,
    pub seed: u64,
    pub horizon: f64,
    pub params: ModelParams,
    /// Set when the jump cap stopped the simulation early.
    pub truncated: bool,
}

impl Trajectory {
    pub fn momentum_at(&self, t: f64) -> Vec3 {
        let idx = self.states.partition_point(|s| s.t <= t);
        self.states[idx.saturating_sub(1)].p
    }

    pub fn energy_at(&self, t: f64) -> f64 {
        let p = self.momentum_at(t);
        dot(&p, &p) / (2.0 * self.params.mass)
    }

    /// CSV with columns `t, px, py, pz, H`.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "px", "py", "pz", "H"])?;
        for s in &self.states {
            out.serialize((s.t, s.p[0], s.p[1], s.p[2], s.kinetic_energy(self.params.mass)))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub jump_cap: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            jump_cap: DEFAULT_JUMP_CAP,
        }
    }
}

pub fn simulate_trajectory(
    p0: Vec3,
    params: &ModelParams,
    horizon: f64,
    seed: u64,
) -> Result<Trajectory, SimError> {
    simulate_trajectory_with(p0, params, horizon, seed, SimOptions::default())
}

/// Exact event-driven trajectory, reproducible from `(seed, params, p0, horizon)`.
pub fn simulate_trajectory_with(
    p0: Vec3,
    params: &ModelParams,
    horizon: f64,
    seed: u64,
    opts: SimOptions,
) -> Result<Trajectory, SimError> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(SimError::Input(format!("horizon must be > 0, got {horizon}")));
    }
    if !p0.iter().all(|x| x.is_finite()) {
        return Err(SimError::Input("initial momentum must be finite".into()));
    }
    let process = JumpProcess::new(params)?;
    let u = process.units;
    let mut rng = stream_rng(seed);
    let mut states = vec![MomentumState { t: 0.0, p: p0 }];
    let result = process.walk(
        scale(&p0, 1.0 / u.momentum),
        horizon / u.time,
        opts.jump_cap,
        &mut rng,
        |t, _, p| {
            states.push(MomentumState {
                t: t * u.time,
                p: scale(p, u.momentum),
            })
        },
    );
    let mut traj = Trajectory {
        states,
        seed,
        horizon,
        params: *params,
        truncated: false,
    };
    match result {
        Ok(_) => Ok(traj),
        Err(WalkStop::Cap { t }) => {
            traj.truncated = true;
            Err(SimError::JumpCapExceeded {
                cap: opts.jump_cap,
                t: t * u.time,
                partial: Box::new(traj),
            })
        }
        Err(WalkStop::Failed(e)) => Err(e),
    }
}

/// Initial-momentum law of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialMomentum {
    Fixed(Vec3),
    /// Maxwell–Boltzmann momenta at the given temperature.
    Maxwellian { temperature: f64 },
}

impl InitialMomentum {
    pub fn mean_energy(&self, params: &ModelParams) -> f64 {
        match *self {
            InitialMomentum::Fixed(p) => dot(&p, &p) / (2.0 * params.mass),
            InitialMomentum::Maxwellian { temperature } => {
                1.5 * params.constants.k_b * temperature
            }
        }
    }

    fn sample<R: Rng>(&self, params: &ModelParams, rng: &mut R) -> Vec3 {
        match *self {
            InitialMomentum::Fixed(p) => p,
            InitialMomentum::Maxwellian { temperature } => {
                let s = (params.mass * params.constants.k_b * temperature).sqrt();
                [0; 3].map(|_| s * rng.sample::<f64, _>(StandardNormal))
            }
        }
    }
}

/// Ornstein–Uhlenbeck bath acting between jumps, integrated by Strang
/// splitting with steps no longer than `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thermostat {
    pub env: EnvironmentParams,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub initial: InitialMomentum,
    pub horizon: f64,
    pub n_traj: usize,
    pub time_grid: Vec<f64>,
    pub master_seed: u64,
    pub jump_cap: u64,
    pub thermostat: Option<Thermostat>,
}

impl EnsembleSpec {
    pub fn new(initial: InitialMomentum, horizon: f64, n_traj: usize, time_grid: Vec<f64>, master_seed: u64) -> Self {
        Self {
            initial,
            horizon,
            n_traj,
            time_grid,
            master_seed,
            jump_cap: DEFAULT_JUMP_CAP,
            thermostat: None,
        }
    }

    pub fn with_thermostat(mut self, thermostat: Thermostat) -> Self {
        self.thermostat = Some(thermostat);
        self
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.n_traj < 2 {
            return Err(SimError::Input("n_traj must be at least 2".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SimError::Input(format!("horizon must be > 0, got {}", self.horizon)));
        }
        let in_range = self.time_grid.iter().all(|&t| (0.0..=self.horizon).contains(&t));
        let sorted = self.time_grid.windows(2).all(|w| w[0] <= w[1]);
        if self.time_grid.is_empty() || !in_range || !sorted {
            return Err(SimError::Input(
                "time grid must be non-empty, ascending and within [0, horizon]".into(),
            ));
        }
        if let Some(th) = &self.thermostat {
            if !(th.dt.is_finite() && th.dt > 0.0) {
                return Err(SimError::Input(format!("thermostat dt must be > 0, got {}", th.dt)));
            }
        }
        Ok(())
    }
}

/// `n` points evenly spaced on `(0, horizon]`.
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| horizon * i as f64 / n as f64).collect()
}

/// Per-trajectory seed used by [`run_ensemble`].
pub fn trajectory_seed(master_seed: u64, index: usize) -> u64 {
    stream_seed(master_seed, index as u64)
}

/// Mean kinetic energy on a time grid over `n_traj` independent trajectories.
///
/// Trajectory `i` uses the stream seeded by [`trajectory_seed`]; the result is
/// independent of the rayon thread pool it runs in.
pub fn run_ensemble(params: &ModelParams, spec: &EnsembleSpec) -> Result<EnsembleStats, SimError> {
    spec.validate()?;
    let process = JumpProcess::new(params)?;
    let rows = (0..spec.n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(trajectory_seed(spec.master_seed, i));
            let p0 = spec.initial.sample(params, &mut rng);
            let row = match &spec.thermostat {
                None => energies_on_grid(&process, p0, spec, &mut rng),
                Some(th) => energies_with_thermostat(&process, p0, spec, th, &mut rng),
            };
            row.map_err(|e| SimError::Trajectory {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EnsembleStats::from_rows(spec.time_grid.clone(), &rows))
}

fn energies_on_grid(
    process: &JumpProcess,
    p0: Vec3,
    spec: &EnsembleSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, SimError> {
    let u = process.units;
    let grid: Vec<f64> = spec.time_grid.iter().map(|t| t / u.time).collect();
    let mut out = Vec::with_capacity(grid.len());
    let energy = |p: &Vec3| 0.5 * dot(p, p) * u.energy;
    let last = process.walk(
        scale(&p0, 1.0 / u.momentum),
        spec.horizon / u.time,
        spec.jump_cap,
        rng,
        |t, before, _| {
            while out.len() < grid.len() && grid[out.len()] < t {
                out.push(energy(before));
            }
        },
    );
    let last = match last {
        Ok(p) => p,
        Err(WalkStop::Cap { t }) => return Err(cap_error(process, spec, t)),
        Err(WalkStop::Failed(e)) => return Err(e),
    };
    while out.len() < grid.len() {
        out.push(energy(&last));
    }
    Ok(out)
}

fn cap_error(process: &JumpProcess, spec: &EnsembleSpec, t: f64) -> SimError {
    SimError::JumpCapExceeded {
        cap: spec.jump_cap,
        t: t * process.units.time,
        partial: Box::new(Trajectory {
            states: Vec::new(),
            seed: 0,
            horizon: spec.horizon,
            params: process.params,
            truncated: true,
        }),
    }
}

fn energies_with_thermostat(
    process: &JumpProcess,
    p0: Vec3,
    spec: &EnsembleSpec,
    th: &Thermostat,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, SimError> {
    let u = process.units;
    // per-component drift Gamma_E/2 and stationary variance k_B T_E (working units)
    let theta = 0.5 * th.env.gamma_env * u.time;
    let variance = th.env.k_b * th.env.t_env / u.energy;
    let ou = |p: &mut Vec3, h: f64, rng: &mut ChaCha8Rng| {
        let decay = (-theta * h).exp();
        let spread = (variance * -(-2.0 * theta * h).exp_m1()).sqrt();
        for x in p.iter_mut() {
            *x = *x * decay + spread * rng.sample::<f64, _>(StandardNormal);
        }
    };
    let mut p = scale(&p0, 1.0 / u.momentum);
    let mut t = 0.0;
    let mut jumps = 0u64;
    let mut out = Vec::with_capacity(spec.time_grid.len());
    let dt = th.dt / u.time;
    for &tg in &spec.time_grid {
        let target = tg / u.time;
        let span = target - t;
        if span > 0.0 {
            let steps = (span / dt).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                ou(&mut p, 0.5 * h, rng);
                let mut elapsed = 0.0;
                while let Some((wait, q)) = process.next_jump_working(&p, h - elapsed, rng)? {
                    elapsed += wait;
                    p = [p[0] + q[0], p[1] + q[1], p[2] + q[2]];
                    jumps += 1;
                    if jumps > spec.jump_cap {
                        return Err(cap_error(process, spec, t + elapsed));
                    }
                }
                ou(&mut p, 0.5 * h, rng);
                t += h;
            }
            t = target;
        }
        out.push(0.5 * dot(&p, &p) * u.energy);
    }
    Ok(out)
}

/// Mean energy under `d<H>/dt = P - Gamma <H>`:
/// `E(t) = E0 e^{-Gamma t} + P (1 - e^{-Gamma t}) / Gamma`, which reduces to
/// `E0 + P t` at `Gamma = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceLaw {
    pub power: f64,
    pub gamma: f64,
}

impl BalanceLaw {
    pub fn from_params(params: &ModelParams) -> Result<Self, RateError> {
        let r = power_gamma_closed_form(params)?;
        Ok(Self {
            power: r.power,
            gamma: r.gamma,
        })
    }

    pub fn with_environment(self, env: &EnvironmentParams) -> Self {
        Self {
            power: self.power + env.p_env,
            gamma: self.gamma + env.gamma_env,
        }
    }

    pub fn energy_at(&self, e0: f64, t: f64) -> f64 {
        let x = -self.gamma * t;
        // (1 - e^{-Gamma t}) / Gamma = t * expm1(x) / x
        let growth = if x == 0.0 { t } else { t * x.exp_m1() / x };
        e0 * x.exp() + self.power * growth
    }
}

pub fn exact_energy_trajectory(e0: f64, params: &ModelParams, t: f64) -> Result<f64, RateError> {
    Ok(BalanceLaw::from_params(params)?.energy_at(e0, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates;
    use crate::units::Model;

    fn nat(model: Model, x2: f64) -> ModelParams {
        ModelParams::natural(model, 1.0, 0.0).with_x_beta_sq(x2)
    }

    #[test]
    fn isotropic_without_dissipation() {
        let p = nat(Model::Csl, 0.0);
        let a = jump_rate_density(&[1.0, 0.0, 0.0], &[0.3, 0.2, 0.0], &p).unwrap();
        let b = jump_rate_density(&[0.0, 5.0, 0.0], &[-0.2, 0.0, 0.3], &p).unwrap();
        assert!((a - b).abs() < 1e-16);
        let k = 0.3f64.hypot(0.2);
        let expected = (-k * k).exp() / (8.0 * PI.powi(3));
        assert!((a - expected).abs() < 1e-16);
    }

    #[test]
    fn density_at_rest_and_elastic() {
        let p = nat(Model::Dp, 1.0);
        let k = [0.0, 0.0, 1.2];
        let at_rest = jump_rate_density(&[0.0; 3], &k, &p).unwrap();
        let iso = jump_rate_density(&[0.0; 3], &k, &p.with_beta(0.0)).unwrap();
        let f = 1.0 - p.beta * 1.44 / 8.0;
        assert!((at_rest / iso - f * f).abs() < 1e-14);
        // |p + k| = |p| for p = -k/2
        let elastic = jump_rate_density(&[0.0, 0.0, -0.6], &k, &p).unwrap();
        assert!((elastic / iso - 1.0).abs() < 1e-14);
        assert!(jump_rate_density(&[0.0; 3], &[0.0; 3], &p).is_err());
    }

    #[test]
    fn no_coupling_no_jumps() {
        let p = ModelParams::natural(Model::Csl, 0.0, 0.3);
        let t = simulate_trajectory([1.0, 0.0, 0.0], &p, 100.0, 5).unwrap();
        assert_eq!(t.states.len(), 1);
        let proc_ = JumpProcess::new(&p).unwrap();
        let mut rng = stream_rng(1);
        let s = MomentumState { t: 0.0, p: [0.0; 3] };
        assert!(proc_.sample_next_jump(&s, &mut rng).unwrap().is_none());
    }

    #[test]
    fn deterministic_and_ordered() {
        let p = nat(Model::Dp, 1.0);
        let a = simulate_trajectory([0.5, 0.0, 0.0], &p, 50.0, 42).unwrap();
        let b = simulate_trajectory([0.5, 0.0, 0.0], &p, 50.0, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.states.len() > 5);
        assert!(a.states.windows(2).all(|w| w[0].t < w[1].t));
        assert!(a.states.last().unwrap().t <= 50.0);
        let c = simulate_trajectory([0.5, 0.0, 0.0], &p, 50.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn si_trajectory_scales() {
        // SI parameters: many jumps over a horizon of a few working times
        let p = ModelParams::dp(1e-10, 1.67e-27, 0.0);
        let process = JumpProcess::new(&p).unwrap();
        let rate = base_jump_rate(&p);
        let t = simulate_trajectory([0.0; 3], &p, 200.0 / rate, 9).unwrap();
        assert!(t.states.len() > 100 && t.states.len() < 320, "{}", t.states.len());
        let step = t.states[1].p;
        let k = dot(&step, &step).sqrt() / process.units().momentum;
        assert!(k > 0.0 && k < 10.0);
    }

    #[test]
    fn jump_cap_flags_partial() {
        let p = nat(Model::Dp, 0.0);
        let err = simulate_trajectory_with([0.0; 3], &p, 1e4, 1, SimOptions { jump_cap: 10 })
            .unwrap_err();
        match err {
            SimError::JumpCapExceeded { cap, partial, .. } => {
                assert_eq!(cap, 10);
                assert!(partial.truncated);
                assert_eq!(partial.states.len(), 11);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trajectory_lookup() {
        let p = nat(Model::Dp, 0.0);
        let t = simulate_trajectory([0.0; 3], &p, 20.0, 3).unwrap();
        let s1 = t.states[1];
        assert_eq!(t.momentum_at(s1.t), s1.p);
        assert_eq!(t.momentum_at(0.5 * s1.t), [0.0; 3]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,px,py,pz,H\n"));
        assert_eq!(text.lines().count(), t.states.len() + 1);
    }

    #[test]
    fn ensemble_rows_match_single_trajectories() {
        let p = nat(Model::Dp, 1.0);
        let grid = uniform_grid(10.0, 5);
        let spec = EnsembleSpec::new(InitialMomentum::Fixed([1.0, 0.0, 0.0]), 10.0, 3, grid.clone(), 77);
        let stats = run_ensemble(&p, &spec).unwrap();
        let mut sums = vec![0.0; grid.len()];
        for i in 0..3 {
            let t = simulate_trajectory([1.0, 0.0, 0.0], &p, 10.0, trajectory_seed(77, i)).unwrap();
            for (s, &g) in sums.iter_mut().zip(&grid) {
                *s += t.energy_at(g);
            }
        }
        for (m, s) in stats.mean_h.iter().zip(&sums) {
            assert!((m - s / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_input_validation() {
        let p = nat(Model::Dp, 1.0);
        let bad_n = EnsembleSpec::new(InitialMomentum::Fixed([0.0; 3]), 1.0, 1, vec![0.5], 0);
        assert!(run_ensemble(&p, &bad_n).is_err());
        let bad_grid = EnsembleSpec::new(InitialMomentum::Fixed([0.0; 3]), 1.0, 4, vec![2.0], 0);
        assert!(run_ensemble(&p, &bad_grid).is_err());
    }

    #[test]
    fn ensemble_propagates_failing_index() {
        let p = nat(Model::Dp, 0.0);
        let mut spec = EnsembleSpec::new(InitialMomentum::Fixed([0.0; 3]), 1e3, 4, vec![1e3], 0);
        spec.jump_cap = 5;
        match run_ensemble(&p, &spec).unwrap_err() {
            SimError::Trajectory { source, .. } => {
                assert!(matches!(*source, SimError::JumpCapExceeded { .. }))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exact_energy_limits() {
        let p = nat(Model::Dp, 1.0);
        assert_eq!(exact_energy_trajectory(0.7, &p, 0.0).unwrap(), 0.7);
        let r = rates::power_gamma_closed_form(&p).unwrap();
        let far = exact_energy_trajectory(0.7, &p, 1e4).unwrap();
        let t = rates::effective_temperature(&p).unwrap();
        assert!((far - 1.5 * t).abs() / far < 1e-12);
        assert!((far - r.power / r.gamma).abs() / far < 1e-12);
        let p0 = nat(Model::Dp, 0.0);
        let e = exact_energy_trajectory(0.7, &p0, 3.0).unwrap();
        assert!((e - (0.7 + 3.0 / (4.0 * PI.sqrt()))).abs() < 1e-15);
        // tiny Gamma stays continuous with the linear limit
        let law = BalanceLaw { power: 2.0, gamma: 1e-300 };
        assert!((law.energy_at(1.0, 2.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn heating_balance_ode() {
        // E(t) solves dE/dt = P - Gamma E: check by central differences
        let law = BalanceLaw::from_params(&nat(Model::Csl, 2.0)).unwrap();
        assert!(law.gamma < 0.0);
        let (e0, t, h) = (0.3, 1.7, 1e-5);
        let d = (law.energy_at(e0, t + h) - law.energy_at(e0, t - h)) / (2.0 * h);
        let rhs = law.power - law.gamma * law.energy_at(e0, t);
        assert!((d - rhs).abs() < 1e-8);
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(24))]

        /// Integrating the rate density against the energy change of each
        /// transfer gives `P - Gamma p^2/2m` for every momentum.
        #[test]
        fn energy_drift_is_affine_in_energy(
            csl in proptest::bool::ANY,
            x2 in 0.0f64..3.0,
            p_norm in 0.0f64..4.0,
        ) {
            use crate::quadrature::{integrate, QuadOptions};
            let params = nat(if csl { Model::Csl } else { Model::Dp }, x2);
            let p = [0.0, 0.0, p_norm];
            let inner = |u: f64| {
                integrate(
                    |mu: f64| {
                        let k = [u * (1.0 - mu * mu).sqrt(), 0.0, u * mu];
                        let gain = 0.5 * (dot(&k, &k) + 2.0 * dot(&k, &p));
                        jump_rate_density(&p, &k, &params).unwrap() * gain
                    },
                    -1.0,
                    1.0,
                    QuadOptions::default(),
                )
                .unwrap()
                .value
            };
            let opts = QuadOptions { rel_tol: 1e-11, ..QuadOptions::default() };
            let drift = 2.0 * PI * integrate(|u| u * u * inner(u), 0.0, 12.0, opts).unwrap().value;
            let r = rates::power_gamma_closed_form(&params).unwrap();
            let expected = r.power - r.gamma * 0.5 * p_norm * p_norm;
            let scale = r.power.abs().max((r.gamma * 0.5 * p_norm * p_norm).abs());
            proptest::prop_assert!((drift - expected).abs() <= 1e-9 * scale, "{} vs {}", drift, expected);
        }

        #[test]
        fn rate_density_non_negative(
            x2 in 0.0f64..4.0,
            p in proptest::array::uniform3(-5.0f64..5.0),
            k in proptest::array::uniform3(-5.0f64..5.0),
        ) {
            proptest::prop_assume!(dot(&k, &k) > 1e-12);
            let v = jump_rate_density(&p, &k, &nat(Model::Dp, x2)).unwrap();
            proptest::prop_assert!(v >= 0.0 && v.is_finite());
        }
    }
}
