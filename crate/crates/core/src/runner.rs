//! Config parsing, experiment dispatch and artifact writing for `dcollapse`.
//!
//! Config files are flat `key = value` lines; `#` starts a comment. Every
//! artifact carries the config hash, the master seed and the crate version.

use crate::friction_toy::{self, Integrator, ToyParams};
use crate::jump_kinetics::{
    self, BalanceLaw, EnsembleSpec, InitialMomentum, Thermostat, DEFAULT_JUMP_CAP,
};
use crate::rates::{self, EnvironmentParams, RateReport, Regime};
use crate::stats::{self, EnsembleStats};
use crate::units::{self, Model, ModelParams, PhysicalConstants};
use crate::{kernels, quadrature};
use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const BASE_KEYS: &[&str] = &[
    "model",
    "units",
    "sigma_m",
    "gamma_csl_m3_per_s",
    "mass_kg",
    "beta_per_J",
    "T_beta_K",
    "x_beta_sq",
    "seed",
    "T_env_K",
    "Gamma_env_per_s",
];
const SWEEP_KEYS: &[&str] = &["sweep_axis", "sweep_min", "sweep_max", "sweep_points", "sweep_scale"];
const MC_KEYS: &[&str] = &[
    "n_traj",
    "horizon_s",
    "grid_points",
    "p0_x",
    "p0_y",
    "p0_z",
    "initial_temperature_K",
];
const SIMULATE_KEYS: &[&str] = &["jump_cap", "thermostat_dt_s"];
const TOY_KEYS: &[&str] = &["toy_D", "toy_dt_s", "toy_integrator"];

#[derive(Debug, Error, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("config")?;
        if let Some(line) = self.line {
            write!(f, " line {line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, " key `{key}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

fn config_err(line: Option<usize>, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        key: Some(key.to_string()),
        message: message.into(),
    }
}

/// Parsed `key = value` pairs with their source line numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, (usize, String)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError {
                    line: Some(line),
                    key: None,
                    message: format!("expected `key = value`, got `{content}`"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !is_known(key) {
                return Err(config_err(Some(line), key, "unknown key"));
            }
            if value.is_empty() {
                return Err(config_err(Some(line), key, "empty value"));
            }
            if let Some((first, _)) = entries.get(key) {
                return Err(config_err(Some(line), key, format!("duplicate (first set on line {first})")));
            }
            entries.insert(key.to_string(), (line, value.to_string()));
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Ok(Self::parse(&text)?)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| config_err(Some(*line), key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let v: Option<f64> = self.parsed(key)?;
        match v {
            Some(x) if !x.is_finite() => Err(config_err(self.line(key), key, "must be finite")),
            other => Ok(other),
        }
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|(l, _)| *l)
    }

    fn require<T>(&self, key: &str, v: Option<T>) -> Result<T, ConfigError> {
        v.ok_or_else(|| config_err(None, key, "required but missing"))
    }

    /// SHA-256 over the sorted entries, with the config `seed` replaced by the
    /// effective one.
    pub fn hash(&self, seed: u64) -> String {
        let mut h = Sha256::new();
        for (k, (_, v)) in &self.entries {
            if k != "seed" {
                h.update(format!("{k}={v}\n"));
            }
        }
        h.update(format!("seed={seed}\n"));
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn is_known(key: &str) -> bool {
    [BASE_KEYS, SWEEP_KEYS, MC_KEYS, SIMULATE_KEYS, TOY_KEYS]
        .iter()
        .any(|set| set.contains(&key))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Rates,
    Sweep,
    Simulate,
    Toy,
    Validate,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Rates => "rates",
            Command::Sweep => "sweep",
            Command::Simulate => "simulate",
            Command::Toy => "toy",
            Command::Validate => "validate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisScale {
    Linear,
    Log,
}

/// Parameter a sweep varies; every other parameter stays at its config value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AxisName {
    #[serde(rename = "beta_per_J")]
    Beta,
    #[serde(rename = "T_beta_K")]
    TBeta,
    #[serde(rename = "x_beta_sq")]
    XBetaSq,
    #[serde(rename = "sigma_m")]
    Sigma,
}

impl AxisName {
    fn as_str(self) -> &'static str {
        match self {
            AxisName::Beta => "beta_per_J",
            AxisName::TBeta => "T_beta_K",
            AxisName::XBetaSq => "x_beta_sq",
            AxisName::Sigma => "sigma_m",
        }
    }

    fn apply(self, params: &ModelParams, v: f64) -> ModelParams {
        match self {
            AxisName::Beta => params.with_beta(v),
            AxisName::TBeta => params.with_beta(1.0 / (params.constants.k_b * v)),
            AxisName::XBetaSq => params.with_x_beta_sq(v),
            AxisName::Sigma => params.with_sigma(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepAxis {
    pub name: AxisName,
    pub min: f64,
    pub max: f64,
    pub n_points: usize,
    pub scale: AxisScale,
}

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        let n = self.n_points;
        (0..n)
            .map(|i| {
                if i == 0 {
                    return self.min;
                }
                if i == n - 1 {
                    return self.max;
                }
                let f = i as f64 / (n - 1) as f64;
                match self.scale {
                    AxisScale::Linear => self.min + (self.max - self.min) * f,
                    AxisScale::Log => (self.min.ln() + (self.max.ln() - self.min.ln()) * f).exp(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToySettings {
    pub d: f64,
    pub dt: f64,
    pub integrator: Integrator,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSettings {
    pub n_traj: usize,
    pub horizon: f64,
    pub grid_points: usize,
    pub master_seed: u64,
    pub initial: InitialMomentum,
    pub jump_cap: u64,
    pub thermostat_dt: Option<f64>,
    pub toy: Option<ToySettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub command: Command,
    pub params: ModelParams,
    pub env: Option<EnvironmentParams>,
    pub sweep_axis: Option<SweepAxis>,
    pub mc: Option<McSettings>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub config_hash: String,
}

impl ExperimentSpec {
    /// Builds and validates a spec. Keys that do not apply to `command` are
    /// rejected rather than ignored.
    pub fn from_config(
        command: Command,
        cfg: &Config,
        output_dir: PathBuf,
        seed_override: Option<u64>,
    ) -> Result<Self, ConfigError> {
        let allowed: Vec<&[&str]> = match command {
            Command::Rates | Command::Validate => vec![BASE_KEYS],
            Command::Sweep => vec![BASE_KEYS, SWEEP_KEYS],
            Command::Simulate => vec![BASE_KEYS, MC_KEYS, SIMULATE_KEYS],
            Command::Toy => vec![BASE_KEYS, MC_KEYS, TOY_KEYS],
        };
        for (key, (line, _)) in &cfg.entries {
            if !allowed.iter().any(|set| set.contains(&key.as_str())) {
                return Err(config_err(Some(*line), key, format!("not used by command `{command}`")));
            }
        }
        let seed = match seed_override {
            Some(s) => s,
            None => cfg.parsed("seed")?.unwrap_or(0),
        };
        let params = model_params(cfg)?;
        let env = environment(cfg, &params)?;
        let sweep_axis = if command == Command::Sweep { Some(sweep_axis(cfg)?) } else { None };
        let mc = match command {
            Command::Simulate | Command::Toy => Some(mc_settings(cfg, command, seed, &params, env.is_some())?),
            _ => None,
        };
        let spec = Self {
            command,
            params,
            env,
            sweep_axis,
            mc,
            output_dir,
            seed,
            config_hash: cfg.hash(seed),
        };
        spec.check_shape()?;
        Ok(spec)
    }

    fn check_shape(&self) -> Result<(), ConfigError> {
        let wants_sweep = self.command == Command::Sweep;
        let wants_mc = matches!(self.command, Command::Simulate | Command::Toy);
        if wants_sweep != self.sweep_axis.is_some() {
            return Err(config_err(None, "sweep_axis", "present iff command is sweep"));
        }
        if wants_mc != self.mc.is_some() {
            return Err(config_err(None, "n_traj", "present iff command is simulate or toy"));
        }
        Ok(())
    }

    fn header(&self) -> String {
        format!(
            "# config_hash={} seed={} version={} command={}",
            self.config_hash, self.seed, VERSION, self.command
        )
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "config_hash": self.config_hash,
            "seed": self.seed,
            "version": VERSION,
            "command": self.command,
            "params": self.params,
            "env": self.env,
        })
    }
}

fn model_params(cfg: &Config) -> Result<ModelParams, ConfigError> {
    let model: Model = cfg.require("model", cfg.parsed("model")?)?;
    let constants = match cfg.raw("units").unwrap_or("si") {
        "si" => PhysicalConstants::SI,
        "natural" => PhysicalConstants::NATURAL,
        other => {
            return Err(config_err(cfg.line("units"), "units", format!("expected si|natural, got `{other}`")))
        }
    };
    let natural = constants == PhysicalConstants::NATURAL;
    let sigma = match cfg.number("sigma_m")? {
        Some(s) => s,
        None if natural => 1.0,
        None => return Err(config_err(None, "sigma_m", "required but missing")),
    };
    let mass = cfg.number("mass_kg")?.unwrap_or(constants.m0);
    let gamma = cfg.number("gamma_csl_m3_per_s")?;
    let mut params = ModelParams {
        constants,
        model,
        sigma,
        gamma_csl: gamma,
        mass,
        beta: 0.0,
    };
    let choices: Vec<&str> = ["beta_per_J", "T_beta_K", "x_beta_sq"]
        .into_iter()
        .filter(|k| cfg.contains(k))
        .collect();
    if choices.len() > 1 {
        return Err(config_err(
            cfg.line(choices[1]),
            choices[1],
            format!("conflicts with `{}`; give one of beta_per_J, T_beta_K, x_beta_sq", choices[0]),
        ));
    }
    if let Some(b) = cfg.number("beta_per_J")? {
        params.beta = b;
    } else if let Some(t) = cfg.number("T_beta_K")? {
        if t <= 0.0 {
            return Err(config_err(cfg.line("T_beta_K"), "T_beta_K", "must be > 0"));
        }
        params.beta = 1.0 / (constants.k_b * t);
    } else if let Some(x) = cfg.number("x_beta_sq")? {
        params = params.with_x_beta_sq(x);
    }
    params.validate().map_err(|e| {
        let key = match e {
            units::ParamError::MissingCoupling | units::ParamError::UnexpectedCoupling => "gamma_csl_m3_per_s",
            units::ParamError::NotPositive { name, .. } | units::ParamError::Negative { name, .. } => {
                match name {
                    "sigma" => "sigma_m",
                    "mass" => "mass_kg",
                    "beta" => choices.first().copied().unwrap_or("beta_per_J"),
                    "gamma" => "gamma_csl_m3_per_s",
                    other => other,
                }
            }
        };
        config_err(cfg.line(key), key, e.to_string())
    })?;
    Ok(params)
}

fn environment(cfg: &Config, params: &ModelParams) -> Result<Option<EnvironmentParams>, ConfigError> {
    match (cfg.number("T_env_K")?, cfg.number("Gamma_env_per_s")?) {
        (None, None) => Ok(None),
        (Some(t), Some(g)) => EnvironmentParams::new(t, g, params.constants.k_b)
            .map(Some)
            .map_err(|e| config_err(cfg.line("T_env_K"), "T_env_K", e.to_string())),
        (Some(_), None) => Err(config_err(None, "Gamma_env_per_s", "required together with T_env_K")),
        (None, Some(_)) => Err(config_err(None, "T_env_K", "required together with Gamma_env_per_s")),
    }
}

fn sweep_axis(cfg: &Config) -> Result<SweepAxis, ConfigError> {
    let name = match cfg.require("sweep_axis", cfg.raw("sweep_axis"))? {
        "beta_per_J" => AxisName::Beta,
        "T_beta_K" => AxisName::TBeta,
        "x_beta_sq" => AxisName::XBetaSq,
        "sigma_m" => AxisName::Sigma,
        other => {
            return Err(config_err(
                cfg.line("sweep_axis"),
                "sweep_axis",
                format!("expected beta_per_J|T_beta_K|x_beta_sq|sigma_m, got `{other}`"),
            ))
        }
    };
    let scale = match cfg.raw("sweep_scale").unwrap_or("linear") {
        "linear" => AxisScale::Linear,
        "log" => AxisScale::Log,
        other => {
            return Err(config_err(cfg.line("sweep_scale"), "sweep_scale", format!("expected linear|log, got `{other}`")))
        }
    };
    let min = cfg.require("sweep_min", cfg.number("sweep_min")?)?;
    let max = cfg.require("sweep_max", cfg.number("sweep_max")?)?;
    let n_points: usize = cfg.require("sweep_points", cfg.parsed("sweep_points")?)?;
    if n_points == 0 {
        return Err(config_err(cfg.line("sweep_points"), "sweep_points", "must be >= 1"));
    }
    if max < min {
        return Err(config_err(cfg.line("sweep_max"), "sweep_max", "must be >= sweep_min"));
    }
    let positive_axis = matches!(name, AxisName::TBeta | AxisName::Sigma);
    if (scale == AxisScale::Log || positive_axis) && min <= 0.0 {
        return Err(config_err(cfg.line("sweep_min"), "sweep_min", "must be > 0 for this axis/scale"));
    }
    if min < 0.0 {
        return Err(config_err(cfg.line("sweep_min"), "sweep_min", "must be >= 0"));
    }
    Ok(SweepAxis {
        name,
        min,
        max,
        n_points,
        scale,
    })
}

fn mc_settings(
    cfg: &Config,
    command: Command,
    seed: u64,
    params: &ModelParams,
    has_env: bool,
) -> Result<McSettings, ConfigError> {
    let n_traj: usize = cfg.parsed("n_traj")?.unwrap_or(1000);
    if n_traj < 2 {
        return Err(config_err(cfg.line("n_traj"), "n_traj", "must be >= 2"));
    }
    let horizon = cfg.require("horizon_s", cfg.number("horizon_s")?)?;
    if horizon <= 0.0 {
        return Err(config_err(cfg.line("horizon_s"), "horizon_s", "must be > 0"));
    }
    let grid_points: usize = cfg.parsed("grid_points")?.unwrap_or(10);
    if grid_points == 0 {
        return Err(config_err(cfg.line("grid_points"), "grid_points", "must be >= 1"));
    }
    let has_p0 = ["p0_x", "p0_y", "p0_z"].iter().any(|k| cfg.contains(k));
    let initial = match cfg.number("initial_temperature_K")? {
        Some(_) if has_p0 => {
            return Err(config_err(
                cfg.line("initial_temperature_K"),
                "initial_temperature_K",
                "conflicts with p0_x/p0_y/p0_z",
            ))
        }
        Some(t) if t < 0.0 => {
            return Err(config_err(cfg.line("initial_temperature_K"), "initial_temperature_K", "must be >= 0"))
        }
        Some(t) => InitialMomentum::Maxwellian { temperature: t },
        None => InitialMomentum::Fixed([
            cfg.number("p0_x")?.unwrap_or(0.0),
            cfg.number("p0_y")?.unwrap_or(0.0),
            cfg.number("p0_z")?.unwrap_or(0.0),
        ]),
    };
    if command == Command::Toy && initial != InitialMomentum::Fixed([0.0; 3]) {
        return Err(config_err(None, "p0_x", "the toy ensemble always starts from p = 0"));
    }
    let jump_cap: u64 = cfg.parsed("jump_cap")?.unwrap_or(DEFAULT_JUMP_CAP);
    let thermostat_dt = cfg.number("thermostat_dt_s")?;
    match (thermostat_dt, has_env) {
        (Some(dt), _) if dt <= 0.0 => {
            return Err(config_err(cfg.line("thermostat_dt_s"), "thermostat_dt_s", "must be > 0"))
        }
        (Some(_), false) => {
            return Err(config_err(
                cfg.line("thermostat_dt_s"),
                "thermostat_dt_s",
                "needs T_env_K and Gamma_env_per_s",
            ))
        }
        (None, true) if command == Command::Simulate => {
            return Err(config_err(None, "thermostat_dt_s", "required when an environment is configured"))
        }
        _ => {}
    }
    let toy = if command == Command::Toy {
        if has_env {
            return Err(config_err(None, "T_env_K", "not used by command `toy`"));
        }
        let d = cfg.require("toy_D", cfg.number("toy_D")?)?;
        let tp = ToyParams::new(d, params.beta, params.mass)
            .map_err(|e| config_err(cfg.line("toy_D"), "toy_D", e.to_string()))?;
        let dt = cfg.number("toy_dt_s")?.unwrap_or_else(|| tp.max_dt());
        let integrator = match cfg.raw("toy_integrator").unwrap_or("exact") {
            "exact" => Integrator::ExactOu,
            "euler" => Integrator::EulerMaruyama,
            other => {
                return Err(config_err(
                    cfg.line("toy_integrator"),
                    "toy_integrator",
                    format!("expected exact|euler, got `{other}`"),
                ))
            }
        };
        Some(ToySettings { d, dt, integrator })
    } else {
        None
    };
    Ok(McSettings {
        n_traj,
        horizon,
        grid_points,
        master_seed: seed,
        initial,
        jump_cap,
        thermostat_dt,
        toy,
    })
}

/// Outcome of one `validate` check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Paths written by a run, plus the `validate` outcomes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub artifacts: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl RunSummary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn run(spec: &ExperimentSpec) -> anyhow::Result<RunSummary> {
    fs::create_dir_all(&spec.output_dir)
        .with_context(|| format!("creating output dir {}", spec.output_dir.display()))?;
    match spec.command {
        Command::Rates => run_rates(spec),
        Command::Sweep => run_sweep(spec),
        Command::Simulate => run_simulate(spec),
        Command::Toy => run_toy(spec),
        Command::Validate => run_validate(spec),
    }
}

/// Shortest round-trip decimal, switching to exponent form for very large or
/// small magnitudes.
fn num(x: f64) -> String {
    serde_json::Number::from_f64(x)
        .map(|n| n.to_string())
        .unwrap_or_else(|| x.to_string())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

const REPORT_COLUMNS: [&str; 10] = [
    "model", "sigma", "beta", "x_beta_sq", "P", "Gamma", "eta", "E_inf", "T_noise", "regime",
];

fn report_fields(r: &RateReport) -> Vec<String> {
    vec![
        r.model.to_string(),
        num(r.sigma),
        num(r.beta),
        num(r.x_beta_sq),
        num(r.power),
        num(r.gamma),
        num(r.eta),
        fmt_opt(r.e_inf),
        fmt_opt(r.t_noise),
        r.regime.to_string(),
    ]
}

fn write_table(path: &Path, header: &str, columns: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{header}")?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(columns)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn run_rates(spec: &ExperimentSpec) -> anyhow::Result<RunSummary> {
    let report = rates::power_gamma_closed_form(&spec.params).context("rates: power_gamma_closed_form")?;
    let mixed = match &spec.env {
        Some(env) => Some(rates::mixed_equilibrium(&report, env).context("rates: mixed_equilibrium")?),
        None => None,
    };
    let dir = &spec.output_dir;
    let (csv_path, json_path) = (dir.join("rates.csv"), dir.join("rates.json"));
    write_table(&csv_path, &spec.header(), &REPORT_COLUMNS, &[report_fields(&report)])?;
    let mut meta = spec.metadata();
    meta["report"] = serde_json::to_value(report)?;
    meta["T_beta"] = serde_json::to_value(spec.params.t_beta())?;
    meta["threshold_temperature"] = serde_json::to_value(rates::threshold_temperature(&spec.params))?;
    if let Some(m) = mixed {
        meta["mixed_equilibrium"] = serde_json::json!({"E_inf": m.e_inf, "T_eff": m.t_eff});
    }
    write_json(&json_path, &meta)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(RunSummary {
        artifacts: vec![csv_path, json_path],
        checks: Vec::new(),
    })
}

fn run_sweep(spec: &ExperimentSpec) -> anyhow::Result<RunSummary> {
    let axis = spec.sweep_axis.expect("sweep spec carries an axis");
    let values = axis.values();
    let rows = values
        .par_iter()
        .map(|&v| {
            let params = axis.name.apply(&spec.params, v);
            let report = rates::power_gamma_closed_form(&params)
                .with_context(|| format!("sweep: power_gamma_closed_form at {}={v}", axis.name.as_str()))?;
            let mut row = vec![num(v)];
            row.extend(report_fields(&report));
            row.push(num(params.t_beta()));
            Ok(row)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut columns = vec![axis.name.as_str()];
    columns.extend(REPORT_COLUMNS);
    columns.push("T_beta");
    let dir = &spec.output_dir;
    let (csv_path, json_path) = (dir.join("sweep.csv"), dir.join("sweep.json"));
    write_table(&csv_path, &spec.header(), &columns, &rows)?;
    let mut meta = spec.metadata();
    meta["sweep_axis"] = serde_json::to_value(axis)?;
    meta["threshold_temperature"] = serde_json::to_value(rates::threshold_temperature(&spec.params))?;
    write_json(&json_path, &meta)?;
    Ok(RunSummary {
        artifacts: vec![csv_path, json_path],
        checks: Vec::new(),
    })
}

fn ensemble_rows(stats: &EnsembleStats, exact: impl Fn(f64) -> f64) -> Vec<Vec<String>> {
    stats
        .time_grid
        .iter()
        .zip(&stats.mean_h)
        .zip(&stats.stderr_h)
        .map(|((t, m), se)| {
            vec![
                num(*t),
                num(*m),
                num(*se),
                stats.n_traj.to_string(),
                num(exact(*t)),
            ]
        })
        .collect()
}

const ENSEMBLE_COLUMNS: [&str; 5] = ["t", "mean_H", "stderr_H", "n_traj", "E_exact"];

fn run_simulate(spec: &ExperimentSpec) -> anyhow::Result<RunSummary> {
    let mc = spec.mc.as_ref().expect("simulate spec carries mc settings");
    let mut ens = EnsembleSpec::new(
        mc.initial,
        mc.horizon,
        mc.n_traj,
        jump_kinetics::uniform_grid(mc.horizon, mc.grid_points),
        mc.master_seed,
    );
    ens.jump_cap = mc.jump_cap;
    let mut law = BalanceLaw::from_params(&spec.params).context("simulate: balance law")?;
    if let (Some(env), Some(dt)) = (spec.env, mc.thermostat_dt) {
        ens = ens.with_thermostat(Thermostat { env, dt });
        law = law.with_environment(&env);
    }
    let stats = jump_kinetics::run_ensemble(&spec.params, &ens).context("simulate: run_ensemble")?;
    let e0 = mc.initial.mean_energy(&spec.params);
    let dir = &spec.output_dir;
    let csv_path = dir.join("ensemble.csv");
    let json_path = dir.join("ensemble.json");
    write_table(
        &csv_path,
        &spec.header(),
        &ENSEMBLE_COLUMNS,
        &ensemble_rows(&stats, |t| law.energy_at(e0, t)),
    )?;
    let mut artifacts = vec![csv_path, json_path.clone()];
    if spec.env.is_none() {
        if let InitialMomentum::Fixed(p0) = mc.initial {
            let seed = jump_kinetics::trajectory_seed(mc.master_seed, 0);
            let traj = jump_kinetics::simulate_trajectory_with(
                p0,
                &spec.params,
                mc.horizon,
                seed,
                jump_kinetics::SimOptions { jump_cap: mc.jump_cap },
            )
            .context("simulate: simulate_trajectory")?;
            let path = dir.join("trajectory_0.csv");
            let mut buf = format!("{}\n", spec.header()).into_bytes();
            traj.write_csv(&mut buf)?;
            fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
            artifacts.push(path);
        }
    }
    let mut meta = spec.metadata();
    meta["mc"] = serde_json::to_value(mc)?;
    meta["trajectory_seed_rule"] = "mix64(mix64(seed) ^ index), SplitMix64 finaliser; ChaCha8 stream per trajectory".into();
    meta["balance"] = serde_json::json!({"P": law.power, "Gamma": law.gamma, "E0": e0});
    write_json(&json_path, &meta)?;
    Ok(RunSummary {
        artifacts,
        checks: Vec::new(),
    })
}

fn run_toy(spec: &ExperimentSpec) -> anyhow::Result<RunSummary> {
    let mc = spec.mc.as_ref().expect("toy spec carries mc settings");
    let toy = mc.toy.expect("toy spec carries toy settings");
    let tp = ToyParams::new(toy.d, spec.params.beta, spec.params.mass).context("toy: parameters")?;
    let ens = friction_toy::toy_langevin_ensemble(
        &tp,
        mc.n_traj,
        mc.horizon,
        toy.dt,
        mc.grid_points,
        mc.master_seed,
        toy.integrator,
    )
    .context("toy: toy_langevin_ensemble")?;
    let dir = &spec.output_dir;
    let csv_path = dir.join("toy.csv");
    let json_path = dir.join("toy.json");
    write_table(
        &csv_path,
        &spec.header(),
        &ENSEMBLE_COLUMNS,
        &ensemble_rows(&ens.stats, |t| friction_toy::toy_energy_ode(0.0, &tp, t)),
    )?;
    let a = (tp.mass / tp.beta).sqrt();
    let speeds: Vec<f64> = ens
        .final_momenta
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .collect();
    let ks = stats::ks_test(&speeds, |v| stats::maxwell_speed_cdf(v, a));
    let mut meta = spec.metadata();
    meta["mc"] = serde_json::to_value(mc)?;
    meta["toy"] = serde_json::json!({
        "P": tp.power(),
        "Gamma": tp.gamma(),
        "p2_gibbs": 3.0 * tp.mass / tp.beta,
        "p2_final": 2.0 * tp.mass * ens.stats.mean_h.last().copied().unwrap_or(f64::NAN),
        "maxwell_ks_statistic": ks.statistic,
        "maxwell_ks_p_value": ks.p_value,
    });
    write_json(&json_path, &meta)?;
    Ok(RunSummary {
        artifacts: vec![csv_path, json_path],
        checks: Vec::new(),
    })
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs())
    }
}

struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    fn record(&mut self, name: &str, outcome: anyhow::Result<(bool, String)>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e:#}")));
        println!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

/// Invariant suite for the configured parameters plus fixed working-unit cases.
pub fn validation_checks(params: &ModelParams, seed: u64) -> Vec<Check> {
    let mut s = Suite { checks: Vec::new() };
    let p = *params;
    let nat = |model, x2: f64| ModelParams::natural(model, 1.0, 0.0).with_x_beta_sq(x2);

    s.record("units: x_beta^2 = 2 beta E_sigma", (|| {
        let err = rel(p.x_beta_sq(), 2.0 * p.beta * p.e_sigma());
        Ok((err <= 1e-15, format!("rel err {err:e}")))
    })());

    s.record("units: nondimensionalize round trip", (|| {
        let d = units::nondimensionalize(&p)?;
        let q = units::redimensionalize(&d, p.model, p.sigma, p.constants)?;
        let err = [
            rel(q.mass, p.mass),
            rel(q.beta, p.beta),
            rel(q.gamma_csl.unwrap_or(0.0), p.gamma_csl.unwrap_or(0.0)),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        Ok((err <= 1e-14, format!("max rel err {err:e}")))
    })());

    s.record("kernels: positive and finite on grid", (|| {
        let grid = kernels::mapping_grid(p.sigma);
        let ok = grid.iter().all(|&k| {
            kernels::kernel_value(&p, k).map(|v| v > 0.0 && v.is_finite()).unwrap_or(false)
        });
        Ok((ok, format!("{} points", grid.len())))
    })());

    s.record("kernels: DP to CSL sigma^2 mapping", (|| {
        let dp = ModelParams { model: Model::Dp, gamma_csl: None, ..p };
        let gamma = p.gamma_csl.unwrap_or(1.0);
        let rk = kernels::dp_to_csl_mapping_residual(&dp, gamma, &kernels::mapping_grid(p.sigma))?;
        let rr = rates::csl_mapping_residuals(&dp, gamma)?;
        let worst = rk.max(rr.power).max(rr.gamma);
        Ok((worst <= 1e-6, format!("D_k {rk:e}, P {:e}, Gamma {:e}", rr.power, rr.gamma)))
    })());

    s.record("rates: closed form, quadrature and moments agree", (|| {
        let mut worst = 0.0f64;
        let mut cases = vec![p];
        for i in 0..8 {
            cases.push(p.with_x_beta_sq(0.5 * i as f64));
        }
        for c in &cases {
            let a = rates::power_gamma_closed_form(c)?;
            let b = rates::power_gamma_quadrature(c)?;
            let m = rates::power_gamma_moments(c)?;
            // Gamma is compared on the scale of eta since it crosses zero
            let g_err = |g: f64| {
                let scale = a.eta.max(a.gamma.abs());
                if scale == 0.0 { g.abs() } else { (g - a.gamma).abs() / scale }
            };
            worst = worst
                .max(rel(b.power, a.power))
                .max(rel(m.power, a.power))
                .max(g_err(b.gamma))
                .max(g_err(m.gamma));
        }
        Ok((worst <= 1e-8, format!("worst rel err {worst:e} over {} cases", cases.len())))
    })());

    s.record("rates: beta = 0 heating power", (|| {
        let q = rates::power_gamma_quadrature(&p.with_beta(0.0))?;
        let err = rel(q.power, rates::heating_power_standard(&p));
        Ok((err <= 1e-10 && q.gamma == 0.0, format!("rel err {err:e}, Gamma {}", q.gamma)))
    })());

    s.record("rates: critical point", (|| {
        let c = p.with_beta(rates::critical_beta(&p));
        let r = rates::power_gamma_closed_form(&c)?;
        let ratio = r.gamma.abs() / r.eta;
        let below = rates::power_gamma_quadrature(&c.with_beta(0.99 * c.beta))?.gamma;
        let above = rates::power_gamma_quadrature(&c.with_beta(1.01 * c.beta))?.gamma;
        Ok((
            ratio <= 1e-12 && below > 0.0 && above < 0.0 && r.regime == Regime::Critical,
            format!("|Gamma|/eta {ratio:e}, bracket ({below:e}, {above:e})"),
        ))
    })());

    s.record("rates: effective temperature equals (2/3)(P/Gamma)/k_B", (|| {
        let c = if p.x_beta_sq() > 0.0 && p.x_beta_sq() < p.model.critical_x_beta_sq() {
            p
        } else {
            p.with_x_beta_sq(0.5 * p.model.critical_x_beta_sq())
        };
        let r = rates::power_gamma_closed_form(&c)?;
        let t = rates::effective_temperature(&c)?;
        let err = rel(t, 2.0 / 3.0 * r.power / r.gamma / c.constants.k_b);
        Ok((err <= 1e-10, format!("rel err {err:e} at x_beta^2 = {}", c.x_beta_sq())))
    })());

    s.record("rates: symmetric environment mixing", (|| {
        let c = p.with_x_beta_sq(0.5 * p.model.critical_x_beta_sq());
        let r = rates::power_gamma_closed_form(&c)?;
        let t = r.t_noise.context("dissipative branch has T_noise")?;
        let env = EnvironmentParams::new(t, r.gamma, c.constants.k_b)?;
        let m = rates::mixed_equilibrium(&r, &env)?;
        let err = rel(m.t_eff, t);
        Ok((err <= 1e-12, format!("rel err {err:e}")))
    })());

    s.record("quadrature: Gaussian moments", (|| {
        let n = 4;
        let q = quadrature::integrate(
            |x| x.powi(n) * (-x * x).exp(),
            0.0,
            12.0,
            quadrature::QuadOptions::default(),
        )?;
        let err = rel(q.value, quadrature::gaussian_moment(n as u32));
        Ok((err <= 1e-12, format!("rel err {err:e}")))
    })());

    for model in [Model::Dp, Model::Csl] {
        s.record(&format!("jump_kinetics: {model} beta = 0 radial law"), (|| {
            let proc = jump_kinetics::JumpProcess::new(&nat(model, 0.0))?;
            let mut rng = stats::stream_rng(stats::stream_seed(seed, 1));
            let state = jump_kinetics::MomentumState { t: 0.0, p: [0.0; 3] };
            let mut ks = Vec::with_capacity(20_000);
            for _ in 0..20_000 {
                let j = proc.sample_next_jump(&state, &mut rng)?.context("jump sampled")?;
                let q = j.transfer;
                ks.push((q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt());
            }
            let t = match model {
                Model::Dp => stats::ks_test(&ks, statrs::function::erf::erf),
                Model::Csl => stats::ks_test(&ks, |x| statrs::function::gamma::gamma_lr(1.5, x * x)),
            };
            Ok((t.p_value > 0.001, format!("KS D {:.4}, p {:.3}", t.statistic, t.p_value)))
        })());
    }

    for (model, x2) in [(Model::Dp, 1.0), (Model::Csl, 0.5)] {
        s.record(&format!("jump_kinetics: {model} energy balance"), (|| {
            let c = nat(model, x2);
            let law = BalanceLaw::from_params(&c)?;
            let horizon = 2.0 / law.gamma;
            let spec = EnsembleSpec::new(
                InitialMomentum::Fixed([0.0; 3]),
                horizon,
                2000,
                jump_kinetics::uniform_grid(horizon, 5),
                seed,
            );
            let st = jump_kinetics::run_ensemble(&c, &spec)?;
            let worst = st
                .time_grid
                .iter()
                .zip(&st.mean_h)
                .zip(&st.stderr_h)
                .map(|((t, m), se)| (m - law.energy_at(0.0, *t)).abs() / se)
                .fold(0.0, f64::max);
            Ok((worst <= 4.0, format!("max deviation {worst:.2} SE")))
        })());
    }

    s.record("jump_kinetics: ensemble independent of thread count", (|| {
        let c = nat(p.model, 1.0);
        let spec = EnsembleSpec::new(
            InitialMomentum::Fixed([0.5, 0.0, 0.0]),
            3.0,
            64,
            jump_kinetics::uniform_grid(3.0, 4),
            seed,
        );
        let run = |n| -> anyhow::Result<EnsembleStats> {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(|| jump_kinetics::run_ensemble(&c, &spec))?)
        };
        let same = run(1)? == run(3)?;
        Ok((same, if same { "identical".into() } else { "differs".into() }))
    })());

    s.record("friction_toy: Gibbs second moment", (|| {
        let tp = ToyParams::new(1.0, 2.0, 1.0)?;
        let e = friction_toy::toy_langevin_ensemble(&tp, 4000, 20.0, tp.max_dt(), 20, seed, Integrator::ExactOu)?;
        let got = e.stationary_second_moment(tp.mass, 5.0).context("late grid points")?;
        let err = rel(got, 3.0 * tp.mass / tp.beta);
        Ok((err <= 0.02, format!("rel err {err:.4}")))
    })());

    s.checks
}

fn run_validate(spec: &ExperimentSpec) -> anyhow::Result<RunSummary> {
    let checks = validation_checks(&spec.params, spec.seed);
    let path = spec.output_dir.join("validate.json");
    let mut meta = spec.metadata();
    meta["checks"] = serde_json::to_value(&checks)?;
    write_json(&path, &meta)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    let summary = RunSummary {
        artifacts: vec![path],
        checks,
    };
    if failed > 0 {
        bail!("validate: {failed} check(s) failed");
    }
    Ok(summary)
}
