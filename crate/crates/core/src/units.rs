//! Physical constants, model parameters and the dimensionless working system.
//!
//! All Monte Carlo and quadrature work happens in working units where
//! `hbar = mass = sigma = 1`. [`WorkingUnits`] holds the scale factors that map
//! those numbers back to whatever unit system the [`PhysicalConstants`] are
//! expressed in (SI by default).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("parameter `{name}` must be finite and > 0, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("parameter `{name}` must be finite and >= 0, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("CSL model requires gamma_csl")]
    MissingCoupling,
    #[error("gamma_csl is only meaningful for the CSL model")]
    UnexpectedCoupling,
}

fn positive(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ParamError::NotPositive { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(ParamError::Negative { name, value })
    }
}

/// Fundamental constants used by every formula in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub g: f64,
    pub k_b: f64,
    /// Reference nucleon mass entering the CSL collapse-rate convention.
    pub m0: f64,
}

impl PhysicalConstants {
    /// CODATA 2018 values; `m0` is the atomic mass unit.
    pub const SI: Self = Self {
        hbar: 1.054_571_817e-34,
        g: 6.674_30e-11,
        k_b: 1.380_649e-23,
        m0: 1.660_539_066_60e-27,
    };

    /// All constants set to one. Combined with `mass = sigma = 1` this is the
    /// working system used by the simulations.
    pub const NATURAL: Self = Self {
        hbar: 1.0,
        g: 1.0,
        k_b: 1.0,
        m0: 1.0,
    };

    pub fn validate(&self) -> Result<(), ParamError> {
        positive("hbar", self.hbar)?;
        positive("G", self.g)?;
        positive("k_B", self.k_b)?;
        positive("m0", self.m0)?;
        Ok(())
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "DP")]
    Dp,
    #[serde(rename = "CSL")]
    Csl,
}

impl Model {
    /// Power of `k^2` in the measure-weighted kernel `k^2 D_k`:
    /// 0 for DP (the `1/k^2` cancels), 1 for CSL.
    pub fn radial_power(self) -> u32 {
        match self {
            Model::Dp => 0,
            Model::Csl => 1,
        }
    }

    /// `x_beta^2` at which the dissipation rate vanishes.
    pub fn critical_x_beta_sq(self) -> f64 {
        match self {
            Model::Dp => 16.0 / 9.0,
            Model::Csl => 16.0 / 15.0,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Dp => "DP",
            Model::Csl => "CSL",
        })
    }
}

impl std::str::FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DP" => Ok(Model::Dp),
            "CSL" => Ok(Model::Csl),
            other => Err(format!("unknown model `{other}` (expected DP or CSL)")),
        }
    }
}

/// Parameters of one dissipative collapse model acting on a single particle.
///
/// `beta` is the stored parameter; `beta = 0` is the standard,
/// non-dissipative model. `T_beta` and `lambda` are derived views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub constants: PhysicalConstants,
    pub model: Model,
    pub sigma: f64,
    pub gamma_csl: Option<f64>,
    pub mass: f64,
    pub beta: f64,
}

impl ModelParams {
    pub fn dp(sigma: f64, mass: f64, beta: f64) -> Self {
        Self {
            constants: PhysicalConstants::SI,
            model: Model::Dp,
            sigma,
            gamma_csl: None,
            mass,
            beta,
        }
    }

    pub fn csl(sigma: f64, gamma: f64, mass: f64, beta: f64) -> Self {
        Self {
            constants: PhysicalConstants::SI,
            model: Model::Csl,
            sigma,
            gamma_csl: Some(gamma),
            mass,
            beta,
        }
    }

    /// Working-unit parameter set (`hbar = G = k_B = m = sigma = 1`). For CSL the
    /// coupling is `gamma`.
    pub fn natural(model: Model, gamma: f64, beta: f64) -> Self {
        let base = match model {
            Model::Dp => Self::dp(1.0, 1.0, beta),
            Model::Csl => Self::csl(1.0, gamma, 1.0, beta),
        };
        base.with_constants(PhysicalConstants::NATURAL)
    }

    pub fn with_constants(mut self, constants: PhysicalConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    /// Sets `beta` from the dimensionless `x_beta^2 = hbar^2 beta / (2 m sigma^2)`.
    pub fn with_x_beta_sq(self, x_beta_sq: f64) -> Self {
        let beta = x_beta_sq / (2.0 * self.e_sigma());
        self.with_beta(beta)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.constants.validate()?;
        positive("sigma", self.sigma)?;
        positive("mass", self.mass)?;
        non_negative("beta", self.beta)?;
        match (self.model, self.gamma_csl) {
            (Model::Csl, Some(g)) => {
                non_negative("gamma_csl", g)?;
            }
            (Model::Csl, None) => return Err(ParamError::MissingCoupling),
            (Model::Dp, Some(_)) => return Err(ParamError::UnexpectedCoupling),
            (Model::Dp, None) => {}
        }
        Ok(())
    }

    /// CSL coupling, zero for DP.
    pub fn gamma(&self) -> f64 {
        self.gamma_csl.unwrap_or(0.0)
    }

    /// CSL collapse rate `lambda = gamma m0^2 / (sqrt(4 pi) sigma)^3`.
    pub fn lambda_csl(&self) -> Option<f64> {
        self.gamma_csl
            .map(|g| g * self.constants.m0.powi(2) / ((4.0 * PI).sqrt() * self.sigma).powi(3))
    }

    /// `E_sigma = hbar^2 / (4 m sigma^2)`.
    pub fn e_sigma(&self) -> f64 {
        self.constants.hbar.powi(2) / (4.0 * self.mass * self.sigma.powi(2))
    }

    pub fn x_beta_sq(&self) -> f64 {
        self.constants.hbar.powi(2) * self.beta / (2.0 * self.mass * self.sigma.powi(2))
    }

    /// `T_beta = 1/(k_B beta)`; infinite for the standard models.
    pub fn t_beta(&self) -> f64 {
        if self.beta == 0.0 {
            f64::INFINITY
        } else {
            1.0 / (self.constants.k_b * self.beta)
        }
    }

    pub fn units(&self) -> WorkingUnits {
        WorkingUnits::new(self)
    }
}

/// Total jump rate of the standard (`beta = 0`) model, in 1/time.
///
/// DP: `m^2 G / (sqrt(pi) hbar sigma)`; CSL: `m^2 gamma / (8 pi^{3/2} sigma^3)`.
pub fn base_jump_rate(p: &ModelParams) -> f64 {
    let c = &p.constants;
    match p.model {
        Model::Dp => p.mass.powi(2) * c.g / (PI.sqrt() * c.hbar * p.sigma),
        Model::Csl => p.mass.powi(2) * p.gamma() / (8.0 * PI.powf(1.5) * p.sigma.powi(3)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams {
    pub x_beta_sq: f64,
    /// Jump rate of the non-dissipative process; multiplies every jump rate.
    pub rate_scale: f64,
    pub e_sigma: f64,
}

pub fn nondimensionalize(p: &ModelParams) -> Result<DimensionlessParams, ParamError> {
    p.validate()?;
    Ok(DimensionlessParams {
        x_beta_sq: p.x_beta_sq(),
        rate_scale: base_jump_rate(p),
        e_sigma: p.e_sigma(),
    })
}

/// Inverse of [`nondimensionalize`] given the model, length scale and constants.
///
/// Recovers the mass from `E_sigma`, `beta` from `x_beta^2`, and for CSL the
/// coupling from the rate scale.
pub fn redimensionalize(
    d: &DimensionlessParams,
    model: Model,
    sigma: f64,
    constants: PhysicalConstants,
) -> Result<ModelParams, ParamError> {
    constants.validate()?;
    positive("sigma", sigma)?;
    positive("e_sigma", d.e_sigma)?;
    non_negative("x_beta_sq", d.x_beta_sq)?;
    non_negative("rate_scale", d.rate_scale)?;
    let mass = constants.hbar.powi(2) / (4.0 * d.e_sigma * sigma.powi(2));
    let beta = d.x_beta_sq / (2.0 * d.e_sigma);
    let gamma_csl = match model {
        Model::Dp => None,
        Model::Csl => Some(d.rate_scale * 8.0 * PI.powf(1.5) * sigma.powi(3) / mass.powi(2)),
    };
    let p = ModelParams {
        constants,
        model,
        sigma,
        gamma_csl,
        mass,
        beta,
    };
    p.validate()?;
    Ok(p)
}

/// Scale factors between the working system (`hbar = m = sigma = 1`) and the
/// unit system of the parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkingUnits {
    pub length: f64,
    pub momentum: f64,
    pub time: f64,
    pub energy: f64,
}

impl WorkingUnits {
    pub fn new(p: &ModelParams) -> Self {
        let hbar = p.constants.hbar;
        Self {
            length: p.sigma,
            momentum: hbar / p.sigma,
            time: p.mass * p.sigma.powi(2) / hbar,
            energy: hbar.powi(2) / (p.mass * p.sigma.powi(2)),
        }
    }
}
