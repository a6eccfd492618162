//! Heating power, dissipation and friction rates, and the equilibria they imply.
//!
//! For a single particle the dissipator obeys the state-independent balance
//! `d<H>/dt = P - Gamma <H>` with
//!
//! ```text
//! P     = (m/2)    \int d^3k/(2pi)^3 D_k k^2 (1 - (beta hbar^2/4m) k^2 + (beta^2 hbar^4/64 m^2) k^4)
//! Gamma = (beta m/3) \int d^3k/(2pi)^3 D_k k^2 (1 - (3 beta hbar^2/16m) k^2)
//! ```
//!
//! Three evaluation routes are provided: the closed forms, adaptive radial
//! quadrature, and exact Gaussian moments. They are independent and are
//! cross-checked in the tests.

use crate::kernels::{self, measure_weighted, sigma_sq_derivative, KernelError};
use crate::quadrature::{gaussian_moment, integrate, QuadError, QuadOptions};
use crate::units::{Model, ModelParams, ParamError};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

/// `|Gamma| < CRITICAL_TOLERANCE * beta * P0` is reported as critical.
pub const CRITICAL_TOLERANCE: f64 = 1e-12;

/// Upper limit of the radial integrals in units of `1/sigma`.
const RADIAL_CUTOFF: f64 = 14.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("{quantity} quadrature failed: {source}")]
    Quadrature {
        quantity: &'static str,
        source: QuadError,
    },
    #[error("no finite equilibrium temperature: dissipation rate {gamma:e} is not positive")]
    NoEquilibrium { gamma: f64 },
    #[error("environment parameter `{name}` out of domain: {value}")]
    Environment { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "dissipative")]
    Dissipative,
    #[serde(rename = "critical")]
    Critical,
    #[serde(rename = "heating")]
    Heating,
    /// `beta = 0`: the standard models, where `Gamma` vanishes identically.
    #[serde(rename = "dissipative-boundary")]
    Boundary,
}

impl Regime {
    pub fn classify(beta: f64, gamma: f64, p0: f64) -> Self {
        if beta == 0.0 {
            Regime::Boundary
        } else if gamma.abs() < CRITICAL_TOLERANCE * beta * p0 {
            Regime::Critical
        } else if gamma > 0.0 {
            Regime::Dissipative
        } else {
            Regime::Heating
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Dissipative => "dissipative",
            Regime::Critical => "critical",
            Regime::Heating => "heating",
            Regime::Boundary => "dissipative-boundary",
        })
    }
}

/// Flat record of the single-particle rates. Field names are the external
/// JSON/CSV column names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub model: Model,
    pub sigma: f64,
    pub beta: f64,
    pub x_beta_sq: f64,
    #[serde(rename = "P")]
    pub power: f64,
    #[serde(rename = "Gamma")]
    pub gamma: f64,
    pub eta: f64,
    /// `P/Gamma`, only on the dissipative branch.
    #[serde(rename = "E_inf")]
    pub e_inf: Option<f64>,
    /// `(2/3) E_inf / k_B`, only on the dissipative branch.
    #[serde(rename = "T_noise")]
    pub t_noise: Option<f64>,
    pub regime: Regime,
}

impl RateReport {
    fn assemble(params: &ModelParams, power: f64, gamma: f64) -> Self {
        let p0 = heating_power_standard(params);
        let regime = Regime::classify(params.beta, gamma, p0);
        let (e_inf, t_noise) = if regime == Regime::Dissipative {
            let e = power / gamma;
            (Some(e), Some(2.0 / 3.0 * e / params.constants.k_b))
        } else {
            (None, None)
        };
        Self {
            model: params.model,
            sigma: params.sigma,
            beta: params.beta,
            x_beta_sq: params.x_beta_sq(),
            power,
            gamma,
            eta: params.beta * p0,
            e_inf,
            t_noise,
            regime,
        }
    }
}

/// Heating power of the standard model (`beta = 0`).
///
/// DP: `hbar G m / (4 sqrt(pi) sigma^3)`; CSL: `3 m hbar^2 gamma / (32 pi^{3/2} sigma^5)`.
pub fn heating_power_standard(params: &ModelParams) -> f64 {
    let c = &params.constants;
    let (m, s) = (params.mass, params.sigma);
    match params.model {
        Model::Dp => c.hbar * c.g * m / (4.0 * PI.sqrt() * s.powi(3)),
        Model::Csl => 3.0 * m * c.hbar.powi(2) * params.gamma() / (32.0 * PI.powf(1.5) * s.powi(5)),
    }
}

pub fn power_gamma_closed_form(params: &ModelParams) -> Result<RateReport, RateError> {
    params.validate()?;
    let x2 = params.x_beta_sq();
    let x4 = x2 * x2;
    let p0 = heating_power_standard(params);
    let (power, gamma) = match params.model {
        Model::Dp => (
            p0 * (1.0 - 0.75 * x2 + 15.0 / 64.0 * x4),
            // beta hbar m G / (6 sqrt(pi) sigma^3) = (2/3) beta P0
            params.beta * (2.0 / 3.0) * p0 * (1.0 - 9.0 / 16.0 * x2),
        ),
        Model::Csl => (
            p0 * (1.0 - 1.25 * x2 + 35.0 / 64.0 * x4),
            // beta m gamma hbar^2 / (16 pi^{3/2} sigma^5) = (2/3) beta P0
            params.beta * (2.0 / 3.0) * p0 * (1.0 - 15.0 / 16.0 * x2),
        ),
    };
    Ok(RateReport::assemble(params, power, gamma))
}

/// Evaluates the radial integrals of `P` and `Gamma` by adaptive quadrature
/// (angular integration done analytically).
pub fn power_gamma_quadrature(params: &ModelParams) -> Result<RateReport, RateError> {
    power_gamma_quadrature_with(params, QuadOptions::default())
}

pub fn power_gamma_quadrature_with(
    params: &ModelParams,
    opts: QuadOptions,
) -> Result<RateReport, RateError> {
    params.validate()?;
    let (m, s, beta) = (params.mass, params.sigma, params.beta);
    let hb2 = params.constants.hbar.powi(2);
    let c2 = beta * hb2 / (4.0 * m);
    let c4 = beta * beta * hb2 * hb2 / (64.0 * m * m);
    let g2 = 3.0 * beta * hb2 / (16.0 * m);
    // 4 pi / (2 pi)^3
    let angular = 1.0 / (2.0 * PI * PI);

    // k = u / sigma
    let power_integrand = |u: f64| {
        let k = u / s;
        let k2 = k * k;
        measure_weighted(params, k) * k2 * (1.0 - c2 * k2 + c4 * k2 * k2) / s
    };
    let power = integrate(power_integrand, 0.0, RADIAL_CUTOFF, opts)
        .map_err(|source| RateError::Quadrature {
            quantity: "P",
            source,
        })?
        .value;
    let power = 0.5 * m * angular * power;

    let gamma = if beta == 0.0 {
        0.0
    } else {
        let gamma_integrand = |u: f64| {
            let k = u / s;
            let k2 = k * k;
            measure_weighted(params, k) * k2 * (1.0 - g2 * k2) / s
        };
        // Gamma crosses zero at the critical point, so convergence is judged
        // against the magnitude of its leading term.
        let scale = integrate(
            |u: f64| {
                let k = u / s;
                measure_weighted(params, k) * k * k / s
            },
            0.0,
            RADIAL_CUTOFF,
            opts,
        )
        .map_err(|source| RateError::Quadrature {
            quantity: "Gamma",
            source,
        })?
        .value;
        let gopts = QuadOptions {
            abs_tol: opts.rel_tol * scale.abs(),
            ..opts
        };
        let g = integrate(gamma_integrand, 0.0, RADIAL_CUTOFF, gopts)
            .map_err(|source| RateError::Quadrature {
                quantity: "Gamma",
                source,
            })?
            .value;
        beta * m / 3.0 * angular * g
    };
    Ok(RateReport::assemble(params, power, gamma))
}

/// Same integrals evaluated term by term with exact Gaussian moments.
pub fn power_gamma_moments(params: &ModelParams) -> Result<RateReport, RateError> {
    params.validate()?;
    let (m, s, beta) = (params.mass, params.sigma, params.beta);
    let c = &params.constants;
    let hb2 = c.hbar.powi(2);
    // k^2 D_k = amplitude * k^{2j} exp(-sigma^2 k^2)
    let (amplitude, j) = match params.model {
        Model::Dp => (4.0 * PI * c.hbar * c.g, 0),
        Model::Csl => (hb2 * params.gamma(), 1),
    };
    // \int_0^inf k^n exp(-sigma^2 k^2) dk
    let moment = |n: u32| gaussian_moment(n) / s.powi(n as i32 + 1);
    let angular = 1.0 / (2.0 * PI * PI);
    let power = 0.5 * m * angular * amplitude
        * (moment(2 * j + 2) - beta * hb2 / (4.0 * m) * moment(2 * j + 4)
            + beta * beta * hb2 * hb2 / (64.0 * m * m) * moment(2 * j + 6));
    let gamma = beta * m / 3.0 * angular * amplitude
        * (moment(2 * j + 2) - 3.0 * beta * hb2 / (16.0 * m) * moment(2 * j + 4));
    Ok(RateReport::assemble(params, power, gamma))
}

/// Current friction rate `eta = -(beta m / 2) D''(0) = beta P0`.
pub fn friction_rate(params: &ModelParams) -> Result<f64, RateError> {
    Ok(params.beta * 0.5 * params.mass * kernels::kernel_curvature_at_origin(params)?)
}

/// Equipartition temperature of the asymptotic energy, written in terms of
/// `u = E_sigma / (k_B T_beta)`.
pub fn effective_temperature(params: &ModelParams) -> Result<f64, RateError> {
    let report = power_gamma_closed_form(params)?;
    if report.regime != Regime::Dissipative {
        return Err(RateError::NoEquilibrium {
            gamma: report.gamma,
        });
    }
    let u = params.e_sigma() * params.beta;
    let ratio = match params.model {
        Model::Dp => (1.0 - 1.5 * u + 15.0 / 16.0 * u * u) / (1.0 - 9.0 / 8.0 * u),
        Model::Csl => (1.0 - 2.5 * u + 35.0 / 16.0 * u * u) / (1.0 - 15.0 / 8.0 * u),
    };
    Ok(params.t_beta() * ratio)
}

/// `beta` at which `Gamma` vanishes: `k_B T_beta = (9/8) E_sigma` (DP) or
/// `(15/8) E_sigma` (CSL).
pub fn critical_beta(params: &ModelParams) -> f64 {
    params.model.critical_x_beta_sq() / (2.0 * params.e_sigma())
}

/// `T_0 = hbar^2 / (m k_B sigma^2) = 4 E_sigma / k_B`.
pub fn threshold_temperature(params: &ModelParams) -> f64 {
    let c = &params.constants;
    c.hbar.powi(2) / (params.mass * c.k_b * params.sigma.powi(2))
}

/// Residuals of `X_CSL = -(hbar gamma / 4 pi G) dX_DP/d(sigma^2)` for
/// `X = P, Gamma` at fixed `beta`, from finite differences of the closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingResiduals {
    pub power: f64,
    pub gamma: f64,
}

pub fn csl_mapping_residuals(
    params_dp: &ModelParams,
    gamma_csl: f64,
) -> Result<MappingResiduals, RateError> {
    params_dp.validate()?;
    let csl = ModelParams {
        model: Model::Csl,
        gamma_csl: Some(gamma_csl),
        ..*params_dp
    };
    let target = power_gamma_closed_form(&csl)?;
    let c = &params_dp.constants;
    let factor = -c.hbar * gamma_csl / (4.0 * PI * c.g);
    let s0 = params_dp.sigma.powi(2);
    let at = |s: f64| power_gamma_closed_form(&params_dp.with_sigma(s.sqrt()));
    let dp_power = sigma_sq_derivative(|s| at(s).map(|r| r.power).unwrap_or(f64::NAN), s0)?;
    let dp_gamma = sigma_sq_derivative(|s| at(s).map(|r| r.gamma).unwrap_or(f64::NAN), s0)?;
    let rel = |num: f64, exact: f64| {
        if exact == 0.0 {
            num.abs()
        } else {
            (num - exact).abs() / exact.abs()
        }
    };
    Ok(MappingResiduals {
        power: rel(factor * dp_power, target.power),
        gamma: rel(factor * dp_gamma, target.gamma),
    })
}

/// External thermal bath acting on the particle alongside the collapse noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentParams {
    pub t_env: f64,
    pub gamma_env: f64,
    /// `(3/2) k_B T_env Gamma_env`.
    pub p_env: f64,
    pub k_b: f64,
}

impl EnvironmentParams {
    pub fn new(t_env: f64, gamma_env: f64, k_b: f64) -> Result<Self, RateError> {
        if !(t_env.is_finite() && t_env >= 0.0) {
            return Err(RateError::Environment {
                name: "T_env",
                value: t_env,
            });
        }
        if !(gamma_env.is_finite() && gamma_env >= 0.0) {
            return Err(RateError::Environment {
                name: "Gamma_env",
                value: gamma_env,
            });
        }
        Ok(Self {
            t_env,
            gamma_env,
            p_env: 1.5 * k_b * t_env * gamma_env,
            k_b,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedEquilibrium {
    pub e_inf: f64,
    pub t_eff: f64,
}

/// Asymptotic energy and temperature under collapse noise plus environment.
///
/// `T_eff = (Gamma T + Gamma_E T_E)/(Gamma + Gamma_E)` where `Gamma T` is taken
/// as `(2/3) P / k_B`, which stays finite on the heating branch.
pub fn mixed_equilibrium(
    report: &RateReport,
    env: &EnvironmentParams,
) -> Result<MixedEquilibrium, RateError> {
    let total = report.gamma + env.gamma_env;
    if !(total > 0.0) {
        return Err(RateError::NoEquilibrium { gamma: total });
    }
    let e_inf = (report.power + env.p_env) / total;
    let gamma_t = 2.0 / 3.0 * report.power / env.k_b;
    let t_eff = (gamma_t + env.gamma_env * env.t_env) / total;
    Ok(MixedEquilibrium { e_inf, t_eff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::PhysicalConstants;
    use proptest::prelude::*;

    fn nat(model: Model, x2: f64) -> ModelParams {
        ModelParams::natural(model, 1.0, 0.0).with_x_beta_sq(x2)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn dp_standard_model() {
        let p = ModelParams::dp(1e-10, 1.67e-27, 0.0);
        let r = power_gamma_closed_form(&p).unwrap();
        let c = PhysicalConstants::SI;
        let p0 = c.hbar * c.g * p.mass / (4.0 * PI.sqrt() * 1e-30);
        assert!(rel(r.power, p0) < 1e-14);
        assert_eq!(r.gamma, 0.0);
        assert_eq!(r.eta, 0.0);
        assert_eq!(r.regime, Regime::Boundary);
        assert_eq!(r.e_inf, None);
    }

    #[test]
    fn critical_points() {
        for model in [Model::Dp, Model::Csl] {
            let p = nat(model, model.critical_x_beta_sq());
            let r = power_gamma_closed_form(&p).unwrap();
            assert_eq!(r.regime, Regime::Critical, "{model}");
            assert!(r.gamma.abs() <= 1e-12 * p.beta * heating_power_standard(&p));
        }
    }

    #[test]
    fn dp_unit_x_beta() {
        let r = power_gamma_closed_form(&nat(Model::Dp, 1.0)).unwrap();
        let expected = 1.0 / (4.0 * PI.sqrt()) * 31.0 / 64.0;
        assert!(rel(r.power, expected) < 1e-15);
        let q = power_gamma_quadrature(&nat(Model::Dp, 1.0)).unwrap();
        assert!(rel(q.power, expected) < 1e-12);
    }

    #[test]
    fn csl_quadrature_standard_power() {
        let p = ModelParams::csl(1e-7, 2e-30, 1e-20, 0.0);
        let q = power_gamma_quadrature(&p).unwrap();
        let c = PhysicalConstants::SI;
        let expected = 3.0 * p.mass * c.hbar.powi(2) * 2e-30 / (32.0 * PI.powf(1.5) * 1e-35);
        assert!(rel(q.power, expected) < 1e-10);
        assert_eq!(q.gamma, 0.0);
    }

    #[test]
    fn three_routes_agree() {
        for model in [Model::Dp, Model::Csl] {
            for i in 0..=16 {
                let x2 = 4.0 * i as f64 / 16.0;
                let p = nat(model, x2);
                let a = power_gamma_closed_form(&p).unwrap();
                let b = power_gamma_quadrature(&p).unwrap();
                let c = power_gamma_moments(&p).unwrap();
                assert!(rel(b.power, a.power) < 1e-10, "{model} {x2}");
                assert!(rel(c.power, a.power) < 1e-12, "{model} {x2}");
                if x2 > 0.0 && (x2 - model.critical_x_beta_sq()).abs() > 1e-3 {
                    assert!(rel(b.gamma, a.gamma) < 1e-10, "{model} {x2}");
                    assert!(rel(c.gamma, a.gamma) < 1e-12, "{model} {x2}");
                }
            }
        }
    }

    #[test]
    fn friction_rate_is_beta_p0() {
        let p = nat(Model::Dp, 0.7);
        let eta = friction_rate(&p).unwrap();
        assert!(rel(eta, p.beta / (4.0 * PI.sqrt())) < 1e-15);
        assert_eq!(friction_rate(&nat(Model::Csl, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn gamma_leading_order_is_two_thirds_eta() {
        // Gamma/beta and eta/beta as beta -> 0, from the quadrature route
        for model in [Model::Dp, Model::Csl] {
            let p = nat(model, 1e-7);
            let q = power_gamma_quadrature(&p).unwrap();
            let eta = friction_rate(&p).unwrap();
            assert!(rel(q.gamma, 2.0 / 3.0 * eta) < 1e-6, "{model}");
        }
    }

    #[test]
    fn effective_temperature_small_u() {
        // u = 0.001 with E_sigma = 1/4 -> beta = 0.004
        let p = ModelParams::natural(Model::Dp, 0.0, 0.004);
        let t = effective_temperature(&p).unwrap();
        let expected = (1.0 - 1.5e-3 + 15.0 / 16.0 * 1e-6) / (1.0 - 9.0 / 8.0 * 1e-3);
        assert!((t / p.t_beta() - expected).abs() < 1e-12);
        assert!((t / p.t_beta() - 0.999625).abs() < 1e-6);
    }

    #[test]
    fn effective_temperature_errors_off_branch() {
        let p = nat(Model::Dp, 2.0);
        assert!(matches!(
            effective_temperature(&p),
            Err(RateError::NoEquilibrium { .. })
        ));
        assert!(effective_temperature(&nat(Model::Csl, 0.0)).is_err());
    }

    #[test]
    fn critical_beta_values() {
        let p = ModelParams::dp(1e-10, 1.67e-27, 0.0);
        let bc = critical_beta(&p);
        let kt = 1.0 / bc;
        assert!(rel(kt, 9.0 / 8.0 * p.e_sigma()) < 1e-15);
        let q = ModelParams::csl(1e-7, 1e-30, 1e-20, 0.0);
        assert!(rel(1.0 / critical_beta(&q), 15.0 / 8.0 * q.e_sigma()) < 1e-15);
    }

    #[test]
    fn quadrature_brackets_critical_point() {
        for model in [Model::Dp, Model::Csl] {
            let p = ModelParams::natural(model, 1.0, 0.0);
            let bc = critical_beta(&p);
            let lo = power_gamma_quadrature(&p.with_beta(bc * (1.0 - 1e-6))).unwrap();
            let hi = power_gamma_quadrature(&p.with_beta(bc * (1.0 + 1e-6))).unwrap();
            assert!(lo.gamma > 0.0 && hi.gamma < 0.0, "{model}");
        }
    }

    #[test]
    fn threshold_temperature_values() {
        let p = ModelParams::natural(Model::Dp, 0.0, 0.0);
        assert_eq!(threshold_temperature(&p), 1.0);
        // hbar^2 / (m k_B sigma^2) by hand: 1.1121217e-68 / (1.67e-27 * 1.380649e-23 * 1e-20)
        let p = ModelParams::dp(1e-10, 1.67e-27, 0.0);
        let t0 = threshold_temperature(&p);
        assert!((t0 - 48.234).abs() < 0.01, "{t0}");
        assert!(rel(t0, 4.0 * p.e_sigma() / p.constants.k_b) < 1e-15);
    }

    #[test]
    fn mapping_on_rates() {
        for x2 in [0.0, 0.3, 1.0, 2.5] {
            let p = ModelParams::dp(1e-10, 1.67e-27, 0.0).with_x_beta_sq(x2);
            let r = csl_mapping_residuals(&p, 1e-30).unwrap();
            assert!(r.power <= 1e-6 && r.gamma <= 1e-6, "{x2}: {r:?}");
        }
    }

    #[test]
    fn environment_mixing() {
        let report = power_gamma_closed_form(&nat(Model::Dp, 1.0)).unwrap();
        let t = report.t_noise.unwrap();
        let env = EnvironmentParams::new(0.3, report.gamma, 1.0).unwrap();
        let mixed = mixed_equilibrium(&report, &env).unwrap();
        assert!(rel(mixed.t_eff, 0.5 * (t + 0.3)) < 1e-14);
        assert!(rel(1.5 * env.k_b * env.t_env, env.p_env / env.gamma_env) < 1e-15);

        let strong = EnvironmentParams::new(0.3, 1e12, 1.0).unwrap();
        let mixed = mixed_equilibrium(&report, &strong).unwrap();
        assert!(rel(mixed.t_eff, 0.3) < 1e-9);

        let heating = power_gamma_closed_form(&nat(Model::Dp, 3.0)).unwrap();
        assert!(heating.gamma < 0.0);
        let weak = EnvironmentParams::new(0.3, 0.5 * heating.gamma.abs(), 1.0).unwrap();
        assert!(mixed_equilibrium(&heating, &weak).is_err());
        let env = EnvironmentParams::new(0.3, 2.0 * heating.gamma.abs(), 1.0).unwrap();
        let mixed = mixed_equilibrium(&heating, &env).unwrap();
        let expected = (heating.power + env.p_env) / (heating.gamma + env.gamma_env);
        assert!(rel(mixed.e_inf, expected) < 1e-15);
        assert!(EnvironmentParams::new(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn report_serializes_flat() {
        let r = power_gamma_closed_form(&nat(Model::Dp, 1.0)).unwrap();
        let v = serde_json::to_value(r).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        for k in [
            "model", "sigma", "beta", "x_beta_sq", "P", "Gamma", "eta", "E_inf", "T_noise",
            "regime",
        ] {
            assert!(keys.iter().any(|x| x == k), "{k}");
        }
        assert_eq!(v["regime"], "dissipative");
        assert_eq!(v["model"], "DP");
    }

    proptest! {
        #[test]
        fn effective_temperature_matches_ratio(x2 in 0.01f64..1.7, csl in any::<bool>()) {
            let model = if csl { Model::Csl } else { Model::Dp };
            prop_assume!(x2 < model.critical_x_beta_sq() * 0.999);
            let p = nat(model, x2);
            let r = power_gamma_closed_form(&p).unwrap();
            let t = effective_temperature(&p).unwrap();
            prop_assert!(rel(t, r.t_noise.unwrap()) < 1e-10);
        }

        #[test]
        fn regime_follows_sign(x2 in 0.0f64..4.0, csl in any::<bool>()) {
            let model = if csl { Model::Csl } else { Model::Dp };
            let r = power_gamma_closed_form(&nat(model, x2)).unwrap();
            let expected = if x2 == 0.0 { Regime::Boundary }
                else if r.gamma > 0.0 { Regime::Dissipative }
                else if r.gamma < 0.0 { Regime::Heating } else { Regime::Critical };
            if r.regime != Regime::Critical {
                prop_assert_eq!(r.regime, expected);
            }
            let crit = model.critical_x_beta_sq();
            if x2 > 0.0 && x2 < crit * 0.999 { prop_assert!(r.gamma > 0.0); }
            if x2 > crit * 1.001 { prop_assert!(r.gamma < 0.0); }
        }
    }
}
