//! Fourier-space decoherence kernels `D_k` of the DP and CSL models.
//!
//! ```text
//! D_k = exp(-sigma^2 k^2) * { 4 pi hbar G / k^2   (DP)
//!                           { hbar^2 gamma        (CSL)
//! ```
//!
//! The DP kernel is singular at `k = 0`; integrals always carry the radial
//! measure `k^2 dk`, so consumers use [`measure_weighted`] instead.

use crate::units::{Model, ModelParams, ParamError};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("DP kernel is singular at k = 0; use the measure-weighted form k^2 D_k")]
    SingularAtOrigin,
    #[error("wavenumber must be finite and non-negative, got {0}")]
    BadWavenumber(f64),
    #[error("finite-difference step underflow at sigma^2 = {0:e}")]
    StepUnderflow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSample {
    pub k: f64,
    pub value: f64,
    pub model: Model,
}

/// `D_k` at wavenumber magnitude `k`.
pub fn kernel_value(params: &ModelParams, k: f64) -> Result<f64, KernelError> {
    params.validate()?;
    if !(k.is_finite() && k >= 0.0) {
        return Err(KernelError::BadWavenumber(k));
    }
    let c = &params.constants;
    let cutoff = (-(params.sigma * k).powi(2)).exp();
    match params.model {
        Model::Dp if k == 0.0 => Err(KernelError::SingularAtOrigin),
        Model::Dp => Ok(cutoff * 4.0 * PI * c.hbar * c.g / (k * k)),
        Model::Csl => Ok(cutoff * c.hbar.powi(2) * params.gamma()),
    }
}

pub fn kernel_sample(params: &ModelParams, k: f64) -> Result<KernelSample, KernelError> {
    Ok(KernelSample {
        k,
        value: kernel_value(params, k)?,
        model: params.model,
    })
}

/// `k^2 D_k`, finite for every `k >= 0` in both models.
pub fn measure_weighted(params: &ModelParams, k: f64) -> f64 {
    let c = &params.constants;
    let cutoff = (-(params.sigma * k).powi(2)).exp();
    match params.model {
        Model::Dp => cutoff * 4.0 * PI * c.hbar * c.g,
        Model::Csl => cutoff * c.hbar.powi(2) * params.gamma() * k * k,
    }
}

/// `-D''(r)|_{r=0} = \int d^3k/(2 pi)^3 k^2 D_k`, normalised so that
/// `(m/2)` times the result is the `beta = 0` heating power.
pub fn kernel_curvature_at_origin(params: &ModelParams) -> Result<f64, KernelError> {
    params.validate()?;
    let c = &params.constants;
    let s = params.sigma;
    Ok(match params.model {
        Model::Dp => c.hbar * c.g / (2.0 * PI.sqrt() * s.powi(3)),
        Model::Csl => 3.0 * c.hbar.powi(2) * params.gamma() / (16.0 * PI.powf(1.5) * s.powi(5)),
    })
}

/// Derivative of `f` with respect to `sigma^2` at `s = sigma^2`.
///
/// Central differences with step `h = 1e-5 s`, one Richardson extrapolation
/// (`h` and `h/2`).
pub fn sigma_sq_derivative<F: Fn(f64) -> f64>(f: F, s: f64) -> Result<f64, KernelError> {
    let h = 1e-5 * s;
    if !(h > 0.0) || s + 0.5 * h == s || !h.is_normal() {
        return Err(KernelError::StepUnderflow(s));
    }
    let central = |h: f64| (f(s + h) - f(s - h)) / (2.0 * h);
    let coarse = central(h);
    let fine = central(0.5 * h);
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Default 64-point grid on `(0, 6/sigma]`.
pub fn mapping_grid(sigma: f64) -> Vec<f64> {
    (1..=64).map(|i| 6.0 / sigma * i as f64 / 64.0).collect()
}

/// Maximum relative residual of `D_CSL = -(hbar gamma / 4 pi G) dD_DP/d(sigma^2)`
/// over `k_grid`, using a finite-difference derivative of the DP kernel.
pub fn dp_to_csl_mapping_residual(
    params_dp: &ModelParams,
    gamma: f64,
    k_grid: &[f64],
) -> Result<f64, KernelError> {
    params_dp.validate()?;
    let csl = ModelParams {
        model: Model::Csl,
        gamma_csl: Some(gamma),
        ..*params_dp
    };
    csl.validate()?;
    let c = &params_dp.constants;
    let factor = -c.hbar * gamma / (4.0 * PI * c.g);
    let s0 = params_dp.sigma.powi(2);
    let mut worst = 0.0f64;
    for &k in k_grid {
        if !(k > 0.0) {
            return Err(KernelError::BadWavenumber(k));
        }
        let dp_at = |s: f64| kernel_value(&params_dp.with_sigma(s.sqrt()), k).unwrap_or(f64::NAN);
        let numeric = factor * sigma_sq_derivative(dp_at, s0)?;
        let exact = kernel_value(&csl, k)?;
        worst = worst.max((numeric - exact).abs() / exact.abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::PhysicalConstants;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn nat(model: Model) -> ModelParams {
        ModelParams::natural(model, 1.0, 0.0)
    }

    #[test]
    fn csl_at_origin_is_hbar_sq_gamma() {
        let p = ModelParams::csl(1e-7, 3e-30, 1e-20, 0.0);
        let hb = PhysicalConstants::SI.hbar;
        assert_eq!(kernel_value(&p, 0.0).unwrap(), hb * hb * 3e-30);
    }

    #[test]
    fn dp_at_inverse_sigma() {
        let p = ModelParams::dp(2.0, 1.0, 0.0).with_constants(PhysicalConstants::NATURAL);
        let v = kernel_value(&p, 0.5).unwrap();
        let expected = 4.0 * PI * 4.0 / E;
        assert!((v - expected).abs() / expected < 1e-15);
    }

    #[test]
    fn csl_at_two_over_sigma() {
        let v = kernel_value(&nat(Model::Csl), 2.0).unwrap();
        assert!((v - (-4.0f64).exp()).abs() < 1e-17);
    }

    #[test]
    fn dp_origin_is_singular() {
        assert_eq!(
            kernel_value(&nat(Model::Dp), 0.0),
            Err(KernelError::SingularAtOrigin)
        );
        assert!(measure_weighted(&nat(Model::Dp), 0.0).is_finite());
        assert!(matches!(
            kernel_value(&nat(Model::Csl), -1.0),
            Err(KernelError::BadWavenumber(_))
        ));
    }

    #[test]
    fn curvature_reproduces_heating_powers() {
        let p = ModelParams::dp(1e-10, 1.67e-27, 0.0);
        let c = PhysicalConstants::SI;
        let p0 = c.hbar * c.g * p.mass / (4.0 * PI.sqrt() * 1e-30);
        let got = 0.5 * p.mass * kernel_curvature_at_origin(&p).unwrap();
        assert!((got - p0).abs() / p0 < 1e-14);

        let q = ModelParams::csl(1e-7, 2e-30, 1e-20, 0.0);
        let p0 = 3.0 * q.mass * c.hbar.powi(2) * 2e-30 / (32.0 * PI.powf(1.5) * 1e-35);
        let got = 0.5 * q.mass * kernel_curvature_at_origin(&q).unwrap();
        assert!((got - p0).abs() / p0 < 1e-13);
    }

    #[test]
    fn curvature_scales_as_inverse_sigma_cubed() {
        let a = kernel_curvature_at_origin(&nat(Model::Dp)).unwrap();
        let b = kernel_curvature_at_origin(&nat(Model::Dp).with_sigma(2.0)).unwrap();
        assert!((b / a - 0.125).abs() < 1e-15);
    }

    #[test]
    fn mapping_residual_small() {
        let p = ModelParams::dp(1e-10, 1.67e-27, 0.0);
        let r = dp_to_csl_mapping_residual(&p, 1e-30, &mapping_grid(p.sigma)).unwrap();
        assert!(r <= 1e-6, "{r}");
        let r = dp_to_csl_mapping_residual(&nat(Model::Dp), 1.0, &mapping_grid(1.0)).unwrap();
        assert!(r <= 1e-6, "{r}");
        assert!(dp_to_csl_mapping_residual(&nat(Model::Dp), 1.0, &[0.0]).is_err());
    }

    #[test]
    fn step_underflow_is_reported() {
        assert!(matches!(
            sigma_sq_derivative(|s| s, 1e-320),
            Err(KernelError::StepUnderflow(_))
        ));
    }

    proptest! {
        #[test]
        fn csl_nonnegative_and_decreasing(k in 0.0f64..10.0, dk in 1e-6f64..1.0) {
            let p = nat(Model::Csl);
            let a = kernel_value(&p, k).unwrap();
            let b = kernel_value(&p, k + dk).unwrap();
            prop_assert!(a >= 0.0 && b >= 0.0 && b <= a);
        }

        #[test]
        fn dp_weighted_bounded(k in 0.0f64..50.0) {
            let w = measure_weighted(&nat(Model::Dp), k);
            prop_assert!((0.0..=4.0 * PI).contains(&w));
        }
    }
}
