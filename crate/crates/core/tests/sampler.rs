mod common;

use common::*;
use dissipative_collapse::jump_kinetics::{JumpProcess, MomentumState};
use dissipative_collapse::stats::{chi_square_test, ks_test, mean_stderr, stream_rng};
use dissipative_collapse::{Model, ModelParams};
use statrs::function::erf::erf;
use statrs::function::gamma::gamma_lr;

fn nat(model: Model, x2: f64) -> ModelParams {
    ModelParams::natural(model, 1.0, 0.0).with_x_beta_sq(x2)
}

#[test]
fn csl_radial_law_without_dissipation() {
    let samples = sample_transfers(&nat(Model::Csl, 0.0), 2.0, 100_000, 1);
    let k: Vec<f64> = samples.iter().map(|s| s.0).collect();
    // density ~ k^2 exp(-k^2): k^2 ~ Gamma(3/2)
    let t = ks_test(&k, |x| gamma_lr(1.5, x * x));
    assert!(t.statistic <= 0.01, "{t:?}");
    let mu: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let t = ks_test(&mu, |x| (0.5 * (x + 1.0)).clamp(0.0, 1.0));
    assert!(t.statistic <= 0.01, "{t:?}");
}

#[test]
fn dp_radial_law_without_dissipation() {
    let samples = sample_transfers(&nat(Model::Dp, 0.0), 2.0, 100_000, 2);
    let k: Vec<f64> = samples.iter().map(|s| s.0).collect();
    // density ~ exp(-k^2): half-normal, CDF erf(k)
    let t = ks_test(&k, erf);
    assert!(t.statistic <= 0.01, "{t:?}");
    assert!(t.p_value > 0.001, "{t:?}");
}

#[test]
fn net_damping_along_momentum() {
    for model in [Model::Dp, Model::Csl] {
        let params = nat(model, 0.5);
        let p_norm = 2.0;
        let samples = sample_transfers(&params, p_norm, 100_000, 3);
        let proj: Vec<f64> = samples.iter().map(|(k, mu)| k * mu).collect();
        let (mean, se) = mean_stderr(&proj);
        let oracle = DensityOracle::new(&params, p_norm).mean_parallel_transfer();
        assert!(mean < 0.0 && oracle < 0.0, "{model}: {mean}");
        assert!((mean - oracle).abs() < 4.0 * se, "{model}: {mean} vs {oracle} ± {se}");
    }
}

#[test]
fn joint_histogram_matches_density_heating_branch() {
    // beyond the critical point the anisotropy still follows the same density
    let params = nat(Model::Csl, 2.0);
    let oracle = DensityOracle::new(&params, 1.0);
    let r = oracle.radial_quantile_edges(10);
    let mu = uniform_edges(-1.0, 1.0, 10);
    let counts = histogram(&sample_transfers(&params, 1.0, 50_000, 4), &r, &mu);
    let t = chi_square_test(&counts, &oracle.bin_probabilities(&r, &mu));
    assert!(t.p_value > 0.001, "{t:?}");
}

#[test]
fn waiting_times_follow_total_rate() {
    // at p = 0 the total rate is base * \int f (1 - beta u^2/8)^2
    let params = nat(Model::Dp, 1.0);
    let process = JumpProcess::new(&params).unwrap();
    let mut rng = stream_rng(8);
    let state = MomentumState { t: 0.0, p: [0.0; 3] };
    let waits: Vec<f64> = (0..50_000)
        .map(|_| process.sample_next_jump(&state, &mut rng).unwrap().unwrap().wait)
        .collect();
    let oracle = DensityOracle::new(&params, 0.0);
    let norm = simpson(|u| (-u * u).exp(), 0.0, 9.0, 10_000);
    let ratio = simpson(|u| oracle.marginal(u), 0.0, 9.0, 10_000) / (2.0 * norm);
    let rate = dissipative_collapse::units::base_jump_rate(&params) * ratio;
    let t = ks_test(&waits, |w| 1.0 - (-rate * w).exp());
    assert!(t.p_value > 0.001, "{t:?}");
}
