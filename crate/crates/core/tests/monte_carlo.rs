//! Monte Carlo checks of the integrators against laws known in closed form.

use patchdyn_core::analysis::{extinction_slopes, time_average};
use patchdyn_core::lyapunov::{r_closedform_2patch, r_timeavg};
use patchdyn_core::rng::split_seed;
use patchdyn_core::sde::{simulate_logistic_1d, simulate_x};
use patchdyn_core::stats;
use patchdyn_core::{CompetitionSpec, ModelSpec, Scheme, SimConfig};

fn gbm(a: f64, sigma_sq: f64) -> ModelSpec {
    let mut spec = ModelSpec::single_patch(a, sigma_sq, 0.0);
    spec.competition = vec![CompetitionSpec::zero()];
    spec
}

fn terminal_mean(spec: &ModelSpec, cfg: &SimConfig, paths: u64) -> (f64, f64) {
    let finals: Vec<f64> = (0..paths)
        .map(|i| {
            let c = cfg.clone().with_seed(split_seed(cfg.seed, i));
            simulate_x(spec, &c, &[1.0]).unwrap().last_row()[0]
        })
        .collect();
    (stats::mean(&finals), (stats::variance(&finals) / paths as f64).sqrt())
}

#[test]
fn log_scheme_matches_gbm_mean() {
    // E[X(T)] = exp(aT)
    let (a, s2, t) = (0.3f64, 0.25, 1.0);
    let cfg = SimConfig::new(0.01, t, 17).with_stride(100);
    let (m, se) = terminal_mean(&gbm(a, s2), &cfg, 10_000);
    let exact = (a * t).exp();
    assert!((m - exact).abs() < 3.0 * se, "{m} vs {exact} (se {se})");
}

#[test]
fn clamp_scheme_weak_error_shrinks_with_dt() {
    let (a, s2, t) = (0.5f64, 0.25, 1.0);
    let exact = (a * t).exp();
    let coarse = SimConfig::new(0.1, t, 5).with_scheme(Scheme::EulerClamp);
    let fine = SimConfig::new(0.0125, t, 5).with_scheme(Scheme::EulerClamp);
    let (mc, sc) = terminal_mean(&gbm(a, s2), &coarse, 20_000);
    let (mf, sf) = terminal_mean(&gbm(a, s2), &fine, 20_000);
    // Euler on GBM: E[X_N] = (1 + a dt)^N exactly
    let euler_coarse = (1.0 + a * 0.1f64).powi(10);
    assert!((mc - euler_coarse).abs() < 3.0 * sc);
    assert!((mf - exact).abs() < (mc - exact).abs() + 3.0 * sf);
}

#[test]
fn logistic_time_average_is_gamma_mean() {
    // stationary law is Gamma with mean (a − σ²/2)/κ = 1
    let cfg = SimConfig::new(1e-3, 2000.0, 9).with_stride(10);
    let path = simulate_logistic_1d(1.5, 1.0, 1.0, &cfg, 1.0).unwrap();
    let avg = time_average(&path, 0, 50.0).unwrap();
    assert!((avg.mean - 1.0).abs() < 3.0 * avg.stderr + 1e-3, "{avg:?}");
}

#[test]
fn single_patch_extinction_rate() {
    // a = 0.5, σ² = 2: r = −0.5
    let spec = ModelSpec::single_patch(0.5, 2.0, 1.0);
    let cfg = SimConfig::new(1e-2, 2000.0, 2).with_stride(10);
    let path = simulate_x(&spec, &cfg, &[1.0]).unwrap();
    let s = extinction_slopes(&path, 100.0, 2000.0).unwrap();
    assert!((s[0].slope + 0.5).abs() < 3.0 * s[0].stderr + 1e-3, "{s:?}");
}

#[test]
fn timeavg_tracks_closed_form_for_independent_noise() {
    let spec = ModelSpec::two_patch([3.0, 4.0], 1.0, 1.0, [7f64.sqrt(); 2], 0.0, [1.0, 1.0]);
    let exact = r_closedform_2patch(&spec).unwrap();
    let est = r_timeavg(&spec, &SimConfig::new(1e-3, 500.0, 4)).unwrap();
    assert!(est.agrees_with(&exact, 3.0), "{} ± {} vs {}", est.value, est.stderr, exact.value);
}
