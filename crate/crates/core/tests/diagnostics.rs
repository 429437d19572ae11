use patchdyn_core::analysis::{dispersal_limit_table, extinction_slopes};
use patchdyn_core::exec::Sequential;
use patchdyn_core::lyapunov::r_logslope;
use patchdyn_core::sde::{simplex_center, simulate_linearized_log_s, simulate_x};
use patchdyn_core::{ModelSpec, SimConfig};

#[test]
fn linearized_single_patch_slope_matches_log_total() {
    let spec = ModelSpec::single_patch(0.2, 0.8, 1.0).linearized();
    let cfg = SimConfig::new(1e-3, 200.0, 31).with_stride(10);
    let x = simulate_x(&spec, &cfg, &[1.0]).unwrap();
    let (_, log_s) = simulate_linearized_log_s(&spec, &cfg, &[1.0]).unwrap();
    let from_x = extinction_slopes(&x, 20.0, 200.0).unwrap()[0].slope;
    let lo = x.times.partition_point(|t| *t < 20.0);
    let from_s = patchdyn_core::stats::ls_slope(&x.times[lo..], &log_s[lo..]);
    assert!((from_x - from_s).abs() < 1e-12, "{from_x} vs {from_s}");
}

#[test]
fn logslope_is_the_burned_in_growth_of_log_total() {
    let spec = ModelSpec::two_patch([3.0, 4.0], 1.0, 2.0, [1.0, 1.5], 0.3, [1.0, 1.0]);
    let cfg = SimConfig::new(1e-3, 100.0, 32).with_stride(1);
    let est = r_logslope(&spec, &cfg).unwrap();
    let (_, log_s) = simulate_linearized_log_s(&spec, &cfg, &simplex_center(2)).unwrap();
    let burn = cfg.burn_steps() as usize;
    let expect = (log_s[log_s.len() - 1] - log_s[burn]) / (100.0 - burn as f64 * cfg.dt);
    assert!((est.value - expect).abs() < 1e-12, "{} vs {expect}", est.value);
}

#[test]
fn fast_dispersal_symmetric() {
    let spec = ModelSpec::two_patch([1.0, 2.0], 1.0, 1.0, [0.5, 0.5], 0.0, [1.0, 1.0]);
    let rows = dispersal_limit_table(&spec, &[1000.0], &SimConfig::new(1e-3, 20.0, 33), &Sequential).unwrap();
    assert!(rows[0].error < 0.01, "{:?}", rows[0].proportions);
}

#[test]
fn fast_dispersal_follows_left_eigenvector() {
    let spec = ModelSpec::two_patch([1.0, 2.0], 1.0, 2.0, [0.5, 0.5], 0.0, [1.0, 1.0]);
    let cfg = SimConfig::new(1e-3, 20.0, 34);
    let rows = dispersal_limit_table(&spec, &[1.0, 10.0, 100.0, 1000.0], &cfg, &Sequential).unwrap();
    // D = [[-1, 1], [2, -2]] has left null vector ∝ (2, 1)
    assert!((rows[0].eigenvector[0] - 2.0 / 3.0).abs() < 1e-12);
    let last = &rows[3];
    assert!(last.error < 0.02, "{:?}", last.proportions);
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    // r approaches the aggregated growth rate aᵀπ − ½πᵀΣπ
    assert!((last.r.value - last.r_aggregated).abs() < (rows[0].r.value - rows[0].r_aggregated).abs());
}
