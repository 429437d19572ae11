//! Constant θ-perturbations of a model and the resulting changes in `r`.

use alloc::{format, vec::Vec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, Label, Verdict};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::linalg::Matrix;
use crate::lyapunov::{self, LyapunovEstimate};
use crate::math;
use crate::model::{dispersal_irreducible, validate_spec, ModelSpec, NoiseSpec};
use crate::rng::split_seed;
use crate::sde::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Targets {
    pub a: bool,
    pub dispersal: bool,
    pub gamma: bool,
}

impl Targets {
    pub const ALL: Targets = Targets { a: true, dispersal: true, gamma: true };
    pub const GROWTH: Targets = Targets { a: true, dispersal: false, gamma: false };
}

impl Default for Targets {
    fn default() -> Self {
        Targets::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub theta: f64,
    #[serde(default)]
    pub targets: Targets,
    #[serde(default)]
    pub seed: u64,
    /// Use the opposite of the drawn direction.
    #[serde(default)]
    pub flip: bool,
}

impl PerturbationSpec {
    pub fn new(theta: f64, targets: Targets, seed: u64) -> Self {
        PerturbationSpec { theta, targets, seed, flip: false }
    }

    pub fn negated(mut self) -> Self {
        self.flip = !self.flip;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Uniform draw in `[-1, 1]^len` rescaled to sup-norm `theta`.
fn direction(seed: u64, len: usize, theta: f64, flip: bool) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let top = u.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
    let scale = if top > 0.0 { theta / top } else { 0.0 };
    let sign = if flip { -1.0 } else { 1.0 };
    u.iter_mut().for_each(|v| *v *= sign * scale);
    u
}

/// Adds a constant perturbation of sup-norm `θ` to each targeted block.
///
/// Each block gets its own direction, seeded from `p.seed`. Dispersal is
/// perturbed off the diagonal, negative rates are clipped to zero and the
/// diagonal is then reset to the negative row sum. Noise is perturbed as
/// the factor `Γ`, keeping its number of drivers.
pub fn perturb_spec(spec: &ModelSpec, p: &PerturbationSpec) -> Result<ModelSpec> {
    if p.theta.is_nan() || p.theta < 0.0 || p.theta.is_infinite() {
        return Err(Error::Precondition(format!("theta must be finite and non-negative, got {}", p.theta)));
    }
    spec.check_dimensions()?;
    if p.theta == 0.0 {
        return Ok(spec.clone());
    }
    let n = spec.n();
    let mut out = spec.clone();
    if p.targets.a {
        let u = direction(split_seed(p.seed, 0), n, p.theta, p.flip);
        out.a.iter_mut().zip(&u).for_each(|(a, du)| *a += du);
    }
    if p.targets.dispersal && n > 1 {
        let u = direction(split_seed(p.seed, 1), n * (n - 1), p.theta, p.flip);
        let mut d = Matrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            let mut row = 0.0;
            for j in (0..n).filter(|j| *j != i) {
                let v = (spec.dispersal[(i, j)] + u[k]).max(0.0);
                d[(i, j)] = v;
                row += v;
                k += 1;
            }
            d[(i, i)] = -row;
        }
        if dispersal_irreducible(&spec.dispersal) && !dispersal_irreducible(&d) {
            return Err(Error::Reducible(format!(
                "clipping negative rates at theta = {} disconnects the patches; use a smaller theta",
                p.theta
            )));
        }
        out.dispersal = d;
    }
    if p.targets.gamma {
        let g = spec.gamma()?;
        let u = direction(split_seed(p.seed, 2), g.rows() * g.cols(), p.theta, p.flip);
        let mut gamma = g.clone();
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                gamma[(i, j)] += u[i * g.cols() + j];
            }
        }
        out.noise = NoiseSpec::ExplicitGamma { gamma };
    }
    let report = validate_spec(&out)?;
    if !report.violations.is_empty() {
        return Err(Error::Precondition(format!("perturbed model is invalid: {}", report.violations.join("; "))));
    }
    Ok(out)
}

/// Closed form for two patches when it applies, time average otherwise.
pub fn estimate_r(spec: &ModelSpec, cfg: &SimConfig) -> Result<LyapunovEstimate> {
    if spec.n() == 2 {
        match lyapunov::r_closedform_2patch(spec) {
            Err(Error::NonIntegrable(_)) | Err(Error::NoRoot) => {}
            other => return other,
        }
    }
    lyapunov::r_timeavg(spec, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub theta: f64,
    pub trial: usize,
    pub r_base: f64,
    pub r_pert: f64,
    pub abs_dev: f64,
    /// Combined estimation error of `r_base` and `r_pert`.
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub theta: f64,
    pub max_dev: f64,
    pub mean_dev: f64,
    pub trials: usize,
}

/// `|r − r̂|` for `trials` perturbations at each `θ`, sorted by `θ` then
/// trial. Trial `t` uses the direction seeded by `split_seed(p.seed, t)` at
/// every `θ`, so rows at different `θ` differ only in magnitude.
pub fn r_continuity_scan<E: Executor>(
    spec: &ModelSpec,
    thetas: &[f64],
    trials: usize,
    p: &PerturbationSpec,
    cfg: &SimConfig,
    exec: &E,
) -> Result<Vec<ScanRow>> {
    let base = estimate_r(spec, cfg)?;
    let mut order: Vec<f64> = thetas.to_vec();
    order.sort_by(f64::total_cmp);
    let jobs = order.len() * trials;
    let rows = exec.map(jobs, |k| -> Result<ScanRow> {
        let (theta, trial) = (order[k / trials], k % trials);
        let q = p.with_theta(theta).with_seed(split_seed(p.seed, trial as u64));
        let perturbed = perturb_spec(spec, &q)?;
        let c = cfg.clone().with_seed(split_seed(cfg.seed, k as u64));
        let r = if theta == 0.0 { base.clone() } else { estimate_r(&perturbed, &c)? };
        Ok(ScanRow {
            theta,
            trial,
            r_base: base.value,
            r_pert: r.value,
            abs_dev: math::abs(r.value - base.value),
            stderr: if theta == 0.0 { 0.0 } else { math::sqrt(base.stderr * base.stderr + r.stderr * r.stderr) },
        })
    });
    rows.into_iter().collect()
}

/// Max and mean deviation per `θ`, in the order rows appear.
pub fn summarize_scan(rows: &[ScanRow]) -> Vec<ScanSummary> {
    let mut out: Vec<ScanSummary> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some(s) if s.theta == r.theta => {
                s.max_dev = s.max_dev.max(r.abs_dev);
                s.mean_dev += r.abs_dev;
                s.trials += 1;
            }
            _ => out.push(ScanSummary { theta: r.theta, max_dev: r.abs_dev, mean_dev: r.abs_dev, trials: 1 }),
        }
    }
    out.iter_mut().for_each(|s| s.mean_dev /= s.trials as f64);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceSummary {
    pub theta: f64,
    pub verdicts: Vec<Verdict>,
    pub persistent: usize,
    pub extinct: usize,
    pub inconclusive: usize,
}

/// Classifies `trials` perturbations of a persistent model at size `θ`.
pub fn persistence_under_perturbation<E: Executor>(
    spec: &ModelSpec,
    theta: f64,
    trials: usize,
    p: &PerturbationSpec,
    cfg: &SimConfig,
    exec: &E,
) -> Result<PersistenceSummary> {
    let base = analysis::classify(spec, cfg)?;
    if base.label != Label::Persistent {
        return Err(Error::Precondition(format!(
            "unperturbed model is {:?} (r = {}), not persistent",
            base.label, base.r_estimate.value
        )));
    }
    let verdicts: Result<Vec<Verdict>> = exec
        .map(trials, |t| {
            let q = p.with_theta(theta).with_seed(split_seed(p.seed, t as u64));
            let perturbed = perturb_spec(spec, &q)?;
            analysis::classify(&perturbed, &cfg.clone().with_seed(split_seed(cfg.seed, t as u64)))
        })
        .into_iter()
        .collect();
    let verdicts = verdicts?;
    let count = |l: Label| verdicts.iter().filter(|v| v.label == l).count();
    Ok(PersistenceSummary {
        theta,
        persistent: count(Label::Persistent),
        extinct: count(Label::Extinct),
        inconclusive: count(Label::Inconclusive),
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use proptest::prelude::*;

    fn ac_spec() -> ModelSpec {
        ModelSpec::two_patch_single_driver([3.0, 4.0], 1.0, 1.0, [7f64.sqrt(); 2], [1.0, 1.0])
    }

    fn cfg() -> SimConfig {
        SimConfig::new(1e-3, 10.0, 0)
    }

    #[test]
    fn zero_theta_is_identity() {
        let spec = ModelSpec::two_patch([3.0, 4.0], 1.0, 2.0, [1.0, 2.0], 0.3, [1.0, 1.0]);
        assert_eq!(perturb_spec(&spec, &PerturbationSpec::new(0.0, Targets::ALL, 5)).unwrap(), spec);
    }

    #[test]
    fn growth_only_perturbation() {
        let spec = ac_spec();
        let out = perturb_spec(&spec, &PerturbationSpec::new(0.01, Targets::GROWTH, 5)).unwrap();
        let sup = out.a.iter().zip(&spec.a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!((sup - 0.01).abs() < 1e-15);
        assert_eq!(out.dispersal, spec.dispersal);
        assert_eq!(out.noise, spec.noise);
    }

    #[test]
    fn dispersal_repair_keeps_row_sums() {
        let t = Targets { a: false, dispersal: true, gamma: false };
        for seed in 0..20 {
            let out = perturb_spec(&ac_spec(), &PerturbationSpec::new(0.01, t, seed)).unwrap();
            for i in 0..2 {
                assert!((out.dispersal[(i, 0)] + out.dispersal[(i, 1)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clipping_that_disconnects_is_an_error() {
        let spec = ModelSpec::two_patch_single_driver([1.0, 1.0], 0.001, 0.001, [1.0, 1.0], [1.0, 1.0]);
        let t = Targets { a: false, dispersal: true, gamma: false };
        let hit = (0..50).any(|s| matches!(perturb_spec(&spec, &PerturbationSpec::new(0.5, t, s)), Err(Error::Reducible(_))));
        assert!(hit);
    }

    #[test]
    fn uniform_shift_moves_r_by_exactly_c() {
        let spec = ac_spec();
        let base = estimate_r(&spec, &cfg()).unwrap().value;
        for c in [0.01, -0.03] {
            let r = estimate_r(&spec.with_growth_shift(c), &cfg()).unwrap().value;
            assert!(((r - base).abs() - c.abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn scan_zero_row_and_growth() {
        let p = PerturbationSpec::new(0.0, Targets::ALL, 11);
        let rows = r_continuity_scan(&ac_spec(), &[0.02, 0.0, 0.005, 0.01], 6, &p, &cfg(), &Sequential).unwrap();
        assert!(rows.windows(2).all(|w| w[0].theta <= w[1].theta));
        let summary = summarize_scan(&rows);
        assert_eq!(summary[0].max_dev, 0.0);
        for w in summary.windows(2) {
            assert!(w[0].mean_dev <= w[1].mean_dev, "{summary:?}");
        }
        assert!(rows.iter().all(|r| r.abs_dev.is_finite()));
    }

    #[test]
    fn small_perturbations_stay_persistent() {
        let p = PerturbationSpec::new(0.0, Targets::ALL, 3);
        let s = persistence_under_perturbation(&ac_spec(), 0.01, 8, &p, &cfg(), &Sequential).unwrap();
        assert_eq!(s.persistent, 8);
        let s = persistence_under_perturbation(&ac_spec(), 0.0, 3, &p, &cfg(), &Sequential).unwrap();
        assert_eq!(s.persistent, 3);
    }

    #[test]
    fn large_downward_shift_flips_sign() {
        let spec = ac_spec().with_growth_shift(-(0.118034 + 0.1));
        assert_eq!(analysis::classify(&spec, &cfg()).unwrap().label, Label::Extinct);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn opposite_growth_directions_deviate_equally(seed in 0u64..1000, theta in 1e-4f64..0.05) {
            let spec = ac_spec();
            let base = estimate_r(&spec, &cfg()).unwrap().value;
            let p = PerturbationSpec::new(theta, Targets::GROWTH, seed);
            let up = perturb_spec(&spec, &p).unwrap();
            let down = perturb_spec(&spec, &p.negated()).unwrap();
            for i in 0..2 {
                prop_assert!(((up.a[i] - spec.a[i]) + (down.a[i] - spec.a[i])).abs() < 1e-15);
            }
            let ru = estimate_r(&up, &cfg()).unwrap().value - base;
            let rd = estimate_r(&down, &cfg()).unwrap().value - base;
            // r is smooth in a, so opposite shifts cancel to second order
            prop_assert!((ru + rd).abs() <= 10.0 * theta * theta + 1e-9, "{} {}", ru, rd);
            prop_assert!(ru.abs() <= theta + 1e-9 && rd.abs() <= theta + 1e-9);
        }
    }
}
