//! Trajectory diagnostics: occupation of the boundary layer, extinction
//! slopes, persistence verdicts, ensemble convergence, synchronization and
//! the fast-dispersal limit.

use alloc::{format, vec, vec::Vec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::linalg::{self, Matrix};
use crate::lyapunov::{self, LyapunovEstimate};
use crate::math;
use crate::model::{dispersal_irreducible, effective_sigma, CompetitionSpec, ModelSpec};
use crate::rng::{split_seed, Increments};
use crate::sde::{self, Path, SimConfig, SimplexStepper, XStepper};
use crate::stats::{self, BatchAccumulator, BatchSummary};

pub const DEFAULT_BAND_FLOOR: f64 = 1e-3;
const SLOPE_BATCHES: usize = 10;
const AVERAGE_BATCHES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupationStats {
    pub eta: f64,
    pub fraction: f64,
    pub horizon: f64,
}

/// Time fraction with `min_i X_i ≤ η`, trapezoid-weighted.
pub fn occupation_fraction(path: &Path, eta: f64) -> Result<OccupationStats> {
    if path.is_empty() {
        return Err(Error::EmptyPath);
    }
    let inside = |i: usize| -> f64 {
        let near = match path.log_row(i) {
            Some(l) => l.iter().any(|v| *v <= math::ln(eta)),
            None => path.row(i).iter().any(|v| *v <= eta),
        };
        if near {
            1.0
        } else {
            0.0
        }
    };
    let horizon = path.times[path.len() - 1] - path.times[0];
    if path.len() == 1 || horizon <= 0.0 {
        return Ok(OccupationStats { eta, fraction: inside(0), horizon });
    }
    let mut prev = inside(0);
    let mut acc = 0.0;
    for i in 1..path.len() {
        let cur = inside(i);
        acc += 0.5 * (prev + cur) * (path.times[i] - path.times[i - 1]);
        prev = cur;
    }
    Ok(OccupationStats { eta, fraction: (acc / horizon).clamp(0.0, 1.0), horizon })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub patch: usize,
    pub slope: f64,
    pub stderr: f64,
}

impl SlopeEstimate {
    pub fn agrees_with(&self, other: &SlopeEstimate, k: f64) -> bool {
        math::abs(self.slope - other.slope) <= k * math::sqrt(self.stderr * self.stderr + other.stderr * other.stderr)
    }
}

/// Least-squares slope of `ln X_i` against `t` over rows with
/// `t ∈ [t_from, t_to]`; stderr from the slopes of 10 equal sub-windows.
pub fn extinction_slopes(path: &Path, t_from: f64, t_to: f64) -> Result<Vec<SlopeEstimate>> {
    if path.is_empty() {
        return Err(Error::EmptyPath);
    }
    let lo = path.times.partition_point(|t| *t < t_from);
    let hi = path.times.partition_point(|t| *t <= t_to);
    if hi < lo + 2 * SLOPE_BATCHES {
        return Err(Error::Precondition(format!(
            "fit window holds {} rows, need at least {}",
            hi.saturating_sub(lo),
            2 * SLOPE_BATCHES
        )));
    }
    let times = &path.times[lo..hi];
    let mut out = Vec::with_capacity(path.width);
    for patch in 0..path.width {
        let logs: Vec<f64> = path.log_column(patch)[lo..hi].to_vec();
        if let Some(k) = logs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalZero { patch, time: times[k] });
        }
        let slope = stats::ls_slope(times, &logs);
        let len = times.len();
        let batch: Vec<f64> = (0..SLOPE_BATCHES)
            .map(|b| {
                let (s, e) = (b * len / SLOPE_BATCHES, (b + 1) * len / SLOPE_BATCHES);
                stats::ls_slope(&times[s..e], &logs[s..e])
            })
            .collect();
        let stderr = math::sqrt(stats::variance(&batch) / SLOPE_BATCHES as f64);
        out.push(SlopeEstimate { patch, slope, stderr });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Persistent,
    Extinct,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub r_estimate: LyapunovEstimate,
    pub band: f64,
}

impl Verdict {
    pub fn from_estimate(r: LyapunovEstimate, band_floor: f64) -> Self {
        let band = (3.0 * r.stderr).max(band_floor);
        let label = if r.value > band {
            Label::Persistent
        } else if r.value < -band {
            Label::Extinct
        } else {
            Label::Inconclusive
        };
        Verdict { label, r_estimate: r, band }
    }
}

/// Sign of `r` outside `max(3·stderr, 1e-3)`.
pub fn classify(spec: &ModelSpec, cfg: &SimConfig) -> Result<Verdict> {
    classify_with(spec, cfg, DEFAULT_BAND_FLOOR)
}

/// As [`classify`] with a custom band floor. Two-patch models use the
/// closed form and fall back to the time average when the closed form does
/// not apply (for example a one-way dispersal matrix).
pub fn classify_with(spec: &ModelSpec, cfg: &SimConfig, band_floor: f64) -> Result<Verdict> {
    spec.check_dimensions()?;
    let r = if spec.n() == 2 {
        match lyapunov::r_closedform_2patch(spec) {
            Ok(r) => r,
            Err(Error::NonIntegrable(_)) | Err(Error::NoRoot) => {
                let mut r = lyapunov::r_timeavg(spec, cfg)?;
                r.diagnostics.push("closed form unavailable, used time average".into());
                r
            }
            Err(e) => return Err(e),
        }
    } else {
        lyapunov::r_timeavg(spec, cfg)?
    };
    Ok(Verdict::from_estimate(r, band_floor))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub checkpoints: Vec<f64>,
    /// W1 between the two ensembles' `S(t)`.
    pub distances: Vec<f64>,
    /// Sampling-noise level for two independent ensembles of this size:
    /// `3·W1(even half, odd half)/√2` of the first ensemble.
    pub null_thresholds: Vec<f64>,
    /// Kendall trend of `distances`; negative means shrinking.
    pub trend: f64,
    pub replicates: usize,
}

impl ConvergenceReport {
    /// `distance(first) / distance(last)`.
    pub fn contraction(&self) -> f64 {
        self.distances[0] / self.distances[self.distances.len() - 1]
    }
}

/// W1 distance between `S(t)` ensembles from `x0_a` and `x0_b`. Replicate
/// `i` runs both starts on seed `split_seed(cfg.seed, i)`, so the two
/// ensembles are paired by common random numbers.
pub fn convergence_distance<E: Executor>(
    spec: &ModelSpec,
    cfg: &SimConfig,
    x0_a: &[f64],
    x0_b: &[f64],
    checkpoints: &[f64],
    replicates: usize,
    exec: &E,
) -> Result<ConvergenceReport> {
    if checkpoints.is_empty() || replicates < 4 {
        return Err(Error::Precondition("need checkpoints and at least 4 replicates".into()));
    }
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) || checkpoints[0] <= 0.0 {
        return Err(Error::Precondition("checkpoints must be positive and increasing".into()));
    }
    let horizon = checkpoints[checkpoints.len() - 1];
    let mut run_cfg = cfg.clone();
    run_cfg.t_end = horizon;
    run_cfg.validate()?;
    let steps: Vec<u64> = checkpoints
        .iter()
        .map(|t| (math::round(t / cfg.dt) as u64).max(1))
        .collect();
    let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = exec.map(replicates, |i| {
        let seed = split_seed(cfg.seed, i as u64);
        let c = run_cfg.clone().with_seed(seed);
        Ok((sample_totals(spec, &c, x0_a, &steps)?, sample_totals(spec, &c, x0_b, &steps)?))
    });
    let mut a = vec![Vec::with_capacity(replicates); checkpoints.len()];
    let mut b = vec![Vec::with_capacity(replicates); checkpoints.len()];
    for r in results {
        let (sa, sb) = r?;
        for k in 0..checkpoints.len() {
            a[k].push(sa[k]);
            b[k].push(sb[k]);
        }
    }
    let distances: Vec<f64> = a.iter().zip(&b).map(|(x, y)| stats::wasserstein1(x, y)).collect();
    let null_thresholds = a
        .iter()
        .map(|x| {
            let even: Vec<f64> = x.iter().step_by(2).copied().collect();
            let odd: Vec<f64> = x.iter().skip(1).step_by(2).copied().collect();
            3.0 * stats::wasserstein1(&even, &odd) / core::f64::consts::SQRT_2
        })
        .collect();
    Ok(ConvergenceReport {
        checkpoints: checkpoints.to_vec(),
        trend: stats::trend(&distances),
        distances,
        null_thresholds,
        replicates,
    })
}

fn sample_totals(spec: &ModelSpec, cfg: &SimConfig, x0: &[f64], at: &[u64]) -> Result<Vec<f64>> {
    let mut stepper = XStepper::new(spec, cfg, x0)?;
    let k = stepper.drivers();
    let mut inc = Increments::new(cfg.seed, k, cfg.dt, cfg.noise_refinement);
    let mut dw = vec![0.0; k];
    let mut out = Vec::with_capacity(at.len());
    let mut next = 0;
    let last = at[at.len() - 1];
    for step in 1..=last {
        inc.next_into(&mut dw);
        stepper.step(&dw, step as f64 * cfg.dt)?;
        while next < at.len() && at[next] == step {
            out.push(stepper.x.iter().sum());
            next += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub times: Vec<f64>,
    /// `Z = X1/X2`.
    pub z: Vec<f64>,
    pub z_end_gap: f64,
    /// `X_i(t_end)/U(t_end)`.
    pub ratios_to_u: Vec<f64>,
    /// Slope of `ln|Z − 1|` over the rows where it is above rounding;
    /// `None` in exact-sync mode.
    pub log_gap_slope: Option<f64>,
    /// Path average of `αZ + β` over the same rows; the gap decays at least
    /// this fast.
    pub rate_bound: Option<f64>,
    pub exact_sync: bool,
    pub x_path: Path,
    pub u_path: Path,
}

/// `|Z − 1|` below this is treated as rounding.
const SYNC_FLOOR: f64 = 1e-12;

/// Synchronization diagnostics for a two-patch model driven by one noise
/// source with equal loadings. The comparison process
/// `dU = U(a1 − α + β − b U) dt + σU dW` shares every increment with the
/// abundance path and starts at `U(0) = X2(0)`.
pub fn sync_diagnostics(spec: &ModelSpec, cfg: &SimConfig, x0: &[f64]) -> Result<SyncReport> {
    let (alpha, beta) = spec.two_patch_rates()?;
    let gamma = spec.gamma()?;
    if gamma.cols() != 1 {
        return Err(Error::Precondition("sync needs a single noise driver".into()));
    }
    let kappa_b = match &spec.competition[0] {
        CompetitionSpec::Linear { kappa } => *kappa,
        _ => return Err(Error::Precondition("sync needs linear competition".into())),
    };
    if x0.len() != 2 || x0.iter().any(|v| *v <= 0.0) {
        return Err(Error::Precondition("sync needs both patches positive".into()));
    }
    let x_path = sde::simulate_x(spec, cfg, x0)?;
    let u_path = sde::simulate_logistic_1d(spec.a[0] - alpha + beta, kappa_b, gamma[(0, 0)], cfg, x0[1])?;
    let l1 = x_path.log_column(0);
    let l2 = x_path.log_column(1);
    let z: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| math::exp(a - b)).collect();
    let exact_sync = math::abs(z[0] - 1.0) <= 1e-14;
    let (mut ts, mut gaps, mut rate) = (Vec::new(), Vec::new(), 0.0);
    if !exact_sync {
        for (i, zi) in z.iter().enumerate() {
            let gap = math::abs(zi - 1.0);
            if gap <= SYNC_FLOOR {
                break;
            }
            ts.push(x_path.times[i]);
            gaps.push(math::ln(gap));
            rate += alpha * zi + beta;
        }
    }
    let fitted = ts.len() >= 3;
    let lu = u_path.log_column(0);
    let last = x_path.len() - 1;
    Ok(SyncReport {
        times: x_path.times.clone(),
        z_end_gap: math::abs(z[last] - 1.0),
        ratios_to_u: vec![math::exp(l1[last] - lu[last]), math::exp(l2[last] - lu[last])],
        log_gap_slope: fitted.then(|| stats::ls_slope(&ts, &gaps)),
        rate_bound: fitted.then(|| rate / ts.len() as f64),
        exact_sync,
        z,
        x_path,
        u_path,
    })
}

/// Batch-means average of column `col` over rows with `t ≥ t_from`
/// (equally spaced rows assumed).
pub fn time_average(path: &Path, col: usize, t_from: f64) -> Result<BatchSummary> {
    let lo = path.times.partition_point(|t| *t < t_from);
    let n = path.len().saturating_sub(lo);
    if n < AVERAGE_BATCHES {
        return Err(Error::Precondition("too few rows for batch means".into()));
    }
    let mut acc = BatchAccumulator::new(n as u64, AVERAGE_BATCHES);
    for i in lo..path.len() {
        acc.push(path.row(i)[col]);
    }
    Ok(acc.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersalLimitRow {
    pub delta: f64,
    pub dt: f64,
    pub proportions: Vec<f64>,
    pub proportion_stderr: Vec<f64>,
    pub eigenvector: Vec<f64>,
    /// `max_i |proportion_i − eigenvector_i|`.
    pub error: f64,
    pub r: LyapunovEstimate,
    /// `aᵀπ − ½πᵀΣπ` at the eigenvector `π`.
    pub r_aggregated: f64,
}

/// Normalized left null vector of a dispersal matrix by power iteration on
/// `exp(D h)`.
pub fn dominant_left_eigenvector(d: &Matrix) -> Result<Vec<f64>> {
    if !dispersal_irreducible(d) {
        return Err(Error::Reducible("dominant eigenvector is not unique".into()));
    }
    let n = d.rows();
    let scale = (0..n).map(|i| math::abs(d[(i, i)])).fold(0.0, f64::max).max(1e-300);
    let p = linalg::expm(&d.scaled(1.0 / scale)).transpose();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..100_000 {
        p.mul_vec_into(&pi, &mut next);
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= s);
        let change = pi.iter().zip(&next).map(|(a, b)| math::abs(a - b)).fold(0.0, f64::max);
        pi.copy_from_slice(&next);
        if change < 1e-15 {
            break;
        }
    }
    Ok(pi)
}

/// Time-averaged proportions and `r` under dispersal `δ·D` for each `δ`,
/// against the dominant left eigenvector of `D`. The step is reduced to
/// `min(dt, 0.02/(δ·max|D_ii|))` so the stiff dispersal stays resolved;
/// the horizon is `cfg.t_end` for every `δ`.
pub fn dispersal_limit_table<E: Executor>(spec: &ModelSpec, deltas: &[f64], cfg: &SimConfig, exec: &E) -> Result<Vec<DispersalLimitRow>> {
    spec.check_dimensions()?;
    if spec.competition.iter().any(|c| !matches!(c, CompetitionSpec::Linear { .. })) {
        return Err(Error::Precondition("dispersal limit needs linear competition".into()));
    }
    if deltas.windows(2).any(|w| w[1] <= w[0]) || deltas.iter().any(|d| *d <= 0.0) {
        return Err(Error::Precondition("deltas must be positive and increasing".into()));
    }
    let pi = dominant_left_eigenvector(&spec.dispersal)?;
    let sigma = effective_sigma(spec)?;
    let r_aggregated = sde::phi(&spec.a, &sigma, &pi);
    let max_rate = (0..spec.n()).map(|i| math::abs(spec.dispersal[(i, i)])).fold(0.0, f64::max);
    let rows = exec.map(deltas.len(), |k| -> Result<DispersalLimitRow> {
        let delta = deltas[k];
        let scaled = spec.with_dispersal_scale(delta);
        let mut c = cfg.clone();
        if max_rate > 0.0 {
            c.dt = c.dt.min(0.02 / (delta * max_rate));
        }
        let (proportions, proportion_stderr, r) = averaged_proportions(&scaled, &c)?;
        let error = proportions.iter().zip(&pi).map(|(p, e)| math::abs(p - e)).fold(0.0, f64::max);
        Ok(DispersalLimitRow {
            delta,
            dt: c.dt,
            proportions,
            proportion_stderr,
            eigenvector: pi.clone(),
            error,
            r,
            r_aggregated,
        })
    });
    rows.into_iter().collect()
}

fn averaged_proportions(spec: &ModelSpec, cfg: &SimConfig) -> Result<(Vec<f64>, Vec<f64>, LyapunovEstimate)> {
    let n = spec.n();
    let center = sde::simplex_center(n);
    let mut stepper = SimplexStepper::new(spec, cfg, &center)?;
    let k = stepper.drivers();
    let mut inc = Increments::new(cfg.seed, k, cfg.dt, cfg.noise_refinement);
    let steps = cfg.steps();
    let burn = cfg.burn_steps();
    let kept = steps - burn;
    let mut accs: Vec<BatchAccumulator> = (0..n).map(|_| BatchAccumulator::new(kept, AVERAGE_BATCHES)).collect();
    let mut phi = BatchAccumulator::new(kept, lyapunov::TIMEAVG_BATCHES);
    let mut dw = vec![0.0; k];
    for step in 0..steps {
        inc.next_into(&mut dw);
        if step >= burn {
            for (acc, y) in accs.iter_mut().zip(&stepper.y) {
                acc.push(*y);
            }
            phi.push(stepper.phi());
        }
        stepper.step(&dw);
    }
    let summaries: Vec<BatchSummary> = accs.iter().map(|a| a.finish()).collect();
    let phi = phi.finish();
    let r = LyapunovEstimate {
        value: phi.mean,
        stderr: phi.stderr,
        method: lyapunov::Method::TimeAverage,
        horizon: steps as f64 * cfg.dt,
        dt: cfg.dt,
        seed: cfg.seed,
        converged: phi.stationary,
        diagnostics: Vec::new(),
        batch_means: phi.batch_means,
    };
    Ok((
        summaries.iter().map(|s| s.mean).collect(),
        summaries.iter().map(|s| s.stderr).collect(),
        r,
    ))
}
