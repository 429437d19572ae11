//! Stochastic growth rate `r` by time averaging along the simplex process,
//! by the log-slope of the linearized total, and for two patches by
//! quadrature against the reduced stationary density.

use alloc::{format, string::String, vec, vec::Vec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::model::{effective_sigma, ModelSpec};
use crate::reduce1d::{self, ScalarDiffusion, StationaryDensity1D};
use crate::rng::Increments;
use crate::sde::{self, SimConfig, SimplexStepper};
use crate::stats::{BatchAccumulator, BatchSummary};

pub const TIMEAVG_BATCHES: usize = 50;
pub const LOGSLOPE_BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TimeAverage,
    LogSlope,
    ClosedForm,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::TimeAverage => "timeavg",
            Method::LogSlope => "logslope",
            Method::ClosedForm => "closedform",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: Method,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub batch_means: Vec<f64>,
    pub converged: bool,
    pub diagnostics: Vec<String>,
}

impl LyapunovEstimate {
    fn closed(value: f64, stderr: f64, note: &str) -> Self {
        LyapunovEstimate {
            value,
            stderr,
            method: Method::ClosedForm,
            horizon: f64::INFINITY,
            dt: 0.0,
            seed: 0,
            batch_means: Vec::new(),
            converged: true,
            diagnostics: vec![note.into()],
        }
    }

    fn from_batches(value: f64, summary: BatchSummary, method: Method, cfg: &SimConfig) -> Self {
        let mut diagnostics = Vec::new();
        if !summary.stationary {
            diagnostics.push("not converged: batch halves differ by more than 5 stderr".into());
        }
        LyapunovEstimate {
            value,
            stderr: summary.stderr,
            method,
            horizon: cfg.steps() as f64 * cfg.dt,
            dt: cfg.dt,
            seed: cfg.seed,
            batch_means: summary.batch_means,
            converged: summary.stationary,
            diagnostics,
        }
    }

    pub fn batches(&self) -> usize {
        self.batch_means.len()
    }

    /// `|self − other| ≤ k·√(se1² + se2²)`.
    pub fn agrees_with(&self, other: &LyapunovEstimate, k: f64) -> bool {
        math::abs(self.value - other.value) <= k * math::sqrt(self.stderr * self.stderr + other.stderr * other.stderr)
    }
}

/// Both Monte Carlo estimates from one simplex run: the burned-in average
/// of `φ(Ỹ)` and the burned-in slope of the linearized `ln S`.
pub fn r_simplex_pair(spec: &ModelSpec, cfg: &SimConfig, y0: &[f64]) -> Result<(LyapunovEstimate, LyapunovEstimate)> {
    let mut stepper = SimplexStepper::new(spec, cfg, y0)?;
    let k = stepper.drivers();
    let mut inc = Increments::new(cfg.seed, k, cfg.dt, cfg.noise_refinement);
    let steps = cfg.steps();
    let burn = cfg.burn_steps();
    let kept = steps - burn;
    let mut phi_acc = BatchAccumulator::new(kept, TIMEAVG_BATCHES);
    let mut slope_acc = BatchAccumulator::new(kept, LOGSLOPE_BATCHES);
    let mut dw = vec![0.0; k];
    for step in 0..steps {
        inc.next_into(&mut dw);
        let keep = step >= burn;
        if keep {
            phi_acc.push(stepper.phi());
        }
        let dlog = stepper.step(&dw);
        if keep {
            slope_acc.push(dlog / cfg.dt);
        }
    }
    let tavg = phi_acc.finish();
    let slope = slope_acc.finish();
    let mut ta = LyapunovEstimate::from_batches(tavg.mean, tavg, Method::TimeAverage, cfg);
    let mut ls = LyapunovEstimate::from_batches(slope.mean, slope, Method::LogSlope, cfg);
    // φ cancels terms of size |a| + |Σ|, so it carries that much rounding
    // even when the proportions have settled on a fixed point
    let sigma = effective_sigma(spec)?;
    let scale = spec.a.iter().map(|v| math::abs(*v)).fold(0.0, f64::max) + sigma.max_abs();
    for e in [&mut ta, &mut ls] {
        e.stderr = e.stderr.max(4.0 * f64::EPSILON * scale);
    }
    Ok((ta, ls))
}

/// Time average of `aᵀy − ½yᵀΣy` along the simplex process started at the
/// center, with 50 batch means. For `n = 1` the simplex is a point and the
/// value is exact.
pub fn r_timeavg(spec: &ModelSpec, cfg: &SimConfig) -> Result<LyapunovEstimate> {
    spec.check_dimensions()?;
    cfg.validate()?;
    if spec.n() == 1 {
        let value = single_patch_r(spec)?;
        return Ok(LyapunovEstimate::from_batches(
            value,
            BatchSummary {
                mean: value,
                stderr: 0.0,
                batch_means: vec![value; TIMEAVG_BATCHES],
                stationary: true,
            },
            Method::TimeAverage,
            cfg,
        ));
    }
    Ok(r_simplex_pair(spec, cfg, &sde::simplex_center(spec.n()))?.0)
}

/// Burned-in slope of the linearized `ln S`, stderr from 20 window slopes.
pub fn r_logslope(spec: &ModelSpec, cfg: &SimConfig) -> Result<LyapunovEstimate> {
    spec.check_dimensions()?;
    cfg.validate()?;
    Ok(r_simplex_pair(spec, cfg, &sde::simplex_center(spec.n()))?.1)
}

/// Time averages from several starting points; `agree` when every pair is
/// within 3 combined stderr. A heuristic for uniqueness of the invariant
/// law under degenerate noise.
pub fn r_timeavg_multistart(spec: &ModelSpec, cfg: &SimConfig, starts: &[Vec<f64>]) -> Result<(Vec<LyapunovEstimate>, bool)> {
    let mut out = Vec::with_capacity(starts.len());
    for y0 in starts {
        out.push(r_simplex_pair(spec, cfg, y0)?.0);
    }
    let agree = out
        .iter()
        .enumerate()
        .all(|(i, a)| out[..i].iter().all(|b| a.agrees_with(b, 3.0)));
    Ok((out, agree))
}

fn single_patch_r(spec: &ModelSpec) -> Result<f64> {
    let sigma = effective_sigma(spec)?;
    Ok(spec.a[0] - 0.5 * sigma[(0, 0)])
}

/// Closed-form `r` for two patches.
///
/// * noisy reduction: `∫ φ p` with `p` the speed-measure density;
/// * `v ≡ 0`: `φ(y*)` with `y*` from [`reduce1d::ystar`], which on the
///   synchronized slice `2(β−α) = a2−a1` equals `a1 − α + β − σ²/2`.
pub fn r_closedform_2patch(spec: &ModelSpec) -> Result<LyapunovEstimate> {
    let diff = reduce1d::reduce_2patch(spec)?;
    if diff.is_deterministic() {
        let y = reduce1d::ystar(diff.a[0], diff.a[1], diff.alpha, diff.beta)?;
        let note = if is_synchronized_slice(spec, &diff) {
            "synchronized: r = a1 - alpha + beta - sigma^2/2"
        } else {
            "deterministic reduction: r = phi(ystar)"
        };
        return Ok(LyapunovEstimate::closed(diff.phi(y), 0.0, note));
    }
    let density = reduce1d::stationary_density(&diff, None, None)?;
    Ok(closed_from_density(&diff, &density))
}

fn closed_from_density(diff: &ScalarDiffusion, density: &StationaryDensity1D) -> LyapunovEstimate {
    let value = density.integrate(|y| diff.phi(y));
    let phi_max = math::abs(diff.phi(0.0)).max(math::abs(diff.phi(1.0))).max(math::abs(diff.a[1]) + math::abs(diff.c()));
    let stderr = (density.quad_error * math::abs(value) + density.tail_bound * phi_max)
        .max(f64::EPSILON * math::abs(value).max(1.0));
    LyapunovEstimate::closed(value, stderr, "speed-measure density quadrature")
}

/// `σ1 = σ2`, `b1 = b2`, `2(β − α) = a2 − a1`.
fn is_synchronized_slice(spec: &ModelSpec, diff: &ScalarDiffusion) -> bool {
    spec.competition[0] == spec.competition[1]
        && math::abs(diff.sigma[0] - diff.sigma[2]) <= 1e-12 * diff.sigma[0].max(1.0)
        && math::abs(2.0 * (diff.beta - diff.alpha) - (diff.a[1] - diff.a[0])) <= 1e-12
}

/// Formulas as printed for two patches, kept for comparison only.
pub mod printed {
    use super::*;

    /// Independent noise, first/second moments of the stationary density.
    pub fn lambda_evans(diff: &ScalarDiffusion, m1: f64, m2: f64) -> f64 {
        let (s1, s2) = (diff.sigma[0], diff.sigma[2]);
        diff.a[1] - 0.5 * s2 + (diff.c() + s2) * m1 - 0.5 * (s1 + s2) * m2
    }

    /// Single driver with loadings `σ1 ≠ σ2`.
    pub fn lambda_ours(diff: &ScalarDiffusion, sigma1: f64, sigma2: f64, m1: f64, m2: f64) -> f64 {
        let d = sigma1 - sigma2;
        diff.a[1] - 0.5 * sigma2 * sigma2 + (diff.c() + sigma2 * sigma2) * m1 - 0.5 * d * d * m2
    }

    /// Single driver with `σ1 = σ2 = σ`.
    pub fn lambda_2(a1: f64, a2: f64, sigma: f64, y_star: f64) -> f64 {
        a2 - 0.5 * sigma * sigma + (a1 - a2 + sigma * sigma) * y_star
    }

    /// `σ1 = σ2 = σ`, `α = β`.
    pub fn lambda_22(a1: f64, a2: f64, alpha: f64, sigma: f64) -> f64 {
        let c = a1 - a2;
        0.5 * (a1 + a2 - 2.0 * alpha + math::sqrt(c * c + 4.0 * alpha * alpha)) - 0.5 * sigma * sigma
    }

    /// Synchronized slice `2(β − α) = a2 − a1`.
    pub fn lambda_synchronized(a1: f64, alpha: f64, beta: f64, sigma: f64) -> f64 {
        a1 - alpha + beta - 0.5 * sigma * sigma
    }

    /// Large-α expansion for `σ1 = σ2`, `α = β`.
    pub fn lambda_large_alpha(a1: f64, a2: f64, alpha: f64, sigma: f64) -> f64 {
        0.5 * (a1 + a2) - 0.5 * sigma * sigma + (a1 - a2) * (a1 - a2) / (8.0 * alpha)
    }
}

/// Which of the quadrature value and the printed expansion does Monte
/// Carlo support?
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationReport {
    /// `∫ φ p` (or `φ(y*)` when `v ≡ 0`).
    pub quadrature: f64,
    /// The printed expansion with moments of the speed-measure density
    /// (or `y*`).
    pub printed: f64,
    /// The printed expansion with moments of the printed density, when a
    /// printed density exists for this case.
    pub printed_with_printed_density: Option<f64>,
    pub monte_carlo: LyapunovEstimate,
    pub quadrature_within_3se: bool,
    pub printed_within_3se: bool,
    pub finding: String,
}

/// Compares quadrature, the printed expansion and the time average on a
/// two-patch model driven by a single Brownian motion.
pub fn arbitrate(spec: &ModelSpec, cfg: &SimConfig) -> Result<ArbitrationReport> {
    let diff = reduce1d::reduce_2patch(spec)?;
    let gamma = spec.gamma()?;
    if gamma.cols() != 1 {
        return Err(Error::Precondition(format!(
            "arbitration needs a single noise driver, got {}",
            gamma.cols()
        )));
    }
    let (s1, s2) = (gamma[(0, 0)], gamma[(1, 0)]);
    let (quadrature, printed, printed_with_printed_density) = if diff.is_deterministic() {
        let y = reduce1d::ystar(diff.a[0], diff.a[1], diff.alpha, diff.beta)?;
        (diff.phi(y), printed::lambda_2(diff.a[0], diff.a[1], s1, y), None)
    } else {
        let density = reduce1d::stationary_density(&diff, None, None)?;
        let (m1, m2) = (reduce1d::density_moment(&density, 1), reduce1d::density_moment(&density, 2));
        let pd = reduce1d::PrintedDensity::degenerate(&diff, s1, s2);
        let pm = printed_moments(&density, &pd);
        (
            closed_from_density(&diff, &density).value,
            printed::lambda_ours(&diff, s1, s2, m1, m2),
            pm.map(|(p1, p2)| printed::lambda_ours(&diff, s1, s2, p1, p2)),
        )
    };
    let monte_carlo = r_timeavg(spec, cfg)?;
    let band = 3.0 * monte_carlo.stderr;
    let a_ok = math::abs(quadrature - monte_carlo.value) <= band;
    let b_ok = math::abs(printed - monte_carlo.value) <= band;
    let finding = match (a_ok, b_ok) {
        (true, false) => format!(
            "quadrature of phi ({quadrature:.6}) is within 3 stderr of Monte Carlo ({:.6} +- {:.6}); the printed expansion ({printed:.6}) is not",
            monte_carlo.value, monte_carlo.stderr
        ),
        (false, true) => format!(
            "the printed expansion ({printed:.6}) is within 3 stderr of Monte Carlo ({:.6} +- {:.6}); quadrature of phi ({quadrature:.6}) is not",
            monte_carlo.value, monte_carlo.stderr
        ),
        (true, true) => format!(
            "both quadrature ({quadrature:.6}) and the printed expansion ({printed:.6}) are within 3 stderr of Monte Carlo ({:.6} +- {:.6}); increase the horizon to separate them",
            monte_carlo.value, monte_carlo.stderr
        ),
        (false, false) => format!(
            "neither quadrature ({quadrature:.6}) nor the printed expansion ({printed:.6}) is within 3 stderr of Monte Carlo ({:.6} +- {:.6})",
            monte_carlo.value, monte_carlo.stderr
        ),
    };
    Ok(ArbitrationReport {
        quadrature,
        printed,
        printed_with_printed_density,
        monte_carlo,
        quadrature_within_3se: a_ok,
        printed_within_3se: b_ok,
        finding,
    })
}

/// First two moments of a printed density normalized on the solver's
/// truncated domain; `None` if it does not normalize there.
fn printed_moments(d: &StationaryDensity1D, p: &reduce1d::PrintedDensity) -> Option<(f64, f64)> {
    let mut entries = Vec::new();
    for k in 0..d.m() {
        for (x, w, _) in crate::quad::kronrod_nodes(d.grid[k], d.grid[k + 1]) {
            entries.push((x, w, p.ln_unnormalized(x)));
        }
    }
    let shift = entries.iter().map(|e| e.2).fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return None;
    }
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (x, w, l) in entries {
        let q = w * math::exp(l - shift);
        z += q;
        m1 += q * x;
        m2 += q * x * x;
    }
    Some((m1 / z, m2 / z))
}
