//! Euler–Maruyama integrators for the abundance, proportion/total, simplex
//! and scalar logistic coordinates.

use alloc::{format, vec, vec::Vec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;
use crate::model::{effective_sigma, ModelSpec};
use crate::rng::Increments;

/// At most this many rows are recorded unless a stride is given.
pub const MAX_ROWS: u64 = 1_000_000;
/// `ln(1e300)`: any patch beyond this is reported as an explosion.
const LN_EXPLOSION: f64 = 690.775_527_898_213_7;
const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Log coordinates for positive patches; positivity is exact.
    #[default]
    EulerLog,
    /// Natural coordinates, clamped at zero after each step.
    EulerClamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Fraction of the horizon discarded by estimators.
    pub burn_in: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Record every k-th step; `None` picks the smallest stride keeping at
    /// most [`MAX_ROWS`] rows.
    pub record_stride: Option<u64>,
    /// Each increment is built from `2^L` finer ones, see [`Increments`].
    pub noise_refinement: u32,
    /// Keep every Brownian increment on the returned path.
    pub trace_noise: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            t_end: 1e4,
            burn_in: 0.1,
            seed: 0,
            scheme: Scheme::EulerLog,
            record_stride: None,
            noise_refinement: 0,
            trace_noise: false,
        }
    }
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64, seed: u64) -> Self {
        SimConfig {
            dt,
            t_end,
            seed,
            ..Default::default()
        }
    }

    pub fn with_burn_in(mut self, burn_in: f64) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_stride(mut self, stride: u64) -> Self {
        self.record_stride = Some(stride);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_refinement(mut self, levels: u32) -> Self {
        self.noise_refinement = levels;
        self
    }

    /// Half the step size. When `noise_refinement ≥ 1` the refinement drops
    /// by one, so the halved run sees the same Brownian path as `self`.
    pub fn halved(&self) -> Self {
        let mut c = self.clone();
        c.dt *= 0.5;
        c.noise_refinement = c.noise_refinement.saturating_sub(1);
        if let Some(s) = c.record_stride.as_mut() {
            *s *= 2;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite() && self.t_end.is_finite() && self.dt <= self.t_end) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < dt <= t_end, got dt={} t_end={}",
                self.dt, self.t_end
            )));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::InvalidConfig(format!("burn_in {} not in [0,1)", self.burn_in)));
        }
        if self.record_stride == Some(0) {
            return Err(Error::InvalidConfig("record_stride must be positive".into()));
        }
        if self.noise_refinement > 20 {
            return Err(Error::InvalidConfig("noise_refinement above 20".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (math::round(self.t_end / self.dt) as u64).max(1)
    }

    pub fn stride(&self) -> u64 {
        self.record_stride
            .unwrap_or_else(|| self.steps().div_ceil(MAX_ROWS))
            .max(1)
    }

    pub fn burn_steps(&self) -> u64 {
        math::floor(self.burn_in * self.steps() as f64) as u64
    }

    fn increments(&self, k: usize) -> Increments {
        Increments::new(self.seed, k, self.dt, self.noise_refinement)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coords {
    /// Abundances `x1..xn`.
    X,
    /// Proportions and total `y1..yn, s`.
    YS,
    /// Boundary proportion process `y1..yn`.
    Simplex,
    /// Scalar `u`.
    Scalar,
}

/// A recorded trajectory. `states` is row-major with `width` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub coords: Coords,
    pub width: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    /// Natural log of each entry, kept exactly for log-scheme paths so that
    /// extinct patches keep their decay rate after `exp` underflows.
    pub log_states: Option<Vec<f64>>,
    pub seed: u64,
    /// Every Brownian increment, `noise_dim` per step, when requested.
    pub noise_trace: Option<Vec<f64>>,
    pub noise_dim: usize,
}

impl Path {
    /// Path from explicit rows, for synthetic inputs.
    pub fn from_rows(coords: Coords, times: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.len());
        if rows.len() != times.len() || rows.iter().any(|r| r.len() != width) {
            return Err(Error::DimensionMismatch("ragged path rows".into()));
        }
        Ok(Path {
            coords,
            width,
            times,
            states: rows.concat(),
            log_states: None,
            seed: 0,
            noise_trace: None,
            noise_dim: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.states[i * self.width..(i + 1) * self.width]
    }

    pub fn log_row(&self, i: usize) -> Option<&[f64]> {
        self.log_states
            .as_ref()
            .map(|l| &l[i * self.width..(i + 1) * self.width])
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.row(i)[j]).collect()
    }

    /// `ln` of column `j`, exact for log-scheme paths.
    pub fn log_column(&self, j: usize) -> Vec<f64> {
        match &self.log_states {
            Some(l) => (0..self.len()).map(|i| l[i * self.width + j]).collect(),
            None => self.column(j).into_iter().map(math::ln).collect(),
        }
    }

    pub fn last_row(&self) -> &[f64] {
        self.row(self.len() - 1)
    }

    /// Rows-per-step increments of the trace, if recorded.
    pub fn noise_step(&self, step: usize) -> Option<&[f64]> {
        self.noise_trace
            .as_ref()
            .map(|t| &t[step * self.noise_dim..(step + 1) * self.noise_dim])
    }
}

struct Recorder {
    stride: u64,
    steps: u64,
    width: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    logs: Option<Vec<f64>>,
    trace: Option<Vec<f64>>,
}

impl Recorder {
    fn new(cfg: &SimConfig, width: usize, logs: bool, k: usize) -> Self {
        let steps = cfg.steps();
        let stride = cfg.stride();
        let rows = (steps / stride + 2) as usize;
        Recorder {
            stride,
            steps,
            width,
            times: Vec::with_capacity(rows),
            states: Vec::with_capacity(rows * width),
            logs: logs.then(|| Vec::with_capacity(rows * width)),
            trace: cfg
                .trace_noise
                .then(|| Vec::with_capacity(steps as usize * k)),
        }
    }

    #[inline]
    fn wants(&self, k: u64) -> bool {
        k.is_multiple_of(self.stride) || k == self.steps
    }

    fn push(&mut self, t: f64, state: &[f64], logs: Option<&[f64]>) {
        self.times.push(t);
        self.states.extend_from_slice(state);
        if let (Some(dst), Some(src)) = (self.logs.as_mut(), logs) {
            dst.extend_from_slice(src);
        }
    }

    fn trace(&mut self, dw: &[f64]) {
        if let Some(t) = self.trace.as_mut() {
            t.extend_from_slice(dw);
        }
    }

    fn finish(self, coords: Coords, seed: u64, k: usize) -> Path {
        Path {
            coords,
            width: self.width,
            times: self.times,
            states: self.states,
            log_states: self.logs,
            seed,
            noise_trace: self.trace,
            noise_dim: k,
        }
    }
}

/// `dE = Γ dW` into `out`.
#[inline]
fn noise_into(gamma: &Matrix, dw: &[f64], out: &mut [f64]) {
    gamma.mul_vec_into(dw, out);
}

/// One step of the abundance system.
pub(crate) struct XStepper<'a> {
    spec: &'a ModelSpec,
    gamma: Matrix,
    half_var: Vec<f64>,
    scheme: Scheme,
    dt: f64,
    pub x: Vec<f64>,
    /// `ln x`, `-inf` for empty patches.
    pub lx: Vec<f64>,
    de: Vec<f64>,
    next: Vec<f64>,
}

impl<'a> XStepper<'a> {
    pub fn new(spec: &'a ModelSpec, cfg: &SimConfig, x0: &[f64]) -> Result<Self> {
        spec.check_dimensions()?;
        cfg.validate()?;
        let n = spec.n();
        if x0.len() != n {
            return Err(Error::DimensionMismatch(format!("x0 has {} entries, n={n}", x0.len())));
        }
        if x0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Precondition("x0 must be finite and non-negative".into()));
        }
        let gamma = spec.gamma()?;
        let sigma = gamma.gram_outer();
        Ok(XStepper {
            spec,
            half_var: (0..n).map(|i| 0.5 * sigma[(i, i)]).collect(),
            gamma,
            scheme: cfg.scheme,
            dt: cfg.dt,
            x: x0.to_vec(),
            lx: x0.iter().map(|&v| math::ln(v)).collect(),
            de: vec![0.0; n],
            next: vec![0.0; n],
        })
    }

    pub fn drivers(&self) -> usize {
        self.gamma.cols()
    }

    pub fn step(&mut self, dw: &[f64], t: f64) -> Result<()> {
        let n = self.spec.n();
        let d = &self.spec.dispersal;
        let dt = self.dt;
        noise_into(&self.gamma, dw, &mut self.de);
        match self.scheme {
            Scheme::EulerLog => {
                for i in 0..n {
                    let lxi = self.lx[i];
                    self.next[i] = if lxi > f64::NEG_INFINITY {
                        let mut inflow = 0.0;
                        for j in 0..n {
                            if j != i && self.lx[j] > f64::NEG_INFINITY {
                                inflow += d[(j, i)] * math::exp(self.lx[j] - lxi);
                            }
                        }
                        // constants first, so patches whose state and parameters
                        // agree round identically and stay synchronized
                        let rate = self.spec.a[i] + d[(i, i)] + inflow - self.half_var[i];
                        lxi + (rate - self.spec.competition[i].eval(self.x[i])) * dt + self.de[i]
                    } else {
                        // empty patch: only immigration acts, in natural units
                        let mut inflow = 0.0;
                        for j in 0..n {
                            if j != i {
                                inflow += d[(j, i)] * self.x[j];
                            }
                        }
                        if inflow > 0.0 {
                            math::ln(inflow * dt)
                        } else {
                            f64::NEG_INFINITY
                        }
                    };
                }
                for i in 0..n {
                    if self.next[i] > LN_EXPLOSION || self.next[i].is_nan() {
                        return Err(Error::Explosion { patch: i, time: t });
                    }
                    self.lx[i] = self.next[i];
                    self.x[i] = math::exp(self.next[i]);
                }
            }
            Scheme::EulerClamp => {
                for i in 0..n {
                    let mut drift = self.x[i] * (self.spec.a[i] - self.spec.competition[i].eval(self.x[i]));
                    for j in 0..n {
                        drift += d[(j, i)] * self.x[j];
                    }
                    self.next[i] = (self.x[i] + drift * dt + self.x[i] * self.de[i]).max(0.0);
                }
                for i in 0..n {
                    if self.next[i] > 1e300 || self.next[i].is_nan() {
                        return Err(Error::Explosion { patch: i, time: t });
                    }
                    self.x[i] = self.next[i];
                    self.lx[i] = math::ln(self.next[i]);
                }
            }
        }
        Ok(())
    }
}

/// Abundance trajectory from `x0`.
pub fn simulate_x(spec: &ModelSpec, cfg: &SimConfig, x0: &[f64]) -> Result<Path> {
    let mut stepper = XStepper::new(spec, cfg, x0)?;
    let k = stepper.drivers();
    let mut inc = cfg.increments(k);
    let mut rec = Recorder::new(cfg, spec.n(), true, k);
    let mut dw = vec![0.0; k];
    rec.push(0.0, &stepper.x, Some(&stepper.lx));
    for step in 1..=cfg.steps() {
        inc.next_into(&mut dw);
        rec.trace(&dw);
        let t = step as f64 * cfg.dt;
        stepper.step(&dw, t)?;
        if rec.wants(step) {
            rec.push(t, &stepper.x, Some(&stepper.lx));
        }
    }
    Ok(rec.finish(Coords::X, cfg.seed, k))
}

/// Proportions `Y = X/S` and total `S = Σ X_i` of an abundance path.
/// Rows with `S = 0` get uniform proportions.
pub fn to_ys(path: &Path) -> Result<Path> {
    if path.coords != Coords::X {
        return Err(Error::Precondition("to_ys needs an X path".into()));
    }
    let n = path.width;
    let mut states = Vec::with_capacity(path.len() * (n + 1));
    for i in 0..path.len() {
        let row = path.row(i);
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            states.extend(row.iter().map(|x| x / s));
        } else {
            states.extend(core::iter::repeat_n(1.0 / n as f64, n));
        }
        states.push(s);
    }
    Ok(Path {
        coords: Coords::YS,
        width: n + 1,
        times: path.times.clone(),
        states,
        log_states: None,
        seed: path.seed,
        noise_trace: path.noise_trace.clone(),
        noise_dim: path.noise_dim,
    })
}

/// `simulate_x` followed by [`to_ys`].
pub fn simulate_ys(spec: &ModelSpec, cfg: &SimConfig, x0: &[f64]) -> Result<Path> {
    to_ys(&simulate_x(spec, cfg, x0)?)
}

/// One step of the simplex process, plus the matching increment of the
/// linearized `ln S`.
pub(crate) struct SimplexStepper<'a> {
    spec: &'a ModelSpec,
    gamma: Matrix,
    sigma: Matrix,
    dt: f64,
    pub y: Vec<f64>,
    de: Vec<f64>,
    sy: Vec<f64>,
    next: Vec<f64>,
}

impl<'a> SimplexStepper<'a> {
    pub fn new(spec: &'a ModelSpec, cfg: &SimConfig, y0: &[f64]) -> Result<Self> {
        spec.check_dimensions()?;
        cfg.validate()?;
        check_simplex_point(y0, spec.n())?;
        let gamma = spec.gamma()?;
        let sigma = effective_sigma(spec)?;
        let n = spec.n();
        Ok(SimplexStepper {
            spec,
            gamma,
            sigma,
            dt: cfg.dt,
            y: y0.to_vec(),
            de: vec![0.0; n],
            sy: vec![0.0; n],
            next: vec![0.0; n],
        })
    }

    pub fn drivers(&self) -> usize {
        self.gamma.cols()
    }

    /// `aᵀy − ½ yᵀΣy` at the current point.
    pub fn phi(&self) -> f64 {
        phi(&self.spec.a, &self.sigma, &self.y)
    }

    /// Advances `y` and returns the `ln S` increment
    /// `(aᵀy − ½yᵀΣy) dt + yᵀ Γ dW`, both evaluated at the pre-step point.
    pub fn step(&mut self, dw: &[f64]) -> f64 {
        let n = self.spec.n();
        let y = &self.y;
        let dt = self.dt;
        noise_into(&self.gamma, dw, &mut self.de);
        self.sigma.mul_vec_into(y, &mut self.sy);
        let ay: f64 = self.spec.a.iter().zip(y).map(|(a, y)| a * y).sum();
        let ysy: f64 = self.sy.iter().zip(y).map(|(s, y)| s * y).sum();
        let yde: f64 = self.de.iter().zip(y).map(|(e, y)| e * y).sum();
        let dlog_s = (ay - 0.5 * ysy) * dt + yde;
        if n == 1 {
            return dlog_s;
        }
        let d = &self.spec.dispersal;
        let mut total = 0.0;
        for i in 0..n {
            let mut inflow = 0.0;
            for j in 0..n {
                inflow += d[(j, i)] * y[j];
            }
            let drift = y[i] * (self.spec.a[i] - ay - self.sy[i] + ysy) + inflow;
            let v = (y[i] + drift * dt + y[i] * (self.de[i] - yde)).max(0.0);
            self.next[i] = v;
            total += v;
        }
        if total > 0.0 && total.is_finite() {
            for i in 0..n {
                self.y[i] = self.next[i] / total;
            }
        }
        dlog_s
    }
}

/// `aᵀy − ½ yᵀΣy`.
pub fn phi(a: &[f64], sigma: &Matrix, y: &[f64]) -> f64 {
    let ay: f64 = a.iter().zip(y).map(|(a, y)| a * y).sum();
    ay - 0.5 * sigma.quad_form(y)
}

fn check_simplex_point(y: &[f64], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("y0 has {} entries, n={n}", y.len())));
    }
    let sum: f64 = y.iter().sum();
    if y.iter().any(|v| !(v.is_finite() && *v >= -SIMPLEX_TOL)) || math::abs(sum - 1.0) > SIMPLEX_TOL {
        return Err(Error::Precondition("y0 must lie on the simplex".into()));
    }
    Ok(())
}

/// Uniform point `(1/n, ..., 1/n)`.
pub fn simplex_center(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Boundary simplex process from `y0`: Euler step, clamp at 0, renormalize.
pub fn simulate_simplex(spec: &ModelSpec, cfg: &SimConfig, y0: &[f64]) -> Result<Path> {
    Ok(simulate_linearized_log_s(spec, cfg, y0)?.0)
}

/// Simplex path and `ln S` of the linearized system at the recorded times,
/// driven by the same increments; `ln S(0) = 0`.
pub fn simulate_linearized_log_s(
    spec: &ModelSpec,
    cfg: &SimConfig,
    y0: &[f64],
) -> Result<(Path, Vec<f64>)> {
    let mut stepper = SimplexStepper::new(spec, cfg, y0)?;
    let k = stepper.drivers();
    let mut inc = cfg.increments(k);
    let mut rec = Recorder::new(cfg, spec.n(), false, k);
    let mut dw = vec![0.0; k];
    let mut log_s = 0.0;
    let mut log_s_rows = Vec::with_capacity(rec.times.capacity());
    rec.push(0.0, &stepper.y, None);
    log_s_rows.push(0.0);
    for step in 1..=cfg.steps() {
        inc.next_into(&mut dw);
        rec.trace(&dw);
        log_s += stepper.step(&dw);
        if rec.wants(step) {
            rec.push(step as f64 * cfg.dt, &stepper.y, None);
            log_s_rows.push(log_s);
        }
    }
    Ok((rec.finish(Coords::Simplex, cfg.seed, k), log_s_rows))
}

/// `dU = U(κ − bU) dt + σU dW` in log coordinates. Shares its increments
/// with any single-driver [`simulate_x`] run on the same config.
pub fn simulate_logistic_1d(kappa: f64, b: f64, sigma: f64, cfg: &SimConfig, u0: f64) -> Result<Path> {
    cfg.validate()?;
    if !(u0.is_finite() && u0 >= 0.0) {
        return Err(Error::Precondition("u0 must be finite and non-negative".into()));
    }
    let mut inc = cfg.increments(1);
    let mut rec = Recorder::new(cfg, 1, true, 1);
    let mut dw = [0.0];
    let mut lu = math::ln(u0);
    let mut u = u0;
    let drift0 = kappa - 0.5 * sigma * sigma;
    rec.push(0.0, &[u], Some(&[lu]));
    for step in 1..=cfg.steps() {
        inc.next_into(&mut dw);
        rec.trace(&dw);
        let t = step as f64 * cfg.dt;
        if u > 0.0 {
            lu += (drift0 - b * u) * cfg.dt + sigma * dw[0];
            if lu > LN_EXPLOSION || lu.is_nan() {
                return Err(Error::Explosion { patch: 0, time: t });
            }
            u = math::exp(lu);
        }
        if rec.wants(step) {
            rec.push(t, &[u], Some(&[lu]));
        }
    }
    Ok(rec.finish(Coords::Scalar, cfg.seed, 1))
}
