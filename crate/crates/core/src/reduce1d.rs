//! Two-patch reduction of the simplex process to a scalar diffusion on
//! (0, 1) and its stationary density via the speed measure.
//!
//! With `y = Ỹ_1`, `c = a1 − a2`, `g0 = c + σ22 − σ12` and
//! `s = σ11 − 2σ12 + σ22`:
//!
//! ```text
//! μ(y) = y(1−y)(g0 − s y) + β − (α+β) y
//! v(y) = s y² (1−y)²
//! p(y) ∝ v(y)⁻¹ exp(∫_{1/2}^y 2μ/v)
//! ```
//!
//! All density work is in log space. The density is stored on a uniform
//! grid together with its values at the Kronrod nodes of every cell, so
//! moments are plain weighted sums.

use alloc::{format, vec, vec::Vec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::model::{effective_sigma, ModelSpec};
use crate::quad;

/// Largest density grid; auto-doubling stops here.
const MAX_GRID: usize = 1 << 16;
/// Certified bound on the mass outside the truncated domain.
pub const TAIL_MASS: f64 = 1e-10;
/// Relative quadrature error that triggers grid doubling.
const GRID_REL_TOL: f64 = 1e-11;
pub const DEFAULT_GRID: usize = 4096;

/// `dy = μ(y) dt + √v(y) dW` on (0, 1) from a two-patch model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarDiffusion {
    pub a: [f64; 2],
    pub alpha: f64,
    pub beta: f64,
    /// `[σ11, σ12, σ22]`
    pub sigma: [f64; 3],
}

impl ScalarDiffusion {
    pub fn c(&self) -> f64 {
        self.a[0] - self.a[1]
    }

    pub fn g0(&self) -> f64 {
        self.c() + self.sigma[2] - self.sigma[1]
    }

    /// `σ11 − 2σ12 + σ22`, the variance of `dE_1 − dE_2` per unit time.
    pub fn s(&self) -> f64 {
        self.sigma[0] - 2.0 * self.sigma[1] + self.sigma[2]
    }

    /// `v ≡ 0` up to rounding.
    pub fn is_deterministic(&self) -> bool {
        self.s() <= 1e-12 * (self.sigma[0] + self.sigma[2]).max(f64::MIN_POSITIVE)
    }

    pub fn mu(&self, y: f64) -> f64 {
        y * (1.0 - y) * (self.g0() - self.s() * y) + self.beta - (self.alpha + self.beta) * y
    }

    pub fn v(&self, y: f64) -> f64 {
        let w = y * (1.0 - y);
        self.s() * w * w
    }

    /// Coefficients of μ in powers of y, constant term first.
    pub fn mu_coeffs(&self) -> [f64; 4] {
        let (g0, s) = (self.g0(), self.s());
        [self.beta, g0 - self.alpha - self.beta, -g0 - s, s]
    }

    /// Coefficients of v in powers of y.
    pub fn v_coeffs(&self) -> [f64; 5] {
        let s = self.s();
        [0.0, 0.0, s, -2.0 * s, s]
    }

    /// `φ(y) = a2 + c y − ½ (y, 1−y) Σ (y, 1−y)ᵀ`.
    pub fn phi(&self, y: f64) -> f64 {
        let z = 1.0 - y;
        let quad = self.sigma[0] * y * y + 2.0 * self.sigma[1] * y * z + self.sigma[2] * z * z;
        self.a[1] + self.c() * y - 0.5 * quad
    }

    fn ratio(&self, y: f64) -> f64 {
        2.0 * self.mu(y) / self.v(y)
    }

    fn ln_v(&self, y: f64) -> f64 {
        math::ln(self.s()) + 2.0 * math::ln(y * (1.0 - y))
    }

    /// Lipschitz constant on [0, 1] of `2μ − v'`, the numerator of
    /// `(ln p)'`.
    fn tail_slope_bound(&self) -> f64 {
        let m = self.mu_coeffs();
        let v = self.v_coeffs();
        // 2μ − v' = Σ q_k y^k
        let q = [
            2.0 * m[0] - v[1],
            2.0 * m[1] - 2.0 * v[2],
            2.0 * m[2] - 3.0 * v[3],
            2.0 * m[3] - 4.0 * v[4],
        ];
        q.iter().enumerate().skip(1).map(|(k, c)| k as f64 * math::abs(*c)).sum()
    }
}

/// Exact coefficient extraction; `v ≡ 0` is allowed here.
pub fn reduce_2patch(spec: &ModelSpec) -> Result<ScalarDiffusion> {
    spec.check_dimensions()?;
    let (alpha, beta) = spec.two_patch_rates()?;
    let sigma = effective_sigma(spec)?;
    Ok(ScalarDiffusion {
        a: [spec.a[0], spec.a[1]],
        alpha,
        beta,
        sigma: [sigma[(0, 0)], sigma[(0, 1)], sigma[(1, 1)]],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    TwoPatch(ScalarDiffusion),
    /// `du = u(κ − b u) dt + σ u dW` on (0, ∞).
    Logistic { kappa: f64, b: f64, sigma: f64 },
}

impl Generator {
    /// `2μ/v`
    fn ratio(&self, y: f64) -> f64 {
        match self {
            Generator::TwoPatch(d) => d.ratio(y),
            Generator::Logistic { kappa, b, sigma } => 2.0 * (kappa - b * y) / (sigma * sigma * y),
        }
    }

    fn ln_v(&self, y: f64) -> f64 {
        match self {
            Generator::TwoPatch(d) => d.ln_v(y),
            Generator::Logistic { sigma, .. } => 2.0 * math::ln(sigma * y),
        }
    }
}

/// Normalized stationary density on a truncated domain `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDensity1D {
    pub generator: Generator,
    pub lo: f64,
    pub hi: f64,
    /// Two-patch truncation: the domain is `[ε, 1−ε]`.
    pub eps: f64,
    pub grid: Vec<f64>,
    pub log_density: Vec<f64>,
    /// `ln` of the normalization constant relative to the anchor.
    pub log_norm: f64,
    /// Certified upper bound on the mass outside `[lo, hi]`.
    pub tail_bound: f64,
    /// Relative Kronrod–Gauss gap on the normalization.
    pub quad_error: f64,
    /// Normalized density at the Kronrod nodes of each cell.
    #[serde(skip)]
    node_density: Vec<[f64; 15]>,
}

impl StationaryDensity1D {
    pub fn m(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn density(&self) -> Vec<f64> {
        self.log_density.iter().map(|l| math::exp(*l)).collect()
    }

    /// `∫ f p` over the truncated domain.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let mut total = 0.0;
        for (k, cell) in self.node_density.iter().enumerate() {
            let nodes = quad::kronrod_nodes(self.grid[k], self.grid[k + 1]);
            for ((x, w, _), p) in nodes.iter().zip(cell) {
                total += w * p * f(*x);
            }
        }
        total
    }

    /// `ln p(y)`, `-inf` outside the truncated domain.
    pub fn log_density_at(&self, y: f64) -> f64 {
        if !(self.lo..=self.hi).contains(&y) {
            return f64::NEG_INFINITY;
        }
        let k = self.grid.partition_point(|g| *g <= y).saturating_sub(1).min(self.m() - 1);
        let y0 = self.grid[k];
        let g = self.generator;
        let inner = quad::gk15(&mut |s| g.ratio(s), y0, y).0;
        self.log_density[k] + inner - g.ln_v(y) + g.ln_v(y0)
    }

    pub fn mean(&self) -> f64 {
        density_moment(self, 1)
    }
}

/// `∫ y^k p(y) dy`.
pub fn density_moment(d: &StationaryDensity1D, k: u32) -> f64 {
    d.integrate(|y| y.powi(k as i32))
}

fn uniform_grid(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    let h = (hi - lo) / m as f64;
    (0..=m)
        .map(|k| if k == m { hi } else { lo + k as f64 * h })
        .collect()
}

fn geometric_grid(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    let (l0, l1) = (math::ln(lo), math::ln(hi));
    let h = (l1 - l0) / m as f64;
    (0..=m)
        .map(|k| match k {
            0 => lo,
            k if k == m => hi,
            k => math::exp(l0 + k as f64 * h),
        })
        .collect()
}

fn build(generator: Generator, grid: Vec<f64>, anchor: usize) -> StationaryDensity1D {
    let m = grid.len() - 1;
    let (lo, hi) = (grid[0], grid[m]);
    let ratio = |y: f64| generator.ratio(y);
    let mut cum = vec![0.0; m + 1];
    for k in anchor + 1..=m {
        cum[k] = cum[k - 1] + quad::integrate(ratio, grid[k - 1], grid[k], 0.0, 1e-14).value;
    }
    for k in (0..anchor).rev() {
        cum[k] = cum[k + 1] - quad::integrate(ratio, grid[k], grid[k + 1], 0.0, 1e-14).value;
    }
    let mut log_nodes = Vec::with_capacity(m);
    for k in 0..m {
        let nodes = quad::kronrod_nodes(grid[k], grid[k + 1]);
        let mut cell = [0.0; 15];
        for (c, (x, _, _)) in cell.iter_mut().zip(nodes.iter()) {
            let inner = quad::integrate(ratio, grid[k], *x, 1e-15, 1e-14).value;
            *c = cum[k] + inner - generator.ln_v(*x);
        }
        log_nodes.push(cell);
    }
    let log_grid: Vec<f64> = grid
        .iter()
        .zip(&cum)
        .map(|(y, c)| c - generator.ln_v(*y))
        .collect();
    let shift = log_nodes
        .iter()
        .flat_map(|c| c.iter())
        .chain(log_grid.iter())
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut zk, mut zg) = (0.0, 0.0);
    for (k, cell) in log_nodes.iter().enumerate() {
        let nodes = quad::kronrod_nodes(grid[k], grid[k + 1]);
        for ((_, wk, wg), l) in nodes.iter().zip(cell) {
            let p = math::exp(l - shift);
            zk += wk * p;
            zg += wg * p;
        }
    }
    let log_norm = shift + math::ln(zk);
    let node_density = log_nodes
        .iter()
        .map(|cell| {
            let mut out = [0.0; 15];
            for (o, l) in out.iter_mut().zip(cell) {
                *o = math::exp(l - log_norm);
            }
            out
        })
        .collect();
    StationaryDensity1D {
        generator,
        lo,
        hi,
        eps: 0.0,
        log_density: log_grid.iter().map(|l| l - log_norm).collect(),
        grid,
        log_norm,
        tail_bound: f64::INFINITY,
        quad_error: math::abs(zk - zg) / zk,
        node_density,
    }
}

/// Rebuilds with doubled grids until the Kronrod–Gauss gap is below
/// tolerance.
fn build_refined<G: Fn(usize) -> Vec<f64>>(generator: Generator, make_grid: G, m: usize, anchor_at: f64) -> StationaryDensity1D {
    let mut m = m.max(2);
    loop {
        let grid = make_grid(m);
        let anchor = grid.partition_point(|y| *y < anchor_at).min(m);
        let d = build(generator, grid, anchor);
        if d.quad_error <= GRID_REL_TOL || m >= MAX_GRID {
            return d;
        }
        m *= 2;
    }
}

/// Unnormalized `ln p` at `y` relative to the anchor `1/2`.
fn ln_p_from_anchor(d: &ScalarDiffusion, y: f64) -> f64 {
    let i = quad::integrate(|s| d.ratio(s), 0.5, y, 0.0, 1e-13).value;
    i - d.ln_v(y)
}

/// Speed-measure density of a noisy two-patch reduction.
///
/// `eps = None` picks the largest `ε = 0.25·2^-j` for which the density is
/// certified monotone on both tails and the truncated mass is below
/// [`TAIL_MASS`]. `m = None` means [`DEFAULT_GRID`] with automatic doubling.
pub fn stationary_density(diff: &ScalarDiffusion, eps: Option<f64>, m: Option<usize>) -> Result<StationaryDensity1D> {
    if diff.is_deterministic() {
        return Err(Error::DeterministicReduction);
    }
    if !(diff.alpha > 0.0 && diff.beta > 0.0) {
        return Err(Error::NonIntegrable(format!(
            "boundaries are not entrance boundaries for alpha={}, beta={}",
            diff.alpha, diff.beta
        )));
    }
    let m = m.unwrap_or(DEFAULT_GRID);
    let m = m + m % 2;
    let generator = Generator::TwoPatch(*diff);
    // mass on [1/4, 3/4] is a lower bound on the full normalization
    let core = build(generator, uniform_grid(0.25, 0.75, 256), 128);
    let slope = diff.tail_slope_bound();
    let tail = |e: f64| -> Option<f64> {
        // (ln p)' has the sign of 2μ − v', which is 2β at 0 and −2α at 1
        if 2.0 * diff.beta <= slope * e || 2.0 * diff.alpha <= slope * e {
            return None;
        }
        let lo = math::exp(ln_p_from_anchor(diff, e) - core.log_norm);
        let hi = math::exp(ln_p_from_anchor(diff, 1.0 - e) - core.log_norm);
        Some(e * (lo + hi))
    };
    let (eps, tail_bound) = match eps {
        Some(e) => {
            if !(e > 0.0 && e < 0.5) {
                return Err(Error::InvalidConfig(format!("eps {e} not in (0, 1/2)")));
            }
            (e, tail(e).unwrap_or(f64::INFINITY))
        }
        None => {
            let mut found = None;
            for j in 0..44 {
                let e = 0.25 * math::powf(2.0, -(j as f64));
                if let Some(t) = tail(e) {
                    if t < TAIL_MASS {
                        found = Some((e, t));
                        break;
                    }
                }
            }
            found.ok_or_else(|| {
                Error::NonIntegrable("truncated mass does not vanish under eps refinement".into())
            })?
        }
    };
    let mut d = build_refined(generator, |m| uniform_grid(eps, 1.0 - eps, m), m, 0.5);
    d.eps = eps;
    d.tail_bound = tail_bound;
    Ok(d)
}

/// Stationary density of `du = u(κ − b u) dt + σ u dW` by the same
/// speed-measure construction, truncated to `[lo, hi]` with certified
/// tails. Requires `2κ/σ² > 1` and `b > 0`.
pub fn logistic_stationary_density(kappa: f64, b: f64, sigma: f64, m: Option<usize>) -> Result<StationaryDensity1D> {
    let s2 = sigma * sigma;
    let shape = 2.0 * kappa / s2 - 1.0;
    if !(shape > 0.0 && b > 0.0) {
        return Err(Error::NonIntegrable(format!(
            "logistic density needs 2κ/σ² > 1 and b > 0 (κ={kappa}, b={b}, σ={sigma})"
        )));
    }
    let generator = Generator::Logistic { kappa, b, sigma };
    let mode = ((kappa - s2) / b).max(0.1 * kappa / b);
    let core = build(generator, uniform_grid(0.5 * mode, 2.0 * mode, 256), 128);
    let ln_p = |u: f64| {
        let anchor = 0.5 * mode + 128.0 * (1.5 * mode / 256.0);
        quad::integrate(|s| generator.ratio(s), anchor, u, 0.0, 1e-13).value - generator.ln_v(u) - core.log_norm
    };
    // lower tail: ln p(u) − ln p(ε) ≤ (shape − 1) ln(u/ε) + 2bε/σ²
    let mut lo = 0.5 * mode;
    let lower = loop {
        let t = math::exp(ln_p(lo) + 2.0 * b * lo / s2) * lo / shape;
        if t < 0.5 * TAIL_MASS || lo < 1e-300 {
            break t;
        }
        lo *= 0.5;
    };
    // upper tail: (ln p)' ≤ −λ beyond hi
    let mut hi = 2.0 * mode;
    let upper = loop {
        let slope_at = 2.0 * ((kappa - s2) / hi - b) / s2;
        let lambda = if kappa - s2 >= 0.0 { -slope_at } else { 2.0 * b / s2 };
        if lambda > 0.0 {
            let t = math::exp(ln_p(hi)) / lambda;
            if t < 0.5 * TAIL_MASS {
                break t;
            }
        }
        hi *= 2.0;
        if hi > 1e12 * mode {
            return Err(Error::NonIntegrable("logistic upper tail".into()));
        }
    };
    let anchor = mode;
    let mut d = build_refined(generator, |m| geometric_grid(lo, hi, m), m.unwrap_or(DEFAULT_GRID), anchor);
    d.tail_bound = lower + upper;
    Ok(d)
}

/// Equilibrium of `c y(1−y) + β − (α+β) y = 0` in [0, 1].
pub fn ystar(a1: f64, a2: f64, alpha: f64, beta: f64) -> Result<f64> {
    let c = a1 - a2;
    let f = |y: f64| c * y * (1.0 - y) + beta - (alpha + beta) * y;
    let df = |y: f64| c * (1.0 - 2.0 * y) - (alpha + beta);
    let root = if c == 0.0 {
        if alpha + beta <= 0.0 {
            return Err(Error::NoRoot);
        }
        beta / (alpha + beta)
    } else if alpha + beta == 0.0 {
        // f = c y(1−y): the stable end
        if c > 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        // c y² − (c − α − β) y − β = 0
        let (qa, qb, qc) = (c, -(c - alpha - beta), -beta);
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return Err(Error::NoRoot);
        }
        let q = -0.5 * (qb + libm::copysign(math::sqrt(disc), qb));
        let mut roots: Vec<f64> = vec![q / qa];
        if q != 0.0 {
            roots.push(qc / q);
        }
        let mut best = None;
        for r in roots {
            if (-1e-12..=1.0 + 1e-12).contains(&r) {
                best = match best {
                    Some(b) if df(b) < df(r) => Some(b),
                    _ => Some(r),
                };
            }
        }
        let mut y = best.ok_or(Error::NoRoot)?.clamp(0.0, 1.0);
        for _ in 0..3 {
            let d = df(y);
            if d == 0.0 {
                break;
            }
            let next = y - f(y) / d;
            if !(0.0..=1.0).contains(&next) {
                break;
            }
            y = next;
        }
        y
    };
    Ok(root)
}

/// Closed-form density of the form
/// `x^{e0} (1−x)^{e1} exp(−(2/scale)(β/x + α/(1−x)))`, as printed for the
/// two-patch model. Kept only for cross-checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrintedDensity {
    pub exponent_0: f64,
    pub exponent_1: f64,
    pub scale: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl PrintedDensity {
    /// Independent noise: `scale = σ1² + σ2²`,
    /// exponents `β̂ − 2σ1²/scale` and `−β̂ − 2σ2²/scale`.
    pub fn non_degenerate(d: &ScalarDiffusion) -> Self {
        let (s1, s2) = (d.sigma[0], d.sigma[2]);
        let scale = s1 + s2;
        let beta_hat = 2.0 / scale * (d.c() + d.beta - d.alpha);
        PrintedDensity {
            exponent_0: beta_hat - 2.0 * s1 / scale,
            exponent_1: -beta_hat - 2.0 * s2 / scale,
            scale,
            alpha: d.alpha,
            beta: d.beta,
        }
    }

    /// Single driver with loadings `σ1 ≠ σ2`: `scale = (σ1 − σ2)²`,
    /// `α̂1 = −2σ1/(σ1−σ2)`, `α̂2 = 2σ2/(σ1−σ2)`, exponents
    /// `β̂ − α̂1` and `−β̂ − α̂2`.
    pub fn degenerate(d: &ScalarDiffusion, sigma1: f64, sigma2: f64) -> Self {
        let scale = (sigma1 - sigma2) * (sigma1 - sigma2);
        let beta_hat = 2.0 / scale * (d.c() + d.beta - d.alpha);
        let alpha_hat_1 = -2.0 * sigma1 / (sigma1 - sigma2);
        let alpha_hat_2 = 2.0 * sigma2 / (sigma1 - sigma2);
        PrintedDensity {
            exponent_0: beta_hat - alpha_hat_1,
            exponent_1: -beta_hat - alpha_hat_2,
            scale,
            alpha: d.alpha,
            beta: d.beta,
        }
    }

    /// The exponents that solve the stationary equation for a single
    /// driver, `β̂ − 2σ1/(σ1−σ2)` and `−β̂ + 2σ2/(σ1−σ2)`.
    pub fn degenerate_derived(d: &ScalarDiffusion, sigma1: f64, sigma2: f64) -> Self {
        let mut p = Self::degenerate(d, sigma1, sigma2);
        let beta_hat = 2.0 / p.scale * (d.c() + d.beta - d.alpha);
        p.exponent_0 = beta_hat - 2.0 * sigma1 / (sigma1 - sigma2);
        p.exponent_1 = -beta_hat + 2.0 * sigma2 / (sigma1 - sigma2);
        p
    }

    pub fn ln_unnormalized(&self, x: f64) -> f64 {
        self.exponent_0 * math::ln(x) + self.exponent_1 * math::ln(1.0 - x)
            - 2.0 / self.scale * (self.beta / x + self.alpha / (1.0 - x))
    }
}

/// Sup-norm comparison of a printed density against the speed-measure
/// density, both normalized on the same truncated domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityGap {
    /// `max |p_printed / p − 1|` over the grid.
    pub sup_relative: f64,
    /// `max |p_printed − p| / max p`.
    pub sup_absolute_scaled: f64,
    pub printed_mean: f64,
    pub solver_mean: f64,
}

pub fn printed_gap(d: &StationaryDensity1D, printed: &PrintedDensity) -> DensityGap {
    // normalize the printed form with the same node rule
    let mut ln_nodes = Vec::with_capacity(d.m() * 15);
    for k in 0..d.m() {
        for (x, w, _) in quad::kronrod_nodes(d.grid[k], d.grid[k + 1]) {
            ln_nodes.push((printed.ln_unnormalized(x), w, x));
        }
    }
    let shift = ln_nodes.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = ln_nodes.iter().map(|(l, w, _)| w * math::exp(l - shift)).sum();
    let ln_z = shift + math::ln(z);
    let printed_mean = ln_nodes.iter().map(|(l, w, x)| w * x * math::exp(l - ln_z)).sum();
    let peak = d.log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sup_relative: f64 = 0.0;
    let mut sup_abs: f64 = 0.0;
    for (y, l) in d.grid.iter().zip(&d.log_density) {
        let lp = printed.ln_unnormalized(*y) - ln_z;
        let rel = if l.is_finite() && lp.is_finite() {
            math::abs(math::expm1(lp - l))
        } else if lp == *l {
            0.0
        } else {
            f64::INFINITY
        };
        sup_relative = sup_relative.max(rel);
        sup_abs = sup_abs.max(math::abs(math::exp(lp - peak) - math::exp(l - peak)));
    }
    DensityGap {
        sup_relative,
        sup_absolute_scaled: sup_abs,
        printed_mean,
        solver_mean: d.mean(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::NoiseSpec;

    fn diag_spec(a: [f64; 2], alpha: f64, beta: f64, s1: f64, s2: f64) -> ModelSpec {
        ModelSpec::two_patch(a, alpha, beta, [s1, s2], 0.0, [1.0, 1.0])
    }

    /// Antiderivative of 2μ/v by partial fractions.
    fn ln_p_exact(d: &ScalarDiffusion, y: f64) -> f64 {
        let (g0, s, al, be) = (d.g0(), d.s(), d.alpha, d.beta);
        let f = |y: f64| {
            2.0 / s
                * (g0 * y.ln() - (g0 - s) * (1.0 - y).ln() + be * (-1.0 / y + y.ln() - (1.0 - y).ln())
                    - al * (y.ln() - (1.0 - y).ln() + 1.0 / (1.0 - y)))
        };
        f(y) - f(0.5) - d.ln_v(y)
    }

    #[test]
    fn diagonal_coefficients() {
        let (s1, s2) = (0.7f64, 1.3f64);
        let d = reduce_2patch(&diag_spec([3.0, 4.0], 1.0, 2.0, s1, s2)).unwrap();
        for k in 1..20 {
            let y = k as f64 / 20.0;
            let mu = -y * (1.0 - y) + 2.0 - 3.0 * y + y * (1.0 - y) * (s2 * s2 * (1.0 - y) - s1 * s1 * y);
            assert!((d.mu(y) - mu).abs() < 1e-13);
            let v = (y * (1.0 - y)).powi(2) * (s1 * s1 + s2 * s2);
            assert!((d.v(y) - v).abs() < 1e-13);
        }
    }

    #[test]
    fn perfectly_correlated_equal_sigma_is_deterministic() {
        let spec = ModelSpec::two_patch([3.0, 4.0], 1.0, 1.0, [7f64.sqrt(); 2], 1.0, [1.0, 1.0]);
        let d = reduce_2patch(&spec).unwrap();
        assert!(d.is_deterministic());
        for k in 0..=10 {
            let y = k as f64 / 10.0;
            assert_eq!(d.v(y), 0.0);
            assert!((d.mu(y) - (-(y * (1.0 - y)) + 1.0 - 2.0 * y)).abs() < 1e-13);
        }
        assert_eq!(stationary_density(&d, None, None).unwrap_err(), Error::DeterministicReduction);
    }

    #[test]
    fn symmetric_point() {
        let sigma = 1.5;
        let d = reduce_2patch(&diag_spec([2.0, 2.0], 1.0, 1.0, sigma, sigma)).unwrap();
        assert!(d.mu(0.5).abs() < 1e-15);
        assert!((d.v(0.5) - sigma * sigma / 8.0).abs() < 1e-15);
    }

    #[test]
    fn requires_two_patches() {
        let spec = ModelSpec::single_patch(1.0, 1.0, 1.0);
        assert_eq!(reduce_2patch(&spec).unwrap_err(), Error::RequiresTwoPatches(1));
    }

    #[test]
    fn density_matches_partial_fraction_antiderivative() {
        let d = reduce_2patch(&diag_spec([3.0, 4.0], 1.0, 1.0, 7f64.sqrt(), 7f64.sqrt())).unwrap();
        let p = stationary_density(&d, None, Some(512)).unwrap();
        let k = p.m() / 2;
        let offset = p.log_density[k] - ln_p_exact(&d, p.grid[k]);
        for (y, l) in p.grid.iter().zip(&p.log_density) {
            assert!((l - ln_p_exact(&d, *y) - offset).abs() < 1e-10, "{y}");
        }
        assert!(p.tail_bound < TAIL_MASS);
        assert!((density_moment(&p, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_mean_is_half() {
        let d = reduce_2patch(&diag_spec([1.0, 1.0], 2.0, 2.0, 1.0, 1.0)).unwrap();
        let p = stationary_density(&d, None, None).unwrap();
        assert!((p.mean() - 0.5).abs() < 1e-12);
        let n = p.grid.len();
        for i in 0..n / 2 {
            assert!((p.log_density[i] - p.log_density[n - 1 - i]).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_and_eps_refinement_invariance() {
        let d = reduce_2patch(&diag_spec([3.0, 4.0], 1.0, 1.5, 1.0, 2.0)).unwrap();
        let base = stationary_density(&d, None, None).unwrap();
        let finer = stationary_density(&d, Some(base.eps / 2.0), Some(2 * base.m())).unwrap();
        assert!((base.mean() - finer.mean()).abs() < 1e-8);
        assert!((density_moment(&base, 2) - density_moment(&finer, 2)).abs() < 1e-8);
    }

    #[test]
    fn printed_non_degenerate_form_agrees() {
        let d = reduce_2patch(&diag_spec([3.0, 4.0], 1.0, 1.0, 7f64.sqrt(), 7f64.sqrt())).unwrap();
        let p = stationary_density(&d, None, None).unwrap();
        let gap = printed_gap(&p, &PrintedDensity::non_degenerate(&d));
        assert!(gap.sup_relative < 1e-6, "{gap:?}");
    }

    #[test]
    fn single_driver_derived_exponents_agree_printed_do_not() {
        let spec = ModelSpec {
            noise: NoiseSpec::ExplicitGamma { gamma: Matrix::column(&[1.0, 2.0]) },
            ..diag_spec([3.0, 4.0], 1.0, 1.0, 1.0, 2.0)
        };
        let d = reduce_2patch(&spec).unwrap();
        assert!((d.s() - 1.0).abs() < 1e-15);
        let p = stationary_density(&d, None, None).unwrap();
        let derived = printed_gap(&p, &PrintedDensity::degenerate_derived(&d, 1.0, 2.0));
        assert!(derived.sup_relative < 1e-6, "{derived:?}");
        let printed = printed_gap(&p, &PrintedDensity::degenerate(&d, 1.0, 2.0));
        assert!(printed.sup_relative > 0.1, "{printed:?}");
    }

    #[test]
    fn logistic_mean_matches_gamma_law() {
        // stationary law is Gamma(2κ/σ² − 1, rate 2b/σ²)
        for &(kappa, b, sigma) in &[(1.5, 1.0, 1.0), (2.0, 0.5, 0.7), (0.6, 2.0, 1.0)] {
            let p = logistic_stationary_density(kappa, b, sigma, None).unwrap();
            let mean = (kappa - 0.5 * sigma * sigma) / b;
            assert!((p.mean() - mean).abs() < 1e-7 * mean, "{kappa} {b} {sigma}: {}", p.mean());
            assert!(p.tail_bound < TAIL_MASS);
        }
        assert!(logistic_stationary_density(0.4, 1.0, 1.0, None).is_err());
    }

    #[test]
    fn ystar_cases() {
        assert_eq!(ystar(2.0, 2.0, 1.0, 1.0).unwrap(), 0.5);
        let y = ystar(3.0, 4.0, 1.0, 1.0).unwrap();
        assert!((y - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-15);
        assert_eq!(ystar(1.0, 2.0, 0.5, 1.0).unwrap(), 0.5);
        assert_eq!(ystar(1.0, 2.0, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(ystar(1.0, 1.0, 0.0, 0.0).unwrap_err(), Error::NoRoot);
    }

    proptest::proptest! {
        #[test]
        fn ystar_residual(
            a1 in -5.0f64..5.0, a2 in -5.0f64..5.0,
            alpha in 0.01f64..20.0, beta in 0.01f64..20.0,
        ) {
            let y = ystar(a1, a2, alpha, beta).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&y));
            let res = (a1 - a2) * (1.0 - y) * y + beta - (alpha + beta) * y;
            proptest::prop_assert!(res.abs() < 1e-12, "{res}");
        }
    }
}
