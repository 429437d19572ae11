//! Model parameterization: growth rates, competition, dispersal and noise.

use alloc::{format, string::String, vec, vec::Vec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::math;

/// Off-diagonal dispersal rates at or below this are structural zeros.
pub const EDGE_THRESHOLD: f64 = 1e-12;
/// Absolute tolerance on dispersal row sums.
pub const ROW_SUM_TOL: f64 = 1e-10;
/// Relative singular-value cutoff for the rank of Σ.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Per-patch intraspecific competition `b_i(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompetitionSpec {
    /// `b(x) = κ x`
    Linear { kappa: f64 },
    /// `b(x) = κ x^p`, `p ≥ 1`
    PowerLaw { kappa: f64, exponent: f64 },
    /// Piecewise-linear through `(x, b(x))` samples, extrapolated with the
    /// last segment's slope.
    Tabulated { points: Vec<(f64, f64)> },
}

impl CompetitionSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            CompetitionSpec::Linear { kappa } => kappa * x,
            CompetitionSpec::PowerLaw { kappa, exponent } => {
                if x <= 0.0 {
                    0.0
                } else {
                    kappa * math::powf(x, *exponent)
                }
            }
            CompetitionSpec::Tabulated { points } => tabulated_eval(points, x),
        }
    }

    /// `b ≡ 0`, the linearized system.
    pub fn zero() -> Self {
        CompetitionSpec::Linear { kappa: 0.0 }
    }
}

fn tabulated_eval(points: &[(f64, f64)], x: f64) -> f64 {
    match points.len() {
        0 => 0.0,
        1 => points[0].1,
        len => {
            // index of the segment containing x, clamped to the end segments
            let seg = match points.iter().position(|(px, _)| *px > x) {
                Some(0) => 0,
                Some(k) => k - 1,
                None => len - 2,
            };
            let (x0, y0) = points[seg];
            let (x1, y1) = points[seg + 1];
            if x1 == x0 {
                return y1;
            }
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    }
}

/// Environmental noise. `Gamma` is stored n×k: row i holds patch i's loading
/// on each of the k independent drivers, so `Σ = Γ Γᵀ` and `dE = Γ dW`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    ExplicitGamma { gamma: Matrix },
    SigmaCorrelation { sigma: Vec<f64>, correlation: Matrix },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Per-patch growth rates at zero density.
    pub a: Vec<f64>,
    pub competition: Vec<CompetitionSpec>,
    /// `D[i][j]`, i ≠ j, is the per-capita rate of moving from patch i to j.
    pub dispersal: Matrix,
    pub noise: NoiseSpec,
}

impl ModelSpec {
    #[inline]
    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// Single patch with `b(x) = κ x` and noise variance `sigma_sq`.
    pub fn single_patch(a: f64, sigma_sq: f64, kappa: f64) -> Self {
        ModelSpec {
            a: vec![a],
            competition: vec![CompetitionSpec::Linear { kappa }],
            dispersal: Matrix::zeros(1, 1),
            noise: NoiseSpec::ExplicitGamma {
                gamma: Matrix::column(&[math::sqrt(sigma_sq)]),
            },
        }
    }

    /// Two patches with `D = [[-α, α], [β, -β]]`, volatilities `σ1, σ2`,
    /// correlation `ρ` and linear competition `κ`.
    #[allow(clippy::too_many_arguments)]
    pub fn two_patch(
        a: [f64; 2],
        alpha: f64,
        beta: f64,
        sigma: [f64; 2],
        rho: f64,
        kappa: [f64; 2],
    ) -> Self {
        ModelSpec {
            a: a.to_vec(),
            competition: vec![
                CompetitionSpec::Linear { kappa: kappa[0] },
                CompetitionSpec::Linear { kappa: kappa[1] },
            ],
            dispersal: two_patch_dispersal(alpha, beta),
            noise: NoiseSpec::SigmaCorrelation {
                sigma: sigma.to_vec(),
                correlation: Matrix::from_rows(&[[1.0, rho], [rho, 1.0]]).unwrap(),
            },
        }
    }

    /// Two patches driven by one Brownian motion: `Γ = (σ1, σ2)ᵀ`.
    pub fn two_patch_single_driver(
        a: [f64; 2],
        alpha: f64,
        beta: f64,
        sigma: [f64; 2],
        kappa: [f64; 2],
    ) -> Self {
        ModelSpec {
            a: a.to_vec(),
            competition: vec![
                CompetitionSpec::Linear { kappa: kappa[0] },
                CompetitionSpec::Linear { kappa: kappa[1] },
            ],
            dispersal: two_patch_dispersal(alpha, beta),
            noise: NoiseSpec::ExplicitGamma {
                gamma: Matrix::column(&sigma),
            },
        }
    }

    /// Same model with all competition removed.
    pub fn linearized(&self) -> Self {
        let mut s = self.clone();
        s.competition = vec![CompetitionSpec::zero(); self.n()];
        s
    }

    /// Dimension check; every operation calls this first.
    pub fn check_dimensions(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::DimensionMismatch("n must be at least 1".into()));
        }
        if self.competition.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} competition entries for n={n}",
                self.competition.len()
            )));
        }
        if self.dispersal.rows() != n || self.dispersal.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "dispersal matrix is {}x{}, expected {n}x{n}",
                self.dispersal.rows(),
                self.dispersal.cols()
            )));
        }
        match &self.noise {
            NoiseSpec::ExplicitGamma { gamma } => {
                if gamma.rows() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "gamma has {} rows, expected {n}",
                        gamma.rows()
                    )));
                }
                if gamma.cols() > n {
                    return Err(Error::DimensionMismatch(format!(
                        "gamma has {} drivers, at most n={n} allowed",
                        gamma.cols()
                    )));
                }
            }
            NoiseSpec::SigmaCorrelation { sigma, correlation } => {
                if sigma.len() != n || correlation.rows() != n || correlation.cols() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "sigma/correlation dimensions do not match n={n}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The n×k noise factor.
    pub fn gamma(&self) -> Result<Matrix> {
        match &self.noise {
            NoiseSpec::ExplicitGamma { gamma } => Ok(gamma.clone()),
            NoiseSpec::SigmaCorrelation { sigma, correlation } => build_gamma(sigma, correlation),
        }
    }

    /// Dispersal rates for two patches: `(α, β) = (D_12, D_21)`.
    pub fn two_patch_rates(&self) -> Result<(f64, f64)> {
        if self.n() != 2 {
            return Err(Error::RequiresTwoPatches(self.n()));
        }
        Ok((self.dispersal[(0, 1)], self.dispersal[(1, 0)]))
    }

    /// Shift every growth rate by `c`.
    pub fn with_growth_shift(&self, c: f64) -> Self {
        let mut s = self.clone();
        for a in &mut s.a {
            *a += c;
        }
        s
    }

    /// Same model with dispersal scaled by `delta`.
    pub fn with_dispersal_scale(&self, delta: f64) -> Self {
        let mut s = self.clone();
        s.dispersal = s.dispersal.scaled(delta);
        s
    }

    /// Patches relabeled so that new patch `i` is old patch `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        let gamma = self.gamma()?;
        let mut d = Matrix::zeros(n, n);
        let mut g = Matrix::zeros(n, gamma.cols());
        for i in 0..n {
            for j in 0..n {
                d[(i, j)] = self.dispersal[(perm[i], perm[j])];
            }
            for c in 0..gamma.cols() {
                g[(i, c)] = gamma[(perm[i], c)];
            }
        }
        Ok(ModelSpec {
            a: perm.iter().map(|&p| self.a[p]).collect(),
            competition: perm.iter().map(|&p| self.competition[p].clone()).collect(),
            dispersal: d,
            noise: NoiseSpec::ExplicitGamma { gamma: g },
        })
    }
}

/// `[[-α, α], [β, -β]]`
pub fn two_patch_dispersal(alpha: f64, beta: f64) -> Matrix {
    Matrix::from_rows(&[[-alpha, alpha], [beta, -beta]]).unwrap()
}

/// `D` with every off-diagonal entry set to `rate` and zero row sums.
pub fn uniform_dispersal(n: usize, rate: f64) -> Matrix {
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[(i, j)] = rate;
            }
        }
        d[(i, i)] = -(rate * (n as f64 - 1.0));
    }
    d
}

/// Factor `Γ` (n×k) with `Γ Γᵀ = diag(σ) R diag(σ)`, k the numerical rank
/// of R. Rank-deficient R is handled by pivoting; zero columns are dropped.
pub fn build_gamma(sigma: &[f64], correlation: &Matrix) -> Result<Matrix> {
    let n = sigma.len();
    if correlation.rows() != n || correlation.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "correlation is {}x{}, expected {n}x{n}",
            correlation.rows(),
            correlation.cols()
        )));
    }
    check_correlation(correlation, 1e-8)?;
    let l = linalg::pivoted_cholesky(correlation, 1e-12);
    let mut gamma = l;
    for i in 0..n {
        for c in 0..gamma.cols() {
            gamma[(i, c)] *= sigma[i];
        }
    }
    Ok(gamma)
}

/// Unit diagonal, entries in [-1, 1], symmetric, smallest eigenvalue ≥ -tol.
fn check_correlation(r: &Matrix, eig_tol: f64) -> Result<()> {
    let n = r.rows();
    for i in 0..n {
        if math::abs(r[(i, i)] - 1.0) > 1e-12 {
            return Err(Error::NotCorrelation(format!(
                "diagonal entry {i} is {}",
                r[(i, i)]
            )));
        }
        for j in 0..n {
            let v = r[(i, j)];
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::NotCorrelation(format!("entry ({i},{j}) = {v}")));
            }
            if math::abs(v - r[(j, i)]) > 1e-12 {
                return Err(Error::NotCorrelation(format!("asymmetric at ({i},{j})")));
            }
        }
    }
    let min_eig = linalg::symmetric_eigenvalues(r)[0];
    if min_eig < -eig_tol {
        return Err(Error::NotCorrelation(format!(
            "smallest eigenvalue {min_eig:.3e}"
        )));
    }
    Ok(())
}

/// `Σ = Γ Γᵀ`.
pub fn effective_sigma(spec: &ModelSpec) -> Result<Matrix> {
    Ok(spec.gamma()?.gram_outer())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitionWitness {
    pub gamma_b: f64,
    pub m_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub irreducible: bool,
    pub sigma_rank: usize,
    pub degenerate: bool,
    /// Only true together with a witness.
    pub competition_ok: bool,
    pub competition_witness: Option<CompetitionWitness>,
    pub warnings: Vec<String>,
    /// Broken model invariants (row sums, signs, b(0) ≠ 0, invalid noise).
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the model invariants and the standing assumptions. Dimension
/// mismatches are hard errors; everything else lands in the report.
pub fn validate_spec(spec: &ModelSpec) -> Result<ValidationReport> {
    spec.check_dimensions()?;
    let n = spec.n();
    let d = &spec.dispersal;
    let mut warnings = Vec::new();
    let mut violations = Vec::new();

    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            let v = d[(i, j)];
            if !v.is_finite() {
                violations.push(format!("D[{i}][{j}] is not finite"));
            }
            if i != j && v < 0.0 {
                violations.push(format!("D[{i}][{j}] = {v} is a negative off-diagonal rate"));
            }
            row_sum += v;
        }
        if math::abs(row_sum) > ROW_SUM_TOL {
            violations.push(format!("row {i} of D sums to {row_sum:e}, expected 0"));
        }
    }
    let irreducible = dispersal_irreducible(d);
    if !irreducible {
        warnings.push("dispersal matrix is reducible".into());
    }

    let (sigma_rank, degenerate) = match noise_rank(spec) {
        Ok(rank) => (rank, rank < n),
        Err(e) => {
            violations.push(format!("{e}"));
            (0, true)
        }
    };
    if degenerate {
        warnings.push(format!("degenerate noise: rank(Σ) = {sigma_rank} < n = {n}"));
    }

    for (i, c) in spec.competition.iter().enumerate() {
        let b0 = c.eval(0.0);
        if b0 != 0.0 {
            violations.push(format!("competition {i}: b(0) = {b0}, expected 0"));
        }
        match c {
            CompetitionSpec::Linear { kappa } if *kappa <= 0.0 => {
                warnings.push(format!("competition {i}: κ = {kappa} is not positive"));
            }
            CompetitionSpec::PowerLaw { kappa, exponent } => {
                if *kappa <= 0.0 {
                    warnings.push(format!("competition {i}: κ = {kappa} is not positive"));
                }
                if *exponent < 1.0 {
                    violations.push(format!("competition {i}: exponent {exponent} < 1"));
                }
            }
            CompetitionSpec::Tabulated { points } => {
                if points.first().is_none_or(|p| *p != (0.0, 0.0)) {
                    violations.push(format!("competition {i}: table must start at (0, 0)"));
                }
                if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                    violations.push(format!("competition {i}: non-finite table entry"));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    violations.push(format!("competition {i}: table x values must increase"));
                }
            }
            _ => {}
        }
    }
    let witness = competition_witness(spec, &mut warnings);

    Ok(ValidationReport {
        irreducible,
        sigma_rank,
        degenerate,
        competition_ok: witness.is_some(),
        competition_witness: witness,
        warnings,
        violations,
    })
}

/// Strong connectivity of `{i → j : D_ij > 1e-12, i ≠ j}`.
pub fn dispersal_irreducible(d: &Matrix) -> bool {
    let n = d.rows();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| i != j && d[(i, j)] > EDGE_THRESHOLD).collect())
        .collect();
    linalg::strongly_connected(&adj)
}

fn noise_rank(spec: &ModelSpec) -> Result<usize> {
    let sigma = effective_sigma(spec)?;
    let min_eig = linalg::symmetric_eigenvalues(&sigma)[0];
    if min_eig < -1e-10 {
        return Err(Error::NotCorrelation(format!(
            "Σ has eigenvalue {min_eig:e}"
        )));
    }
    Ok(linalg::psd_rank(&sigma, RANK_REL_TOL))
}

/// Per-patch sufficient condition `b_i(x) - a_i ≥ γ_b` for `x ≥ M_b`.
fn competition_witness(spec: &ModelSpec, warnings: &mut Vec<String>) -> Option<CompetitionWitness> {
    let gamma_b = 1.0;
    let mut m_b: f64 = 1.0;
    let mut tabulated = false;
    for (c, &a) in spec.competition.iter().zip(&spec.a) {
        let m = match c {
            CompetitionSpec::Linear { kappa } => {
                if *kappa <= 0.0 {
                    return None;
                }
                (a + 1.0) / kappa
            }
            CompetitionSpec::PowerLaw { kappa, exponent } => {
                if *kappa <= 0.0 || *exponent < 1.0 {
                    return None;
                }
                if a + 1.0 <= 0.0 {
                    0.0
                } else {
                    math::powf((a + 1.0) / kappa, 1.0 / exponent)
                }
            }
            CompetitionSpec::Tabulated { points } => {
                tabulated = true;
                tabulated_threshold(points, a, gamma_b)?
            }
        };
        m_b = m_b.max(m);
    }
    if tabulated {
        warnings.push(
            "tabulated competition: only the per-patch sufficient condition was checked, \
             not the joint condition over all patches"
                .into(),
        );
    }
    Some(CompetitionWitness { gamma_b, m_b })
}

/// Smallest grid point beyond which `b(x) - a ≥ γ_b`, sampling up to ten
/// times a guess; requires a non-negative extrapolation slope so the bound
/// holds past the sampled range.
fn tabulated_threshold(points: &[(f64, f64)], a: f64, gamma_b: f64) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let (xl, yl) = points[points.len() - 1];
    let (xp, yp) = points[points.len() - 2];
    let slope = (yl - yp) / (xl - xp);
    if slope <= 0.0 && yl - a < gamma_b {
        return None;
    }
    let guess = if slope > 0.0 {
        xl.max(xl + (a + gamma_b - yl) / slope)
    } else {
        xl
    };
    let end = 10.0 * guess.max(1.0);
    let samples = 10_000;
    let mut threshold = None;
    for k in (0..=samples).rev() {
        let x = end * k as f64 / samples as f64;
        if tabulated_eval(points, x) - a >= gamma_b {
            threshold = Some(x);
        } else {
            break;
        }
    }
    let t = threshold?;
    if slope < 0.0 {
        return None;
    }
    Some(t.max(1e-12))
}
