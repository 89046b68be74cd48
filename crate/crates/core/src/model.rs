//! Model types, companion-matrix construction and stationarity criteria.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{RcarError, Result};
use crate::linalg::{self, Matrix};
use crate::poly;
use crate::rng::{self, Purpose, Stream};

/// Default margin inside the unit circle for "eigenvalues less than one".
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;

/// Default number of draws used to approximate expectations under gaussian coefficients.
pub const DEFAULT_GAUSSIAN_DRAWS: usize = 100_000;

/// Consecutive nonstationary draws tolerated before rejection sampling gives up.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 1_000_000;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// One realization `(A₁(ω), …, A_p(ω))`, or a mean vector `(α₁, …, α_p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CoefficientVector(Vec<f64>);

impl CoefficientVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(RcarError::InvalidInput("coefficient vector must have order p ≥ 1".into()));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(RcarError::NonFinite(format!("coefficient vector {alpha:?}")));
        }
        Ok(Self(alpha))
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for CoefficientVector {
    type Error = RcarError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CoefficientVector> for Vec<f64> {
    fn from(c: CoefficientVector) -> Self {
        c.0
    }
}

/// The `p × p` companion matrix: ones on the superdiagonal, the reversed
/// coefficient vector on the bottom row, zeros elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionMatrix(Matrix);

impl CompanionMatrix {
    pub fn from_coeffs(coeffs: &CoefficientVector) -> Self {
        let p = coeffs.order();
        let mut m = Matrix::zeros(p, p);
        for i in 0..p.saturating_sub(1) {
            m[(i, i + 1)] = 1.0;
        }
        for (j, a) in coeffs.as_slice().iter().rev().enumerate() {
            m[(p - 1, j)] = *a;
        }
        Self(m)
    }

    /// Accepts `m` only if it has exact companion structure.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(RcarError::DimensionMismatch("companion matrix must be square, p ≥ 1".into()));
        }
        let p = m.nrows();
        for i in 0..p - 1 {
            for j in 0..p {
                let want = if j == i + 1 { 1.0 } else { 0.0 };
                if m[(i, j)] != want {
                    return Err(RcarError::InvalidInput(format!(
                        "entry ({i}, {j}) = {} breaks companion structure",
                        m[(i, j)]
                    )));
                }
            }
        }
        let coeffs = CoefficientVector::new((0..p).map(|k| m[(p - 1, p - 1 - k)]).collect())?;
        Ok(Self::from_coeffs(&coeffs))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn coefficients(&self) -> CoefficientVector {
        let p = self.order();
        CoefficientVector((0..p).map(|k| self.0[(p - 1, p - 1 - k)]).collect())
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        linalg::spectral_radius(&self.0)
    }
}

pub fn companion_from_coeffs(coeffs: &CoefficientVector) -> CompanionMatrix {
    CompanionMatrix::from_coeffs(coeffs)
}

/// Roots of `z^p − α₁z^{p−1} − … − α_p`.
pub fn char_poly_roots(coeffs: &CoefficientVector) -> Result<Vec<Complex64>> {
    poly::char_poly_roots(coeffs.as_slice())
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    linalg::spectral_radius(m)
}

/// `true` iff the companion matrix of `coeffs` has spectral radius below `1 − tol`.
pub fn is_stationary_draw(coeffs: &CoefficientVector, tol: f64) -> Result<bool> {
    check_tol(tol)?;
    Ok(companion_from_coeffs(coeffs).spectral_radius()? < 1.0 - tol)
}

/// Same criterion as [`is_stationary_draw`] but decided from the polynomial roots.
pub fn is_stationary_by_roots(coeffs: &CoefficientVector, tol: f64) -> Result<bool> {
    check_tol(tol)?;
    let max_mod = char_poly_roots(coeffs)?.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    Ok(max_mod < 1.0 - tol)
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol <= 0.1) {
        return Err(RcarError::InvalidInput(format!("boundary tolerance {tol} outside (0, 0.1]")));
    }
    Ok(())
}

fn check_weights(weights: &[f64], what: &str) -> Result<()> {
    if weights.is_empty() {
        return Err(RcarError::InvalidInput(format!("{what}: no atoms")));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(RcarError::InvalidInput(format!("{what}: probabilities must be positive")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(RcarError::InvalidInput(format!(
            "{what}: probabilities sum to {total}, expected 1"
        )));
    }
    Ok(())
}

fn pick_atom(weights: &[f64], rng: &mut Stream) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Law of the coefficient vector across individuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientDistribution {
    Degenerate {
        alpha: CoefficientVector,
    },
    Discrete {
        atoms: Vec<CoefficientVector>,
        weights: Vec<f64>,
    },
    Gaussian {
        mean: CoefficientVector,
        covariance: Vec<Vec<f64>>,
    },
}

impl CoefficientDistribution {
    pub fn degenerate(alpha: Vec<f64>) -> Result<Self> {
        Ok(Self::Degenerate {
            alpha: CoefficientVector::new(alpha)?,
        })
    }

    pub fn discrete(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let dist = Self::Discrete {
            atoms: atoms
                .into_iter()
                .map(CoefficientVector::new)
                .collect::<Result<_>>()?,
            weights,
        };
        dist.validate()?;
        Ok(dist)
    }

    pub fn gaussian(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        let dist = Self::Gaussian {
            mean: CoefficientVector::new(mean)?,
            covariance,
        };
        dist.validate()?;
        Ok(dist)
    }

    pub fn order(&self) -> usize {
        match self {
            Self::Degenerate { alpha } => alpha.order(),
            Self::Discrete { atoms, .. } => atoms.first().map_or(0, |a| a.order()),
            Self::Gaussian { mean, .. } => mean.order(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Degenerate { .. } => Ok(()),
            Self::Discrete { atoms, weights } => {
                if atoms.len() != weights.len() {
                    return Err(RcarError::InvalidInput(format!(
                        "discrete distribution: {} atoms but {} weights",
                        atoms.len(),
                        weights.len()
                    )));
                }
                check_weights(weights, "discrete distribution")?;
                let p = atoms[0].order();
                if atoms.iter().any(|a| a.order() != p) {
                    return Err(RcarError::DimensionMismatch("atoms of differing order".into()));
                }
                Ok(())
            }
            Self::Gaussian { .. } => self.gaussian_factor().map(|_| ()),
        }
    }

    /// `(α₁, …, α_p)`, the mean coefficient vector.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            Self::Degenerate { alpha } => alpha.as_slice().to_vec(),
            Self::Discrete { atoms, weights } => {
                let mut m = vec![0.0; self.order()];
                for (a, w) in atoms.iter().zip(weights) {
                    for (mi, ai) in m.iter_mut().zip(a.as_slice()) {
                        *mi += w * ai;
                    }
                }
                m
            }
            Self::Gaussian { mean, .. } => mean.as_slice().to_vec(),
        }
    }

    /// Square-root factor `L` with `L Lᵀ = Σ`, from the symmetric eigendecomposition.
    fn gaussian_factor(&self) -> Result<Matrix> {
        let Self::Gaussian { mean, covariance } = self else {
            return Err(RcarError::InvalidInput("not a gaussian distribution".into()));
        };
        let p = mean.order();
        if covariance.len() != p || covariance.iter().any(|r| r.len() != p) {
            return Err(RcarError::DimensionMismatch(format!("gaussian covariance must be {p}×{p}")));
        }
        let cov = Matrix::from_fn(p, p, |i, j| covariance[i][j]);
        if cov.iter().any(|x| !x.is_finite()) {
            return Err(RcarError::NonFinite("gaussian covariance".into()));
        }
        let scale = 1.0 + linalg::max_abs(&cov);
        if linalg::max_abs(&(&cov - cov.transpose())) > 1e-12 * scale {
            return Err(RcarError::InvalidInput("gaussian covariance is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(linalg::symmetrize(&cov));
        if eig.eigenvalues.iter().any(|l| *l < -1e-10 * scale) {
            return Err(RcarError::InvalidInput(
                "gaussian covariance is not positive semi-definite".into(),
            ));
        }
        let sqrt_l = Matrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        Ok(&eig.eigenvectors * sqrt_l)
    }

    /// Prepared sampler; factorizes the gaussian covariance once.
    pub fn sampler(&self) -> Result<CoefficientSampler<'_>> {
        self.validate()?;
        let factor = match self {
            Self::Gaussian { .. } => Some(self.gaussian_factor()?),
            _ => None,
        };
        Ok(CoefficientSampler { dist: self, factor })
    }
}

/// Draws coefficient vectors from a [`CoefficientDistribution`].
#[derive(Debug, Clone)]
pub struct CoefficientSampler<'a> {
    dist: &'a CoefficientDistribution,
    factor: Option<Matrix>,
}

impl CoefficientSampler<'_> {
    pub fn draw(&self, rng: &mut Stream) -> CoefficientVector {
        match self.dist {
            CoefficientDistribution::Degenerate { alpha } => alpha.clone(),
            CoefficientDistribution::Discrete { atoms, weights } => atoms[pick_atom(weights, rng)].clone(),
            CoefficientDistribution::Gaussian { mean, .. } => {
                let factor = self.factor.as_ref().expect("gaussian sampler carries a factor");
                let p = mean.order();
                let z = linalg::Vector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                let shift = factor * z;
                CoefficientVector(mean.as_slice().iter().zip(shift.iter()).map(|(m, s)| m + s).collect())
            }
        }
    }

    /// Draws until a stationary vector appears; returns it with the number of rejections.
    pub fn draw_stationary(&self, rng: &mut Stream, tol: f64) -> Result<(CoefficientVector, usize)> {
        for rejected in 0..MAX_CONSECUTIVE_REJECTIONS {
            let c = self.draw(rng);
            if is_stationary_draw(&c, tol)? {
                return Ok((c, rejected));
            }
        }
        Err(RcarError::RejectionExhausted(MAX_CONSECUTIVE_REJECTIONS))
    }
}

/// Law of the innovation variance `σ²_ω` across individuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Constant { sigma2: f64 },
    Discrete { values: Vec<f64>, weights: Vec<f64> },
}

impl NoiseSpec {
    pub fn constant(sigma2: f64) -> Result<Self> {
        let n = Self::Constant { sigma2 };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { sigma2 } => {
                if !(sigma2.is_finite() && *sigma2 > 0.0) {
                    return Err(RcarError::InvalidInput(format!("noise variance {sigma2} must be > 0")));
                }
                Ok(())
            }
            Self::Discrete { values, weights } => {
                if values.len() != weights.len() {
                    return Err(RcarError::InvalidInput("noise variance atoms/weights length mismatch".into()));
                }
                check_weights(weights, "noise variance distribution")?;
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(RcarError::InvalidInput("noise variance atoms must be > 0".into()));
                }
                Ok(())
            }
        }
    }

    /// `E{σ²_ω}`.
    pub fn mean_variance(&self) -> f64 {
        match self {
            Self::Constant { sigma2 } => *sigma2,
            Self::Discrete { values, weights } => values.iter().zip(weights).map(|(v, w)| v * w).sum(),
        }
    }

    pub fn draw(&self, rng: &mut Stream) -> f64 {
        match self {
            Self::Constant { sigma2 } => *sigma2,
            Self::Discrete { values, weights } => values[pick_atom(weights, rng)],
        }
    }
}

/// `Ω = E{ε̲ₜε̲ₜ'}`: zero except entry `(p, p) = σ²`.
pub fn omega_matrix(p: usize, sigma2: f64) -> Matrix {
    let mut m = Matrix::zeros(p, p);
    m[(p - 1, p - 1)] = sigma2;
    m
}

/// Full generative description of an RCAR(p) panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(rename = "p")]
    pub order: usize,
    pub coefficients: CoefficientDistribution,
    pub noise: NoiseSpec,
    /// Number of individuals `N`.
    #[serde(rename = "n", default = "default_individuals")]
    pub individuals: usize,
    /// Last time index `T`; observations run over `t = 0..=T`.
    #[serde(rename = "t", default = "default_horizon")]
    pub horizon: usize,
}

fn default_individuals() -> usize {
    100
}

fn default_horizon() -> usize {
    20
}

impl ModelSpec {
    pub fn new(coefficients: CoefficientDistribution, noise: NoiseSpec, individuals: usize, horizon: usize) -> Result<Self> {
        let spec = Self {
            order: coefficients.order(),
            coefficients,
            noise,
            individuals,
            horizon,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(RcarError::InvalidInput("order p must be ≥ 1".into()));
        }
        self.coefficients.validate()?;
        if self.coefficients.order() != self.order {
            return Err(RcarError::DimensionMismatch(format!(
                "declared order {} but coefficient distribution has order {}",
                self.order,
                self.coefficients.order()
            )));
        }
        self.noise.validate()?;
        if self.individuals == 0 {
            return Err(RcarError::InvalidInput("N must be ≥ 1".into()));
        }
        if self.horizon < self.order {
            return Err(RcarError::InvalidInput(format!(
                "T = {} must be at least p = {}",
                self.horizon, self.order
            )));
        }
        Ok(())
    }

    /// `E{Ω_ω}`.
    pub fn mean_omega(&self) -> Matrix {
        omega_matrix(self.order, self.noise.mean_variance())
    }
}

/// How expectations over the coefficient law are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExpectationMode {
    /// Enumerate atoms; gaussian laws are refused.
    Exact,
    /// Gaussian laws are replaced by `draws` seeded stationary draws.
    Sampled { draws: usize, seed: u64 },
}

impl Default for ExpectationMode {
    fn default() -> Self {
        Self::Sampled {
            draws: DEFAULT_GAUSSIAN_DRAWS,
            seed: 0,
        }
    }
}

/// A finitely supported coefficient law: either the exact atoms of a
/// degenerate/discrete distribution or an equally weighted gaussian sample.
#[derive(Debug, Clone)]
pub struct AtomSet {
    pub atoms: Vec<CompanionMatrix>,
    pub weights: Vec<f64>,
    /// Set when the atoms are a Monte Carlo sample.
    pub approximate: bool,
    /// Nonstationary gaussian draws discarded while sampling.
    pub rejected: usize,
}

impl AtomSet {
    pub fn resolve(dist: &CoefficientDistribution, mode: ExpectationMode, tol: f64) -> Result<Self> {
        dist.validate()?;
        match dist {
            CoefficientDistribution::Degenerate { alpha } => Ok(Self {
                atoms: vec![companion_from_coeffs(alpha)],
                weights: vec![1.0],
                approximate: false,
                rejected: 0,
            }),
            CoefficientDistribution::Discrete { atoms, weights } => Ok(Self {
                atoms: atoms.iter().map(companion_from_coeffs).collect(),
                weights: weights.clone(),
                approximate: false,
                rejected: 0,
            }),
            CoefficientDistribution::Gaussian { .. } => {
                let ExpectationMode::Sampled { draws, seed } = mode else {
                    return Err(RcarError::RequiresSampling);
                };
                if draws == 0 {
                    return Err(RcarError::InvalidInput("sampling mode needs at least one draw".into()));
                }
                let sampler = dist.sampler()?;
                let mut rng = rng::stream(seed, 0, Purpose::Sampling);
                let mut atoms = Vec::with_capacity(draws);
                let mut rejected = 0;
                for _ in 0..draws {
                    let (c, r) = sampler.draw_stationary(&mut rng, tol)?;
                    rejected += r;
                    atoms.push(companion_from_coeffs(&c));
                }
                Ok(Self {
                    atoms,
                    weights: vec![1.0 / draws as f64; draws],
                    approximate: true,
                    rejected,
                })
            }
        }
    }

    pub fn order(&self) -> usize {
        self.atoms[0].order()
    }

    /// Probability-weighted sum of `f(atom)`.
    pub fn expect<F: Fn(&CompanionMatrix) -> Matrix>(&self, f: F) -> Matrix {
        let mut iter = self.atoms.iter().zip(&self.weights);
        let (a0, w0) = iter.next().expect("atom set is never empty");
        iter.fold(f(a0) * *w0, |acc, (a, w)| acc + f(a) * *w)
    }

    pub fn max_spectral_radius(&self) -> Result<f64> {
        self.atoms
            .iter()
            .try_fold(0.0_f64, |m, a| Ok(m.max(a.spectral_radius()?)))
    }
}

/// Outcome of the second-order stationarity check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondOrderVerdict {
    pub stationary: bool,
    /// Spectral radius of `E{A(ω) ⊗ A(ω)}`.
    pub mean_kron_radius: f64,
    /// Largest spectral radius over the atoms (or sampled draws).
    pub max_atom_radius: f64,
    pub approximate: bool,
    pub rejected_draws: usize,
}

/// Second-order stationarity of the coefficient law.
///
/// Requires `ρ(E{A ⊗ A}) < 1 − tol` and, since each individual keeps its draw
/// forever, every atom to be stationary as well.
pub fn is_second_order_stationary(
    dist: &CoefficientDistribution,
    tol: f64,
    mode: ExpectationMode,
) -> Result<SecondOrderVerdict> {
    check_tol(tol)?;
    let atoms = AtomSet::resolve(dist, mode, tol)?;
    let mean_kron = atoms.expect(|a| linalg::kron(a.matrix(), a.matrix()));
    if mean_kron.iter().any(|x| !x.is_finite()) {
        return Err(RcarError::NonFinite("E{A ⊗ A} estimate".into()));
    }
    let mean_kron_radius = linalg::spectral_radius(&mean_kron)?;
    let max_atom_radius = atoms.max_spectral_radius()?;
    Ok(SecondOrderVerdict {
        stationary: mean_kron_radius < 1.0 - tol && max_atom_radius < 1.0 - tol,
        mean_kron_radius,
        max_atom_radius,
        approximate: atoms.approximate,
        rejected_draws: atoms.rejected,
    })
}
