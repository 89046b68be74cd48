//! Exact second-moment machinery.
//!
//! For one coefficient draw `A` with innovation covariance `Ω` the lag-0 state
//! covariance solves `Γ(0) = AΓ(0)A' + Ω`, i.e.
//! `vec Γ(0) = (I − A⊗A)⁻¹ vec Ω = Σ_k (A⊗A)^k vec Ω`, and `Γ(u) = A^u Γ(0)`.
//! Averaging over the coefficient law gives the unconditional covariances
//!
//! ```text
//! vec Υ(u) = Σ_v E{A^v ⊗ A^{v+u}} vec Ω̄ = Σ_v μ(v, u) vec Ω̄
//! ```
//!
//! and the spectral density `S(λ) = (1/2π) Σ_u Υ(u) e^{−iλu}`.
//!
//! Conventions: `vec` is column-stacking, so `vec(A M B') = (B ⊗ A) vec M`.
//! Series are truncated once `p` consecutive terms fall below `tol` in
//! max-abs norm; the reported tail is the geometric estimate
//! `‖term_K‖ · r / (1 − r)` with `r` the measured per-step decay ratio.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{RcarError, Result};
use crate::linalg::{self, Matrix};
use crate::model::{AtomSet, CoefficientDistribution, CompanionMatrix, ExpectationMode, DEFAULT_BOUNDARY_TOL};

/// Reciprocal condition below which `I − A⊗A` is treated as singular.
pub const MIN_RCOND: f64 = 1e-12;

/// Truncation controls for infinite series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesOptions {
    /// Stop once terms drop below this max-abs size.
    pub tol: f64,
    /// Give up after this many terms.
    pub max_terms: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_terms: 100_000,
        }
    }
}

/// A truncated series together with where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSum {
    pub value: Matrix,
    /// Index `K` of the first term of the final sub-tolerance run.
    pub terms: usize,
    /// Geometric estimate of the omitted remainder (max-abs).
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Conditional,
    Unconditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncation {
    pub terms: usize,
    pub tail_bound: f64,
}

/// Lag-indexed `p × p` covariance matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    pub kind: CovarianceKind,
    /// `lags[u]` is the lag-`u` matrix.
    pub lags: Vec<Matrix>,
    /// Worst truncation over the lags, when series-computed.
    pub truncation: Option<Truncation>,
}

impl CovarianceSet {
    /// Lag 0 must be symmetric and positive semi-definite up to `1e-10`.
    pub fn validate(&self) -> Result<()> {
        let g0 = self
            .lags
            .first()
            .ok_or_else(|| RcarError::InvalidInput("covariance set has no lag 0".into()))?;
        let scale = 1.0 + linalg::max_abs(g0);
        if linalg::max_abs(&(g0 - g0.transpose())) > 1e-10 * scale {
            return Err(RcarError::InvalidInput("lag-0 covariance is not symmetric".into()));
        }
        if linalg::min_symmetric_eigenvalue(g0) < -1e-10 * scale {
            return Err(RcarError::InvalidInput("lag-0 covariance is not positive semi-definite".into()));
        }
        Ok(())
    }
}

/// `μ(v, u) = E{A^v ⊗ A^{v+u}}` for a range of `(v, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    pub entries: BTreeMap<(usize, usize), Matrix>,
    pub max_power: usize,
    pub max_lag: usize,
    pub approximate: bool,
}

/// Spectral density matrix at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensityValue {
    pub lambda: f64,
    pub value: DMatrix<Complex64>,
    pub terms: usize,
    pub tail_bound: f64,
}

/// λ = 0 spectral density from the factored moment-series expression.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredSpectrum {
    pub value: Matrix,
    pub tail_bound: f64,
    pub even_terms: usize,
    pub lag_terms: usize,
}

/// Outcome of [`spectral_existence_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExistenceReport {
    pub exists: bool,
    pub max_radius: f64,
    /// Indices of atoms at or beyond the `1 − tol` boundary.
    pub offending_atoms: Vec<usize>,
    pub approximate: bool,
}

fn check_options(opts: &SeriesOptions) -> Result<()> {
    if !(opts.tol > 0.0 && opts.tol.is_finite()) || opts.max_terms == 0 {
        return Err(RcarError::InvalidInput(format!(
            "series options need tol > 0 and max_terms ≥ 1, got {opts:?}"
        )));
    }
    Ok(())
}

fn check_omega(p: usize, omega: &Matrix) -> Result<()> {
    if omega.nrows() != p || omega.ncols() != p {
        return Err(RcarError::DimensionMismatch(format!(
            "Ω is {}×{}, expected {p}×{p}",
            omega.nrows(),
            omega.ncols()
        )));
    }
    Ok(())
}

/// Sums `next_term(0), next_term(1), …` until `run` consecutive terms are below `tol`.
fn sum_series<F>(run: usize, opts: &SeriesOptions, mut next_term: F) -> Result<SeriesSum>
where
    F: FnMut(usize) -> Matrix,
{
    check_options(opts)?;
    let run = run.max(1);
    let mut sum: Option<Matrix> = None;
    let mut norms: Vec<f64> = Vec::new();
    let mut below = 0;
    for k in 0..opts.max_terms {
        let term = next_term(k);
        let n = linalg::max_abs(&term);
        if !n.is_finite() {
            return Err(RcarError::NonFinite(format!("series term {k}")));
        }
        sum = Some(match sum {
            Some(s) => s + term,
            None => term,
        });
        norms.push(n);
        below = if n < opts.tol { below + 1 } else { 0 };
        if below >= run {
            let first_small = k + 1 - run;
            return Ok(SeriesSum {
                value: sum.unwrap(),
                terms: first_small,
                tail_bound: geometric_tail(&norms, run),
            });
        }
    }
    let last = *norms.last().unwrap_or(&f64::INFINITY);
    Err(RcarError::Truncation {
        terms: opts.max_terms,
        last_term: last,
        tail: geometric_tail(&norms, run),
    })
}

/// `‖t_K‖ r/(1−r)` with `r` the `run`-step geometric decay rate at the end of `norms`.
fn geometric_tail(norms: &[f64], run: usize) -> f64 {
    let k = norms.len() - 1;
    let last = norms[k];
    if last == 0.0 {
        return 0.0;
    }
    // the largest of the final `run` terms bounds the next ones under a shift-periodic pattern
    let window_max = norms[k + 1 - run.min(k + 1)..].iter().copied().fold(0.0, f64::max);
    if k < run {
        return window_max * run as f64;
    }
    let earlier = norms[k - run];
    if earlier <= 0.0 {
        return window_max * run as f64;
    }
    let r = (last / earlier).powf(1.0 / run as f64);
    if r < 1.0 {
        window_max * r / (1.0 - r)
    } else {
        window_max * run as f64
    }
}

fn stationary_or_error(a: &CompanionMatrix, tol: f64) -> Result<f64> {
    let r = a.spectral_radius()?;
    if r >= 1.0 - tol {
        return Err(RcarError::Nonstationary(format!(
            "companion spectral radius {r} is not below 1 − {tol:e}"
        )));
    }
    Ok(r)
}

/// `Γ(0)` from the linear system `(I − A⊗A) vec Γ = vec Ω`.
pub fn gamma0_direct(a: &CompanionMatrix, omega: &Matrix) -> Result<Matrix> {
    let p = a.order();
    check_omega(p, omega)?;
    stationary_or_error(a, DEFAULT_BOUNDARY_TOL)?;
    let kron = linalg::kron(a.matrix(), a.matrix());
    let system = Matrix::identity(p * p, p * p) - kron;
    let inv = linalg::checked_inverse(&system, MIN_RCOND, "I − A⊗A").map_err(|e| match e {
        RcarError::Singular(msg) => RcarError::Nonstationary(msg),
        other => other,
    })?;
    let gamma = linalg::unvec(&(inv * linalg::vec(omega)), p)?;
    Ok(linalg::symmetrize(&gamma))
}

/// `Γ(0) = Σ_k A^k Ω A'^k`, truncated.
pub fn gamma0_series(a: &CompanionMatrix, omega: &Matrix, opts: &SeriesOptions) -> Result<SeriesSum> {
    let p = a.order();
    check_omega(p, omega)?;
    stationary_or_error(a, DEFAULT_BOUNDARY_TOL)?;
    let am = a.matrix();
    let at = am.transpose();
    let mut current = omega.clone();
    sum_series(p, opts, |k| {
        if k > 0 {
            current = am * &current * &at;
        }
        current.clone()
    })
}

/// `Γ(u) = A^u Γ(0)`.
pub fn gamma_u(a: &CompanionMatrix, gamma0: &Matrix, u: usize) -> Matrix {
    linalg::matrix_power(a.matrix(), u) * gamma0
}

/// `A = Γ(1) Γ(0)⁻¹`.
pub fn identify_a_from_covariances(gamma1: &Matrix, gamma0: &Matrix) -> Result<Matrix> {
    if gamma1.shape() != gamma0.shape() {
        return Err(RcarError::DimensionMismatch("Γ(1) and Γ(0) differ in shape".into()));
    }
    let inv = linalg::checked_inverse(gamma0, MIN_RCOND, "Γ(0)").map_err(|e| match e {
        RcarError::Singular(msg) => RcarError::Singular(format!(
            "{msg}; the lagged states are exactly linearly dependent, so A is not identified"
        )),
        other => other,
    })?;
    Ok(gamma1 * inv)
}

/// Conditional covariances `Γ(0), …, Γ(u_max)` for one draw.
pub fn conditional_covariances(a: &CompanionMatrix, omega: &Matrix, u_max: usize) -> Result<CovarianceSet> {
    let g0 = gamma0_direct(a, omega)?;
    let mut lags = Vec::with_capacity(u_max + 1);
    let mut current = g0;
    for _ in 0..=u_max {
        let next = a.matrix() * &current;
        lags.push(current);
        current = next;
    }
    Ok(CovarianceSet {
        kind: CovarianceKind::Conditional,
        lags,
        truncation: None,
    })
}

/// `Σ_w π_w A_w^v ⊗ A_w^{v+u}` over weighted matrices.
pub fn weighted_kron_moment<'a, I>(mats: I, v: usize, u: usize) -> Matrix
where
    I: IntoIterator<Item = (&'a Matrix, f64)>,
{
    let mut acc: Option<Matrix> = None;
    for (m, w) in mats {
        let left = linalg::matrix_power(m, v);
        let right = linalg::matrix_power(m, v + u);
        let term = linalg::kron(&left, &right) * w;
        acc = Some(match acc {
            Some(a) => a + term,
            None => term,
        });
    }
    acc.expect("at least one matrix")
}

/// `μ(v, u) = E{A^v ⊗ A^{v+u}}` over an atom set. `(0, 0)` is `I_{p²}`.
pub fn moment_mu_atoms(atoms: &AtomSet, v: usize, u: usize) -> Matrix {
    let p = atoms.order();
    if v == 0 && u == 0 {
        return Matrix::identity(p * p, p * p);
    }
    weighted_kron_moment(atoms.atoms.iter().map(|a| a.matrix()).zip(atoms.weights.iter().copied()), v, u)
}

/// `μ(v, u)` for a distribution; gaussian laws need [`ExpectationMode::Sampled`].
pub fn moment_mu(dist: &CoefficientDistribution, mode: ExpectationMode, v: usize, u: usize) -> Result<Matrix> {
    let atoms = AtomSet::resolve(dist, mode, DEFAULT_BOUNDARY_TOL)?;
    Ok(moment_mu_atoms(&atoms, v, u))
}

/// `E{A^u ⊗ I_p}`, the transposed-lag counterpart of `μ(0, u)`.
pub fn moment_mu_transposed(atoms: &AtomSet, u: usize) -> Matrix {
    let p = atoms.order();
    let eye = Matrix::identity(p, p);
    atoms.expect(|a| linalg::kron(&linalg::matrix_power(a.matrix(), u), &eye))
}

/// Table of `μ(v, u)` for `v ≤ max_power`, `u ≤ max_lag`.
pub fn moment_series(atoms: &AtomSet, max_power: usize, max_lag: usize) -> MomentSeries {
    let mut entries = BTreeMap::new();
    for v in 0..=max_power {
        for u in 0..=max_lag {
            entries.insert((v, u), moment_mu_atoms(atoms, v, u));
        }
    }
    MomentSeries {
        entries,
        max_power,
        max_lag,
        approximate: atoms.approximate,
    }
}

fn require_stationary_atoms(atoms: &AtomSet, tol: f64) -> Result<()> {
    let r = atoms.max_spectral_radius()?;
    if r >= 1.0 - tol {
        return Err(RcarError::Nonstationary(format!(
            "coefficient law has an atom with spectral radius {r}; second moments diverge"
        )));
    }
    Ok(())
}

/// `Υ(u)` from `vec Υ(u) = Σ_v μ(v, u) vec Ω̄`, truncated.
///
/// Each term is evaluated as `E{A^{v+u} Ω̄ A'^v}`, which is the same vector as
/// `μ(v, u) vec Ω̄` by the vec–Kronecker identity.
pub fn upsilon_series(atoms: &AtomSet, omega_bar: &Matrix, u: usize, opts: &SeriesOptions) -> Result<SeriesSum> {
    let p = atoms.order();
    check_omega(p, omega_bar)?;
    require_stationary_atoms(atoms, DEFAULT_BOUNDARY_TOL)?;
    let lag_powers: Vec<Matrix> = atoms.atoms.iter().map(|a| linalg::matrix_power(a.matrix(), u)).collect();
    // per-atom A^v Ω̄ A'^v
    let mut sandwiches: Vec<Matrix> = vec![omega_bar.clone(); atoms.atoms.len()];
    sum_series(p, opts, |k| {
        if k > 0 {
            for (s, a) in sandwiches.iter_mut().zip(&atoms.atoms) {
                *s = a.matrix() * &*s * a.matrix().transpose();
            }
        }
        let mut term = Matrix::zeros(p, p);
        for ((s, lp), w) in sandwiches.iter().zip(&lag_powers).zip(&atoms.weights) {
            term += (lp * s) * *w;
        }
        term
    })
}

/// `Υ(u) = E{A^u Γ_ω(0)}` with each `Γ_ω(0)` from [`gamma0_direct`].
pub fn upsilon_closed_form(atoms: &AtomSet, omega_bar: &Matrix, u: usize) -> Result<Matrix> {
    let p = atoms.order();
    check_omega(p, omega_bar)?;
    let mut acc = Matrix::zeros(p, p);
    for (a, w) in atoms.atoms.iter().zip(&atoms.weights) {
        acc += gamma_u(a, &gamma0_direct(a, omega_bar)?, u) * *w;
    }
    Ok(acc)
}

/// Unconditional covariances `Υ(0..=u_max)` by series.
pub fn unconditional_covariances(
    atoms: &AtomSet,
    omega_bar: &Matrix,
    u_max: usize,
    opts: &SeriesOptions,
) -> Result<CovarianceSet> {
    let mut lags = Vec::with_capacity(u_max + 1);
    let mut worst = Truncation {
        terms: 0,
        tail_bound: 0.0,
    };
    for u in 0..=u_max {
        let s = upsilon_series(atoms, omega_bar, u, opts)?;
        worst.terms = worst.terms.max(s.terms);
        worst.tail_bound = worst.tail_bound.max(s.tail_bound);
        lags.push(s.value);
    }
    if let Some(g0) = lags.first_mut() {
        *g0 = linalg::symmetrize(g0);
    }
    Ok(CovarianceSet {
        kind: CovarianceKind::Unconditional,
        lags,
        truncation: Some(worst),
    })
}

/// Every atom strictly inside the `1 − tol` disk, which makes `[I − I_p⊗A]²` invertible.
pub fn spectral_existence_check(atoms: &AtomSet, tol: f64) -> Result<ExistenceReport> {
    let mut max_radius = 0.0_f64;
    let mut offending = Vec::new();
    for (i, a) in atoms.atoms.iter().enumerate() {
        let r = a.spectral_radius()?;
        max_radius = max_radius.max(r);
        if r >= 1.0 - tol {
            offending.push(i);
        }
    }
    Ok(ExistenceReport {
        exists: offending.is_empty(),
        max_radius,
        offending_atoms: offending,
        approximate: atoms.approximate,
    })
}

/// `S(λ) = (1/2π)[Υ(0) + Σ_{u≥1}(Υ(u)e^{−iλu} + Υ(u)'e^{iλu})]`, truncated in `u`.
pub fn spectral_density(atoms: &AtomSet, omega_bar: &Matrix, lambda: f64, opts: &SeriesOptions) -> Result<SpectralDensityValue> {
    let p = atoms.order();
    check_omega(p, omega_bar)?;
    check_options(opts)?;
    let existence = spectral_existence_check(atoms, DEFAULT_BOUNDARY_TOL)?;
    if !existence.exists {
        return Err(RcarError::Nonstationary(format!(
            "spectral density does not exist: [I − I_p⊗A]² is singular for atom(s) {:?} (max spectral radius {})",
            existence.offending_atoms, existence.max_radius
        )));
    }
    let mut per_atom: Vec<Matrix> = atoms
        .atoms
        .iter()
        .map(|a| gamma0_direct(a, omega_bar))
        .collect::<Result<_>>()?;

    let upsilon_at = |per_atom: &[Matrix]| -> Matrix {
        let mut acc = Matrix::zeros(p, p);
        for (m, w) in per_atom.iter().zip(&atoms.weights) {
            acc += m * *w;
        }
        acc
    };

    let to_complex = |m: &Matrix, z: Complex64| DMatrix::from_fn(p, p, |i, j| z * m[(i, j)]);
    let mut value = to_complex(&upsilon_at(&per_atom), Complex64::new(1.0, 0.0));
    let mut norms = vec![linalg::max_abs(&value.map(|z| z.re))];
    let mut below = 0;
    let run = p;
    for u in 1..=opts.max_terms {
        for (m, a) in per_atom.iter_mut().zip(&atoms.atoms) {
            *m = a.matrix() * &*m;
        }
        let ups = upsilon_at(&per_atom);
        let n = linalg::max_abs(&ups);
        if !n.is_finite() {
            return Err(RcarError::NonFinite(format!("Υ({u})")));
        }
        let phase = Complex64::from_polar(1.0, -lambda * u as f64);
        value += to_complex(&ups, phase) + to_complex(&ups.transpose(), phase.conj());
        norms.push(n);
        below = if n < opts.tol { below + 1 } else { 0 };
        if below >= run {
            let measured = geometric_tail(&norms, run);
            let n_last = norms.iter().rev().take(run).copied().fold(0.0, f64::max);
            let r = existence.max_radius;
            let by_radius = if n_last == 0.0 { 0.0 } else { n_last * r / (1.0 - r) };
            let scale = Complex64::new(1.0 / (2.0 * PI), 0.0);
            return Ok(SpectralDensityValue {
                lambda,
                value: value.map(|z| z * scale),
                terms: u + 1 - run,
                tail_bound: 2.0 * measured.max(by_radius) / (2.0 * PI),
            });
        }
    }
    Err(RcarError::Truncation {
        terms: opts.max_terms,
        last_term: *norms.last().unwrap(),
        tail: geometric_tail(&norms, run),
    })
}

/// The λ = 0 density as the factored product of moment series,
/// `vec S(0) = (1/2π)[I + Σ_{u≥1}(μ(0,u) + μ'(u))] Σ_v μ(v,0) vec Ω̄`.
///
/// Agrees with [`spectral_density`] only for degenerate coefficient laws:
/// the factorization replaces `E{A^u Γ_ω(0)}` by `E{A^u} E{Γ_ω(0)}`.
pub fn spectral_density_zero_factored(atoms: &AtomSet, omega_bar: &Matrix, opts: &SeriesOptions) -> Result<FactoredSpectrum> {
    let p = atoms.order();
    check_omega(p, omega_bar)?;
    let existence = spectral_existence_check(atoms, DEFAULT_BOUNDARY_TOL)?;
    if !existence.exists {
        return Err(RcarError::Nonstationary(format!(
            "spectral density does not exist for atom(s) {:?}",
            existence.offending_atoms
        )));
    }
    let d = p * p;
    let eye_p = Matrix::identity(p, p);

    // Σ_v E{(A⊗A)^v}
    let kron_sq: Vec<Matrix> = atoms.atoms.iter().map(|a| linalg::kron(a.matrix(), a.matrix())).collect();
    let mut kron_pow: Vec<Matrix> = vec![Matrix::identity(d, d); atoms.atoms.len()];
    let even = sum_series(p, opts, |k| {
        if k > 0 {
            for (pw, ks) in kron_pow.iter_mut().zip(&kron_sq) {
                *pw = &*pw * ks;
            }
        }
        let mut acc = Matrix::zeros(d, d);
        for (pw, w) in kron_pow.iter().zip(&atoms.weights) {
            acc += pw * *w;
        }
        acc
    })?;

    // Σ_{u≥1} E{I⊗A^u + A^u⊗I}
    let mut powers: Vec<Matrix> = vec![eye_p.clone(); atoms.atoms.len()];
    let lagged = sum_series(p, opts, |_| {
        let mut acc = Matrix::zeros(d, d);
        for ((pw, a), w) in powers.iter_mut().zip(&atoms.atoms).zip(&atoms.weights) {
            *pw = &*pw * a.matrix();
            acc += (linalg::kron(&eye_p, pw) + linalg::kron(pw, &eye_p)) * *w;
        }
        acc
    })?;

    let vo = linalg::vec(omega_bar);
    let left = Matrix::identity(d, d) + &lagged.value;
    let right = &even.value * &vo;
    let out = &left * &right / (2.0 * PI);

    // operator ∞-norm of a d×d error with max-abs ≤ t is at most d·t
    let vo_norm = vo.amax();
    let left_norm = left.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let e1 = d as f64 * even.tail_bound;
    let e2 = d as f64 * lagged.tail_bound;
    let tail = (left_norm * e1 * vo_norm + e2 * right.amax() + e1 * e2 * vo_norm) / (2.0 * PI);

    Ok(FactoredSpectrum {
        value: linalg::unvec(&out, p)?,
        tail_bound: tail,
        even_terms: even.terms,
        lag_terms: lagged.terms,
    })
}
