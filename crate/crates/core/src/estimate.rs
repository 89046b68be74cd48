//! Estimators: cross-sectional lag covariances `Υ̂_N(u)`, per-individual
//! least-squares `Â_T(ω)`, covariance ratios and the noise covariance `Ω̂`.

use serde::Serialize;

use crate::error::{RcarError, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::moments::{self, CovarianceKind, CovarianceSet, MomentSeries, MIN_RCOND};
use crate::simulate::Panel;

/// State vectors `Y̲ₜ = (y_{t−p+1}, …, yₜ)'` for `t = p−1, …, T`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSeries {
    pub order: usize,
    pub states: Vec<Vector>,
}

impl StateSeries {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

pub fn build_states(series: &[f64], p: usize) -> Result<StateSeries> {
    if p == 0 {
        return Err(RcarError::InvalidInput("order p must be ≥ 1".into()));
    }
    if series.len() < p {
        return Err(RcarError::InvalidInput(format!(
            "series of length {} is shorter than p = {p}",
            series.len()
        )));
    }
    let states = series.windows(p).map(Vector::from_column_slice).collect();
    Ok(StateSeries { order: p, states })
}

/// `Υ̂_N(u)` with the number of outer products summed per individual.
#[derive(Debug, Clone, PartialEq)]
pub struct LagEstimate {
    pub value: Matrix,
    pub pairs_per_individual: usize,
    pub total_pairs: usize,
}

fn lagged_outer_sum(states: &StateSeries, u: usize) -> Matrix {
    let p = states.order;
    let mut acc = Matrix::zeros(p, p);
    for i in u..states.len() {
        acc += &states.states[i] * states.states[i - u].transpose();
    }
    acc
}

/// `(1/(C·N)) Σ_ω Σ_t Y̲ₜ(ω) Y̲_{t−u}(ω)'` over the `C` times where both states exist.
pub fn upsilon_hat(panel: &Panel, u: usize) -> Result<LagEstimate> {
    panel.validate()?;
    let p = panel.order;
    let n_states = panel.horizon() + 2 - p;
    if u >= n_states {
        return Err(RcarError::InvalidInput(format!(
            "lag {u} needs at least {} observations per individual, have {}",
            u + p,
            panel.horizon() + 1
        )));
    }
    let pairs = n_states - u;
    let mut acc = Matrix::zeros(p, p);
    for series in &panel.observations {
        acc += lagged_outer_sum(&build_states(series, p)?, u);
    }
    let total = pairs * panel.individuals();
    Ok(LagEstimate {
        value: acc / total as f64,
        pairs_per_individual: pairs,
        total_pairs: total,
    })
}

/// Least-squares fit of one individual's companion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualFit {
    /// `[Σ Y̲ₜY̲'_{t−1}][Σ Y̲_{t−1}Y̲'_{t−1}]⁻¹`.
    pub a_hat: Matrix,
    /// Residual variance of the last state component.
    pub residual_variance: f64,
    /// Number of regression pairs used.
    pub regressions: usize,
}

/// Least-squares estimate of `A(ω)` from one series.
pub fn a_hat_individual(series: &[f64], p: usize) -> Result<IndividualFit> {
    let states = build_states(series, p)?;
    if states.len() < 2 {
        return Err(RcarError::InvalidInput("need at least two states to regress".into()));
    }
    let mut cross = Matrix::zeros(p, p);
    let mut gram = Matrix::zeros(p, p);
    for w in states.states.windows(2) {
        cross += &w[1] * w[0].transpose();
        gram += &w[0] * w[0].transpose();
    }
    match linalg::inverse_with_rcond(&gram) {
        Some((_, rcond)) if rcond >= MIN_RCOND => {}
        _ => {
            return Err(RcarError::Singular(
                "lagged-state Gram matrix is rank deficient; the series is an exact linear recursion of lower order".into(),
            ))
        }
    }
    // Â' solves Gram · Â' = cross' (Gram symmetric)
    let a_hat = gram
        .clone()
        .lu()
        .solve(&cross.transpose())
        .ok_or_else(|| RcarError::Singular("lagged-state Gram matrix".into()))?
        .transpose();

    let bottom = a_hat.row(p - 1).transpose();
    let regressions = states.len() - 1;
    let rss: f64 = states
        .states
        .windows(2)
        .map(|w| {
            let e = w[1][p - 1] - bottom.dot(&w[0]);
            e * e
        })
        .sum();
    let dof = if regressions > p { regressions - p } else { regressions };
    Ok(IndividualFit {
        a_hat,
        residual_variance: rss / dof as f64,
        regressions,
    })
}

/// How `Ω̂` was formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaMethod {
    /// `p = 1`: `[1 − ρ̂(2)]·υ̂(0) = υ̂(0) − υ̂(2)`.
    ScalarTelescoping,
    /// `p > 1`: `Υ̂(0) − Υ̂(1)Υ̂(0)⁻¹Υ̂(1)'`; exact only for fixed coefficients.
    Heuristic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossSectionalReport {
    pub order: usize,
    pub individuals: usize,
    pub horizon: usize,
    pub upsilon_hat: CovarianceSet,
    /// Outer products per individual behind each lag.
    pub lag_counts: Vec<usize>,
    /// Covariance ratios `Υ̂(u) Υ̂(0)⁻¹` (scalars `υ̂(u)/υ̂(0)` when `p = 1`).
    /// These are not coefficient moments unless the coefficients are fixed.
    pub covariance_ratios: Vec<Matrix>,
    pub omega_hat: Option<Matrix>,
    /// Cross-sectional standard error of `Ω̂` (`p = 1` only): `Ω̂` is the mean over
    /// individuals of `Σ yₜ²/C₀ − Σ yₜyₜ₋₂/C₂`, so its SE is that contribution's `sd/√N`.
    pub omega_hat_se: Option<f64>,
    pub omega_method: OmegaMethod,
}

/// Cross-sectional pathway over lags `0..=u_max`.
pub fn estimate_cross_sectional(panel: &Panel, u_max: usize) -> Result<CrossSectionalReport> {
    panel.validate()?;
    let p = panel.order;
    let mut lags = Vec::with_capacity(u_max + 1);
    let mut counts = Vec::with_capacity(u_max + 1);
    for u in 0..=u_max {
        let est = upsilon_hat(panel, u)?;
        lags.push(est.value);
        counts.push(est.pairs_per_individual);
    }
    lags[0] = linalg::symmetrize(&lags[0]);
    let inv0 = linalg::checked_inverse(&lags[0], MIN_RCOND, "Υ̂(0)")?;
    let covariance_ratios: Vec<Matrix> = lags.iter().map(|l| l * &inv0).collect();

    let (omega_hat, omega_method) = if p == 1 {
        let omega = (u_max >= 2).then(|| Matrix::from_element(1, 1, (1.0 - covariance_ratios[2][(0, 0)]) * lags[0][(0, 0)]));
        (omega, OmegaMethod::ScalarTelescoping)
    } else {
        let omega = (u_max >= 2).then(|| linalg::symmetrize(&(&lags[0] - &lags[1] * &inv0 * lags[1].transpose())));
        (omega, OmegaMethod::Heuristic)
    };

    let omega_hat_se = if p == 1 && u_max >= 2 {
        let c0 = counts[0] as f64;
        let c2 = counts[2] as f64;
        let contributions: Vec<f64> = panel
            .observations
            .iter()
            .map(|y| {
                let s0: f64 = y.iter().map(|v| v * v).sum();
                let s2: f64 = y.windows(3).map(|w| w[2] * w[0]).sum();
                s0 / c0 - s2 / c2
            })
            .collect();
        Some(crate::stats::std_error(&contributions))
    } else {
        None
    };

    Ok(CrossSectionalReport {
        order: p,
        individuals: panel.individuals(),
        horizon: panel.horizon(),
        omega_hat_se,
        upsilon_hat: CovarianceSet {
            kind: CovarianceKind::Unconditional,
            lags,
            truncation: None,
        },
        lag_counts: counts,
        covariance_ratios,
        omega_hat,
        omega_method,
    })
}

/// Per-individual fit plus its own time-average covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualSummary {
    pub fit: IndividualFit,
    pub spectral_radius: f64,
    /// `Γ̂_ω(0) − Â(ω) Γ̂_ω(1)'`.
    pub omega_hat: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerIndividualReport {
    pub order: usize,
    pub individuals: usize,
    pub horizon: usize,
    pub summaries: Vec<IndividualSummary>,
    /// Sample mean of `Â(ω)`.
    pub mean_a_hat: Matrix,
    /// Sample mean of `Ω̂_ω`.
    pub mean_omega_hat: Matrix,
    /// Empirical `μ̂(v, u)`: means of `Â^v ⊗ Â^{v+u}` over individuals.
    pub moments: MomentSeries,
    /// Share of `Â(ω)` with spectral radius ≥ 1.
    pub explosive_fraction: f64,
    /// Set when `T < 10p`, where per-individual regressions are unreliable.
    pub short_series_warning: bool,
}

fn summarize_individual(series: &[f64], p: usize) -> Result<IndividualSummary> {
    let fit = a_hat_individual(series, p)?;
    let states = build_states(series, p)?;
    let n = states.len();
    let g0 = lagged_outer_sum(&states, 0) / n as f64;
    let g1 = lagged_outer_sum(&states, 1) / (n - 1) as f64;
    let omega_hat = &g0 - &fit.a_hat * g1.transpose();
    let spectral_radius = linalg::spectral_radius(&fit.a_hat)?;
    Ok(IndividualSummary {
        fit,
        spectral_radius,
        omega_hat,
    })
}

/// Per-individual pathway: fit every `Â(ω)`, then average moments.
pub fn estimate_per_individual(panel: &Panel, max_power: usize, max_lag: usize) -> Result<PerIndividualReport> {
    panel.validate()?;
    let p = panel.order;
    let run = |series: &Vec<f64>| summarize_individual(series, p);

    #[cfg(feature = "parallel")]
    let results: Vec<Result<IndividualSummary>> = {
        use rayon::prelude::*;
        panel.observations.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<IndividualSummary>> = panel.observations.iter().map(run).collect();

    let mut summaries = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    let mut first_err = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => summaries.push(s),
            Err(e) => {
                failed.push(i + 1);
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(first) = first_err {
        return Err(RcarError::PerIndividual {
            failed,
            first: Box::new(first),
        });
    }

    let n = summaries.len();
    let weight = 1.0 / n as f64;
    let mean_a_hat = summaries.iter().fold(Matrix::zeros(p, p), |acc, s| acc + &s.fit.a_hat * weight);
    let mean_omega_hat = summaries.iter().fold(Matrix::zeros(p, p), |acc, s| acc + &s.omega_hat * weight);
    let mut entries = std::collections::BTreeMap::new();
    for v in 0..=max_power {
        for u in 0..=max_lag {
            let m = moments::weighted_kron_moment(summaries.iter().map(|s| (&s.fit.a_hat, weight)), v, u);
            entries.insert((v, u), m);
        }
    }
    let explosive = summaries.iter().filter(|s| s.spectral_radius >= 1.0).count();
    Ok(PerIndividualReport {
        order: p,
        individuals: n,
        horizon: panel.horizon(),
        mean_a_hat,
        mean_omega_hat,
        moments: MomentSeries {
            entries,
            max_power,
            max_lag,
            approximate: true,
        },
        explosive_fraction: explosive as f64 / n as f64,
        short_series_warning: panel.horizon() < 10 * p,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientDistribution, CoefficientVector, ModelSpec, NoiseSpec};
    use crate::rng::{self, Purpose};
    use crate::simulate::{simulate_panel, simulate_path, InitMode, SimulationOptions};

    #[test]
    fn build_states_examples() {
        let s = build_states(&[1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(s.states, vec![Vector::from_vec(vec![1.0, 2.0]), Vector::from_vec(vec![2.0, 3.0])]);
        let s = build_states(&[4.0, 5.0], 1).unwrap();
        assert_eq!(s.states.iter().map(|v| v[0]).collect::<Vec<_>>(), vec![4.0, 5.0]);
        assert!(build_states(&[1.0], 2).is_err());
    }

    #[test]
    fn states_overlap_by_shift() {
        let series: Vec<f64> = (0..30).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let s = build_states(&series, 4).unwrap();
        assert_eq!(s.len(), series.len() - 4 + 1);
        for w in s.states.windows(2) {
            assert_eq!(w[0].as_slice()[1..], w[1].as_slice()[..3]);
        }
    }

    #[test]
    fn zero_panel_gives_zero_covariances() {
        let panel = Panel::from_observations(2, vec![vec![0.0; 6]; 3]).unwrap();
        for u in 0..=3 {
            assert_eq!(upsilon_hat(&panel, u).unwrap().value, Matrix::zeros(2, 2));
        }
        assert!(upsilon_hat(&panel, 5).is_err());
    }

    #[test]
    fn divisor_equals_number_of_summands() {
        let panel = Panel::from_observations(3, vec![vec![1.0; 11]; 4]).unwrap();
        for u in 0..=8 {
            // all-ones states: each outer product is the all-ones matrix, so the mean is exactly 1
            let est = upsilon_hat(&panel, u).unwrap();
            assert!(est.value.iter().all(|x| (*x - 1.0).abs() < 1e-15));
            let mut counted = 0;
            for series in &panel.observations {
                let states = build_states(series, 3).unwrap();
                counted += (0..states.len()).filter(|&t| t >= u).count();
            }
            assert_eq!(est.total_pairs, counted);
        }
        assert!(upsilon_hat(&panel, 9).is_err());
    }

    #[test]
    fn noiseless_series_recovers_coefficient_exactly() {
        let series: Vec<f64> = (0..20).map(|i| 0.5_f64.powi(i)).collect();
        let fit = a_hat_individual(&series, 1).unwrap();
        assert_eq!(fit.a_hat[(0, 0)], 0.5);
        assert_eq!(fit.residual_variance, 0.0);
    }

    #[test]
    fn zero_series_is_rank_deficient() {
        assert!(matches!(a_hat_individual(&[0.0; 30], 2), Err(RcarError::Singular(_))));
    }

    #[test]
    fn a_hat_is_companion_shaped() {
        let c = CoefficientVector::new(vec![0.5, 0.3]).unwrap();
        let mut s = rng::stream(4, 1, Purpose::Innovations);
        let y = simulate_path(&c, 1.0, 400, &InitMode::ExactStationary, &mut s).unwrap();
        let fit = a_hat_individual(&y, 2).unwrap();
        assert!((fit.a_hat[(0, 0)]).abs() < 1e-12);
        assert!((fit.a_hat[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_sectional_white_noise() {
        let spec = ModelSpec::new(
            CoefficientDistribution::degenerate(vec![0.0]).unwrap(),
            NoiseSpec::constant(1.0).unwrap(),
            3000,
            8,
        )
        .unwrap();
        let panel = simulate_panel(&spec, 17, &SimulationOptions::default()).unwrap();
        let rep = estimate_cross_sectional(&panel, 3).unwrap();
        assert_eq!(rep.omega_method, OmegaMethod::ScalarTelescoping);
        for u in 1..=3 {
            assert!(rep.covariance_ratios[u][(0, 0)].abs() < 0.03);
        }
        assert!((rep.omega_hat.unwrap()[(0, 0)] - 1.0).abs() < 0.05);
        assert_eq!(rep.lag_counts, vec![9, 8, 7, 6]);
    }

    #[test]
    fn cross_sectional_singular_upsilon() {
        let panel = Panel::from_observations(1, vec![vec![0.0; 8]; 5]).unwrap();
        assert!(matches!(estimate_cross_sectional(&panel, 2), Err(RcarError::Singular(_))));
    }

    #[test]
    fn per_individual_single_and_failures() {
        let c = CoefficientVector::new(vec![0.6]).unwrap();
        let mut s = rng::stream(8, 1, Purpose::Innovations);
        let y = simulate_path(&c, 1.0, 300, &InitMode::ExactStationary, &mut s).unwrap();
        let panel = Panel::from_observations(1, vec![y.clone()]).unwrap();
        let rep = estimate_per_individual(&panel, 1, 1).unwrap();
        assert_eq!(rep.individuals, 1);
        assert_eq!(rep.summaries.len(), 1);
        assert_eq!(rep.moments.entries[&(0, 0)], Matrix::identity(1, 1));
        assert!((rep.moments.entries[&(0, 1)][(0, 0)] - rep.mean_a_hat[(0, 0)]).abs() < 1e-15);

        let bad = Panel::from_observations(1, vec![y.clone(), vec![0.0; y.len()], y, vec![0.0; 301]]).unwrap();
        match estimate_per_individual(&bad, 1, 1).unwrap_err() {
            RcarError::PerIndividual { failed, .. } => assert_eq!(failed, vec![2, 4]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scalar_omega_and_its_standard_error() {
        // contributions: 14/3 − 3 = 5/3 and 1/3 − 0 = 1/3
        let panel = Panel::from_observations(1, vec![vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let r = estimate_cross_sectional(&panel, 2).unwrap();
        assert!((r.omega_hat.unwrap()[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((r.omega_hat_se.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }
}
