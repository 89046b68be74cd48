//! Reproducible RCAR(p) panel generation.
//!
//! Individual `ω` (1-based) draws its coefficients, its noise variance and its
//! innovations from three streams keyed by `(seed, ω)`, so a panel is a pure
//! function of `(spec, seed, options)` however the individuals are scheduled.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{RcarError, Result};
use crate::linalg::{self, Vector};
use crate::model::{
    companion_from_coeffs, is_stationary_draw, omega_matrix, CoefficientDistribution, CoefficientVector, ModelSpec,
    DEFAULT_BOUNDARY_TOL, MAX_CONSECUTIVE_REJECTIONS,
};
use crate::moments::gamma0_direct;
use crate::rng::{self, Purpose, Stream};

pub const DEFAULT_BURN_IN: usize = 500;

/// How the pre-sample state `Y̲₀` is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitMode {
    /// Start from `start` (zeros by default) and discard `burn` steps.
    BurnIn {
        #[serde(default = "default_burn")]
        burn: usize,
        #[serde(default)]
        start: Option<Vec<f64>>,
    },
    /// Draw `Y̲₀ ~ N(0, Γ_ω(0))`.
    ExactStationary,
    /// `Y̲₀ = Σ_{j=0}^{J} A^j η_{−j}`, the truncated moving-average representation.
    MaTruncation { terms: usize },
}

fn default_burn() -> usize {
    DEFAULT_BURN_IN
}

impl Default for InitMode {
    fn default() -> Self {
        Self::ExactStationary
    }
}

impl InitMode {
    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            Self::BurnIn { start: Some(s), .. } if s.len() != p => Err(RcarError::DimensionMismatch(format!(
                "burn-in start state has length {}, expected p = {p}",
                s.len()
            ))),
            Self::BurnIn { start: Some(s), .. } if s.iter().any(|x| !x.is_finite()) => {
                Err(RcarError::NonFinite("burn-in start state".into()))
            }
            Self::MaTruncation { terms: 0 } => Err(RcarError::InvalidInput("MA truncation needs J ≥ 1".into())),
            _ => Ok(()),
        }
    }

    fn needs_stationarity(&self) -> bool {
        !matches!(self, Self::BurnIn { .. })
    }
}

/// What to do with a coefficient draw outside the stationarity region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonstationaryPolicy {
    #[default]
    Reject,
    KeepAndFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationOptions {
    #[serde(default)]
    pub init: InitMode,
    #[serde(default)]
    pub policy: NonstationaryPolicy,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub keep_truth: bool,
}

fn default_tol() -> f64 {
    DEFAULT_BOUNDARY_TOL
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            init: InitMode::default(),
            policy: NonstationaryPolicy::default(),
            tol: DEFAULT_BOUNDARY_TOL,
            keep_truth: false,
        }
    }
}

/// One individual's hidden parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualDraw {
    pub coefficients: CoefficientVector,
    pub sigma2: f64,
    pub stationary: bool,
    /// Nonstationary draws discarded before this one.
    pub redraws: usize,
}

/// Observations `y[ω][t]`, `t = 0..=T`, for `N` individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub order: usize,
    pub observations: Vec<Vec<f64>>,
    pub truth: Option<Vec<IndividualDraw>>,
    pub init: Option<InitMode>,
    pub seed: Option<u64>,
}

impl Panel {
    /// Wraps raw series; all must share one length `T + 1 ≥ p + 1`.
    pub fn from_observations(order: usize, observations: Vec<Vec<f64>>) -> Result<Self> {
        let panel = Self {
            order,
            observations,
            truth: None,
            init: None,
            seed: None,
        };
        panel.validate()?;
        Ok(panel)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(RcarError::InvalidInput("panel order must be ≥ 1".into()));
        }
        let Some(first) = self.observations.first() else {
            return Err(RcarError::InvalidInput("panel has no individuals".into()));
        };
        let len = first.len();
        if len < self.order + 1 {
            return Err(RcarError::InvalidInput(format!(
                "series of length {len} is too short for order {}",
                self.order
            )));
        }
        for (i, s) in self.observations.iter().enumerate() {
            if s.len() != len {
                return Err(RcarError::InvalidInput(format!(
                    "individual {} has {} observations, expected {len}",
                    i + 1,
                    s.len()
                )));
            }
            if s.iter().any(|y| !y.is_finite()) {
                return Err(RcarError::NonFinite(format!("observations of individual {}", i + 1)));
            }
        }
        if let Some(truth) = &self.truth {
            if truth.len() != self.observations.len() {
                return Err(RcarError::InvalidInput(format!(
                    "truth has {} entries for {} individuals",
                    truth.len(),
                    self.observations.len()
                )));
            }
        }
        Ok(())
    }

    pub fn individuals(&self) -> usize {
        self.observations.len()
    }

    /// Last time index `T`.
    pub fn horizon(&self) -> usize {
        self.observations[0].len() - 1
    }
}

/// Streams `(coefficients, noise variance, path)` for individual `omega`.
pub fn individual_streams(seed: u64, omega: usize) -> (Stream, Stream, Stream) {
    let w = omega as u64;
    (
        rng::stream(seed, w, Purpose::Coefficients),
        rng::stream(seed, w, Purpose::NoiseVariance),
        rng::stream(seed, w, Purpose::Innovations),
    )
}

/// Draws one individual's coefficients and noise variance.
pub fn draw_individual(
    spec: &ModelSpec,
    coeff_stream: &mut Stream,
    noise_stream: &mut Stream,
    policy: NonstationaryPolicy,
    tol: f64,
) -> Result<IndividualDraw> {
    let sampler = spec.coefficients.sampler()?;
    let sigma2 = spec.noise.draw(noise_stream);
    match policy {
        NonstationaryPolicy::KeepAndFlag => {
            let c = sampler.draw(coeff_stream);
            let stationary = is_stationary_draw(&c, tol)?;
            Ok(IndividualDraw {
                coefficients: c,
                sigma2,
                stationary,
                redraws: 0,
            })
        }
        NonstationaryPolicy::Reject => {
            if let CoefficientDistribution::Degenerate { alpha } = &spec.coefficients {
                // every redraw would be identical
                if !is_stationary_draw(alpha, tol)? {
                    return Err(RcarError::RejectionExhausted(MAX_CONSECUTIVE_REJECTIONS));
                }
            }
            let (c, redraws) = sampler.draw_stationary(coeff_stream, tol)?;
            Ok(IndividualDraw {
                coefficients: c,
                sigma2,
                stationary: true,
                redraws,
            })
        }
    }
}

fn step(alpha: &[f64], state: &mut [f64], shock: f64) {
    let p = alpha.len();
    let next: f64 = alpha.iter().enumerate().map(|(k, a)| a * state[p - 1 - k]).sum::<f64>() + shock;
    state.rotate_left(1);
    state[p - 1] = next;
}

/// Generates `y₀, …, y_T` for one coefficient draw.
///
/// `sigma2 = 0` is allowed and gives the noiseless recursion.
pub fn simulate_path(
    coeffs: &CoefficientVector,
    sigma2: f64,
    horizon: usize,
    init: &InitMode,
    stream: &mut Stream,
) -> Result<Vec<f64>> {
    let p = coeffs.order();
    init.validate(p)?;
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(RcarError::InvalidInput(format!("noise variance {sigma2} must be ≥ 0")));
    }
    if init.needs_stationarity() && !is_stationary_draw(coeffs, DEFAULT_BOUNDARY_TOL)? {
        return Err(RcarError::Nonstationary(format!(
            "{init:?} initialization requires a stationary draw, got {:?}",
            coeffs.as_slice()
        )));
    }
    let alpha = coeffs.as_slice();
    let sd = sigma2.sqrt();
    let shock = |s: &mut Stream| sd * s.sample::<f64, _>(StandardNormal);

    let mut state = match init {
        InitMode::BurnIn { burn, start } => {
            let mut state = start.clone().unwrap_or_else(|| vec![0.0; p]);
            for _ in 0..*burn {
                let e = shock(stream);
                step(alpha, &mut state, e);
            }
            state
        }
        InitMode::ExactStationary => {
            let a = companion_from_coeffs(coeffs);
            let gamma0 = gamma0_direct(&a, &omega_matrix(p, sigma2))?;
            let factor = linalg::psd_sqrt(&gamma0);
            let z = Vector::from_fn(p, |_, _| stream.sample::<f64, _>(StandardNormal));
            (factor * z).iter().copied().collect()
        }
        InitMode::MaTruncation { terms } => {
            // Horner form of Σ_{j=0}^{J} A^j η_{−j}: η_{−J} enters first
            let mut state = vec![0.0; p];
            for _ in 0..=*terms {
                let e = shock(stream);
                step(alpha, &mut state, e);
            }
            state
        }
    };

    let mut path = Vec::with_capacity(horizon + 1);
    path.push(state[p - 1]);
    for _ in 0..horizon {
        let e = shock(stream);
        step(alpha, &mut state, e);
        path.push(state[p - 1]);
    }
    if let Some(t) = path.iter().position(|y| !y.is_finite()) {
        return Err(RcarError::NonFinite(format!("simulated value at t = {t} overflowed")));
    }
    Ok(path)
}

fn simulate_individual(spec: &ModelSpec, seed: u64, omega: usize, opts: &SimulationOptions) -> Result<(Vec<f64>, IndividualDraw)> {
    let (mut cs, mut ns, mut ps) = individual_streams(seed, omega);
    let draw = draw_individual(spec, &mut cs, &mut ns, opts.policy, opts.tol)?;
    let init = if draw.stationary {
        opts.init.clone()
    } else {
        // kept nonstationary draws have no stationary law to start from
        InitMode::BurnIn { burn: 0, start: None }
    };
    let path = simulate_path(&draw.coefficients, draw.sigma2, spec.horizon, &init, &mut ps)?;
    Ok((path, draw))
}

/// Simulates a full panel; identical inputs give a bit-identical panel.
pub fn simulate_panel(spec: &ModelSpec, seed: u64, opts: &SimulationOptions) -> Result<Panel> {
    spec.validate()?;
    opts.init.validate(spec.order)?;
    let run = |omega: usize| simulate_individual(spec, seed, omega, opts).map_err(|e| e.at_individual(omega));

    #[cfg(feature = "parallel")]
    let results: Vec<(Vec<f64>, IndividualDraw)> = {
        use rayon::prelude::*;
        (1..=spec.individuals).into_par_iter().map(run).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<(Vec<f64>, IndividualDraw)> = (1..=spec.individuals).map(run).collect::<Result<_>>()?;

    let (observations, draws): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(Panel {
        order: spec.order,
        observations,
        truth: opts.keep_truth.then_some(draws),
        init: Some(opts.init.clone()),
        seed: Some(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseSpec;

    fn spec(dist: CoefficientDistribution, n: usize, t: usize) -> ModelSpec {
        ModelSpec::new(dist, NoiseSpec::constant(1.0).unwrap(), n, t).unwrap()
    }

    fn cv(a: &[f64]) -> CoefficientVector {
        CoefficientVector::new(a.to_vec()).unwrap()
    }

    #[test]
    fn degenerate_draw() {
        let s = spec(CoefficientDistribution::degenerate(vec![0.5]).unwrap(), 1, 5);
        let (mut c, mut n, _) = individual_streams(1, 1);
        let d = draw_individual(&s, &mut c, &mut n, NonstationaryPolicy::Reject, 1e-9).unwrap();
        assert_eq!(d.coefficients, cv(&[0.5]));
        assert_eq!(d.sigma2, 1.0);
        assert!(d.stationary);
        assert_eq!(d.redraws, 0);
    }

    #[test]
    fn explosive_degenerate_exhausts_redraws() {
        let s = spec(CoefficientDistribution::degenerate(vec![1.2]).unwrap(), 1, 5);
        let (mut c, mut n, _) = individual_streams(1, 1);
        let err = draw_individual(&s, &mut c, &mut n, NonstationaryPolicy::Reject, 1e-9).unwrap_err();
        assert_eq!(err, RcarError::RejectionExhausted(MAX_CONSECUTIVE_REJECTIONS));
        let kept = draw_individual(&s, &mut c, &mut n, NonstationaryPolicy::KeepAndFlag, 1e-9).unwrap();
        assert!(!kept.stationary);
    }

    #[test]
    fn two_atom_draws_are_reproducible() {
        let s = spec(CoefficientDistribution::discrete(vec![vec![0.2], vec![0.4]], vec![0.5, 0.5]).unwrap(), 1, 5);
        let pick = |seed| {
            (1..=50)
                .map(|w| {
                    let (mut c, mut n, _) = individual_streams(seed, w);
                    draw_individual(&s, &mut c, &mut n, NonstationaryPolicy::Reject, 1e-9).unwrap().coefficients
                })
                .collect::<Vec<_>>()
        };
        let first = pick(11);
        assert_eq!(first, pick(11));
        assert!(first.contains(&cv(&[0.2])) && first.contains(&cv(&[0.4])));
    }

    #[test]
    fn noiseless_recursion() {
        let init = InitMode::BurnIn { burn: 0, start: Some(vec![1.0]) };
        let mut s = rng::stream(0, 0, Purpose::Innovations);
        let path = simulate_path(&cv(&[0.5]), 0.0, 6, &init, &mut s).unwrap();
        assert_eq!(path, vec![1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625]);
    }

    #[test]
    fn white_noise_is_the_raw_innovation_stream() {
        let init = InitMode::BurnIn { burn: 0, start: None };
        let mut s = rng::stream(3, 1, Purpose::Innovations);
        let path = simulate_path(&cv(&[0.0]), 1.0, 5, &init, &mut s).unwrap();
        let mut raw = rng::stream(3, 1, Purpose::Innovations);
        let expect: Vec<f64> = (0..5).map(|_| raw.sample::<f64, _>(StandardNormal)).collect();
        assert_eq!(path[0], 0.0);
        assert_eq!(&path[1..], expect.as_slice());
    }

    #[test]
    fn exact_stationary_rejects_unit_root() {
        let mut s = rng::stream(0, 0, Purpose::Innovations);
        let err = simulate_path(&cv(&[1.0]), 1.0, 5, &InitMode::ExactStationary, &mut s).unwrap_err();
        assert!(matches!(err, RcarError::Nonstationary(_)));
        let err = simulate_path(&cv(&[0.5]), 1.0, 5, &InitMode::MaTruncation { terms: 0 }, &mut s).unwrap_err();
        assert!(matches!(err, RcarError::InvalidInput(_)));
    }

    #[test]
    fn explosive_path_is_an_error_not_nan() {
        let init = InitMode::BurnIn { burn: 0, start: Some(vec![1e300]) };
        let mut s = rng::stream(0, 0, Purpose::Innovations);
        let err = simulate_path(&cv(&[10.0]), 1.0, 50, &init, &mut s).unwrap_err();
        assert!(matches!(err, RcarError::NonFinite(_)));
    }

    #[test]
    fn panel_is_deterministic_and_single_panel_matches_path() {
        let s = spec(CoefficientDistribution::discrete(vec![vec![0.2, 0.1], vec![0.4, -0.2]], vec![0.3, 0.7]).unwrap(), 25, 12);
        let opts = SimulationOptions { keep_truth: true, ..Default::default() };
        let a = simulate_panel(&s, 99, &opts).unwrap();
        let b = simulate_panel(&s, 99, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.truth.as_ref().unwrap().len(), 25);

        let one = spec(CoefficientDistribution::degenerate(vec![0.5]).unwrap(), 1, 8);
        let panel = simulate_panel(&one, 5, &opts).unwrap();
        let (_, _, mut ps) = individual_streams(5, 1);
        let path = simulate_path(&cv(&[0.5]), 1.0, 8, &InitMode::ExactStationary, &mut ps).unwrap();
        assert_eq!(panel.observations[0], path);
    }

    #[test]
    fn individuals_do_not_share_streams() {
        let s10 = spec(CoefficientDistribution::degenerate(vec![0.5]).unwrap(), 10, 6);
        let s4 = spec(CoefficientDistribution::degenerate(vec![0.5]).unwrap(), 4, 6);
        let big = simulate_panel(&s10, 1, &SimulationOptions::default()).unwrap();
        let small = simulate_panel(&s4, 1, &SimulationOptions::default()).unwrap();
        assert_eq!(&big.observations[..4], small.observations.as_slice());
        assert_ne!(big.observations[0], big.observations[1]);
    }

    #[test]
    fn keep_and_flag_records_violations() {
        let s = spec(CoefficientDistribution::discrete(vec![vec![0.5], vec![1.05]], vec![0.5, 0.5]).unwrap(), 40, 5);
        let opts = SimulationOptions {
            policy: NonstationaryPolicy::KeepAndFlag,
            keep_truth: true,
            ..Default::default()
        };
        let panel = simulate_panel(&s, 2, &opts).unwrap();
        let flagged = panel.truth.unwrap().iter().filter(|d| !d.stationary).count();
        assert!(flagged > 0 && flagged < 40);
    }

    #[test]
    fn panel_errors_carry_individual() {
        let s = spec(CoefficientDistribution::degenerate(vec![1.2]).unwrap(), 3, 5);
        match simulate_panel(&s, 0, &SimulationOptions::default()).unwrap_err() {
            RcarError::Individual { omega, source } => {
                assert_eq!(omega, 1);
                assert!(matches!(*source, RcarError::RejectionExhausted(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn panel_validation() {
        assert!(Panel::from_observations(2, vec![vec![0.0; 2]]).is_err());
        assert!(Panel::from_observations(1, vec![vec![0.0; 3], vec![0.0; 4]]).is_err());
        assert!(Panel::from_observations(1, vec![vec![0.0, f64::NAN]]).is_err());
        let p = Panel::from_observations(1, vec![vec![0.0; 4]; 2]).unwrap();
        assert_eq!((p.individuals(), p.horizon()), (2, 3));
    }
}
