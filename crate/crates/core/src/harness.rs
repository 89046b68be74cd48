//! Monte Carlo experiments for the cross-sectional limit theory:
//! consistency of `Υ̂_N(u)` as `N → ∞`, asymptotic normality of
//! `√N·vec(Υ̂_N(u) − Υ(u))`, and convergence of `Â_T(ω)` as `T → ∞`.
//!
//! Replication `r` at grid point `g` uses seed `derive(derive(seed, g), r)`,
//! so results depend only on the plan. Replications may run in parallel;
//! they are collected in index order before any reduction.

use serde::{Deserialize, Serialize};

use crate::error::{RcarError, Result};
use crate::estimate::{a_hat_individual, build_states, upsilon_hat};
use crate::linalg::{self, Matrix};
use crate::model::{companion_from_coeffs, is_second_order_stationary, AtomSet, ExpectationMode, ModelSpec};
use crate::moments::{self, SeriesOptions};
use crate::rng::derive_seed;
use crate::simulate::{draw_individual, individual_streams, simulate_panel, simulate_path, InitMode, Panel, SimulationOptions};
use crate::stats::{self, SlopeFit};

/// Minimum replications for skewness/kurtosis/KS screens.
pub const MIN_NORMALITY_REPLICATIONS: usize = 50;

/// Screens are `|statistic| < NORMALITY_SE_MULTIPLE · SE`.
pub const NORMALITY_SE_MULTIPLE: f64 = 4.0;

/// Allowed relative change of the estimated limiting covariance between the two largest `N`.
pub const SIGMA_STABILITY_TOL: f64 = 0.2;

/// Difference statistic above which the stationarity diagnostic flags a panel.
pub const STATIONARITY_FLAG_SE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variable", content = "grid", rename_all = "snake_case")]
pub enum Sweep {
    /// Sweep the number of individuals `N`.
    Individuals(Vec<usize>),
    /// Sweep the horizon `T`.
    Horizon(Vec<usize>),
}

impl Sweep {
    pub fn grid(&self) -> &[usize] {
        match self {
            Sweep::Individuals(g) | Sweep::Horizon(g) => g,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Bias,
    Rmse,
    Slope,
    Normality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Template; the swept dimension is overridden per grid point.
    pub spec: ModelSpec,
    pub sweep: Sweep,
    pub replications: usize,
    #[serde(default = "default_lags")]
    pub lags: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_statistics")]
    pub statistics: Vec<Statistic>,
    #[serde(default)]
    pub init: InitMode,
    /// Zero innovations (`Â_T` experiments only).
    #[serde(default)]
    pub noiseless: bool,
    #[serde(default)]
    pub series: SeriesOptions,
}

fn default_lags() -> Vec<usize> {
    vec![0]
}

fn default_statistics() -> Vec<Statistic> {
    vec![Statistic::Bias, Statistic::Rmse, Statistic::Slope]
}

impl ExperimentPlan {
    pub fn new(spec: ModelSpec, sweep: Sweep, replications: usize, seed: u64) -> Self {
        Self {
            spec,
            sweep,
            replications,
            lags: default_lags(),
            seed,
            statistics: default_statistics(),
            init: InitMode::ExactStationary,
            noiseless: false,
            series: SeriesOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.sweep.grid();
        if grid.is_empty() {
            return Err(RcarError::Precondition("sweep grid is empty".into()));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RcarError::Precondition(format!("sweep grid {grid:?} is not strictly increasing")));
        }
        if grid[0] == 0 {
            return Err(RcarError::Precondition("sweep grid values must be ≥ 1".into()));
        }
        if self.replications < 2 {
            return Err(RcarError::Precondition("at least two replications are needed".into()));
        }
        if self.statistics.contains(&Statistic::Normality) && self.replications < MIN_NORMALITY_REPLICATIONS {
            return Err(RcarError::Precondition(format!(
                "normality statistics need R ≥ {MIN_NORMALITY_REPLICATIONS}, got {}",
                self.replications
            )));
        }
        if self.lags.is_empty() {
            return Err(RcarError::Precondition("no lags requested".into()));
        }
        self.init.validate(self.spec.order)?;
        let mut spec = self.spec.clone();
        match &self.sweep {
            Sweep::Individuals(g) => spec.individuals = g[0],
            Sweep::Horizon(g) => spec.horizon = g[0],
        }
        spec.validate()
    }

    fn spec_at(&self, value: usize) -> ModelSpec {
        let mut spec = self.spec.clone();
        match self.sweep {
            Sweep::Individuals(_) => spec.individuals = value,
            Sweep::Horizon(_) => spec.horizon = value,
        }
        spec
    }

    fn sim_options(&self) -> SimulationOptions {
        SimulationOptions {
            init: self.init.clone(),
            ..Default::default()
        }
    }
}

fn replicate<T, F>(plan: &ExperimentPlan, grid_index: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let base = derive_seed(plan.seed, grid_index as u64);
    let seeds: Vec<u64> = (0..plan.replications).map(|r| derive_seed(base, r as u64)).collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seeds.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seeds.into_iter().map(f).collect()
    }
}

/// Error statistics at one `(grid value, lag)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellStats {
    pub grid_value: usize,
    pub lag: usize,
    pub replications: usize,
    /// Per-entry mean error (row-major rows).
    pub bias: Vec<Vec<f64>>,
    pub bias_se: Vec<Vec<f64>>,
    /// Per-entry root mean squared error.
    pub rmse_entries: Vec<Vec<f64>>,
    /// Root of the entry-averaged mean squared error.
    pub rmse: f64,
    pub rmse_se: f64,
}

fn cell_stats(grid_value: usize, lag: usize, errors: &[Matrix]) -> CellStats {
    let (rows, cols) = errors[0].shape();
    let r = errors.len();
    let entry = |i: usize, j: usize| -> Vec<f64> { errors.iter().map(|e| e[(i, j)]).collect() };
    let table = |f: &dyn Fn(&[f64]) -> f64| -> Vec<Vec<f64>> {
        (0..rows).map(|i| (0..cols).map(|j| f(&entry(i, j))).collect()).collect()
    };
    let mse_per_rep: Vec<f64> = errors.iter().map(|e| e.iter().map(|x| x * x).sum::<f64>() / (rows * cols) as f64).collect();
    let mse = stats::mean(&mse_per_rep);
    let rmse = mse.sqrt();
    let rmse_se = if rmse > 0.0 { stats::std_error(&mse_per_rep) / (2.0 * rmse) } else { 0.0 };
    CellStats {
        grid_value,
        lag,
        replications: r,
        bias: table(&stats::mean),
        bias_se: table(&stats::std_error),
        rmse_entries: table(&|xs: &[f64]| (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()),
        rmse,
        rmse_se,
    }
}

fn log_log_slope(cells: &[&CellStats]) -> Option<SlopeFit> {
    if cells.len() < 2 || cells.iter().any(|c| c.rmse <= 0.0) {
        return None;
    }
    let x: Vec<f64> = cells.iter().map(|c| (c.grid_value as f64).ln()).collect();
    let y: Vec<f64> = cells.iter().map(|c| c.rmse.ln()).collect();
    let se: Vec<f64> = cells.iter().map(|c| c.rmse_se / c.rmse).collect();
    Some(stats::fit_slope(&x, &y, &se))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LagSlope {
    pub lag: usize,
    pub fit: Option<SlopeFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedLag {
    pub grid_value: usize,
    pub lag: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyResult {
    pub replications: usize,
    /// Target `Υ(u)` per requested lag (row-major rows).
    pub targets: Vec<(usize, Vec<Vec<f64>>)>,
    pub cells: Vec<CellStats>,
    pub slopes: Vec<LagSlope>,
    pub skipped: Vec<SkippedLag>,
    pub approximate_targets: bool,
}

fn stationary_atoms(plan: &ExperimentPlan) -> Result<AtomSet> {
    let tol = crate::model::DEFAULT_BOUNDARY_TOL;
    let mode = ExpectationMode::default();
    let verdict = is_second_order_stationary(&plan.spec.coefficients, tol, mode)?;
    if !verdict.stationary {
        return Err(RcarError::Nonstationary(format!(
            "the coefficient law is not second-order stationary (ρ(E{{A⊗A}}) = {}, max atom radius {}); \
             cross-sectional limits require every A(ω) inside the unit circle",
            verdict.mean_kron_radius, verdict.max_atom_radius
        )));
    }
    AtomSet::resolve(&plan.spec.coefficients, mode, tol)
}

fn lag_fits(spec: &ModelSpec, lag: usize) -> bool {
    lag + spec.order <= spec.horizon + 1
}

/// RMSE of `Υ̂_N(u)` over an `N` sweep, with log–log slope per lag.
pub fn run_consistency(plan: &ExperimentPlan) -> Result<ConsistencyResult> {
    plan.validate()?;
    let Sweep::Individuals(grid) = &plan.sweep else {
        return Err(RcarError::Precondition("consistency experiments sweep N".into()));
    };
    let atoms = stationary_atoms(plan)?;
    let omega_bar = plan.spec.mean_omega();
    let mut targets = Vec::new();
    for &u in &plan.lags {
        targets.push((u, moments::upsilon_series(&atoms, &omega_bar, u, &plan.series)?.value));
    }

    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for (g, &n) in grid.iter().enumerate() {
        let spec = plan.spec_at(n);
        let active: Vec<&(usize, Matrix)> = targets
            .iter()
            .filter(|(u, _)| {
                let ok = lag_fits(&spec, *u);
                if !ok {
                    skipped.push(SkippedLag {
                        grid_value: n,
                        lag: *u,
                        reason: format!("lag {u} needs T ≥ {} with p = {}", u + spec.order - 1, spec.order),
                    });
                }
                ok
            })
            .collect();
        if active.is_empty() {
            continue;
        }
        let opts = plan.sim_options();
        let errors: Vec<Vec<Matrix>> = replicate(plan, g, |seed| {
            let panel = simulate_panel(&spec, seed, &opts)?;
            active
                .iter()
                .map(|(u, target)| Ok(upsilon_hat(&panel, *u)?.value - target))
                .collect()
        })?;
        for (k, (u, _)) in active.iter().enumerate() {
            let per_lag: Vec<Matrix> = errors.iter().map(|e| e[k].clone()).collect();
            cells.push(cell_stats(n, *u, &per_lag));
        }
    }

    let slopes = plan
        .lags
        .iter()
        .map(|&u| {
            let lag_cells: Vec<&CellStats> = cells.iter().filter(|c| c.lag == u).collect();
            LagSlope {
                lag: u,
                fit: log_log_slope(&lag_cells),
            }
        })
        .collect();

    Ok(ConsistencyResult {
        replications: plan.replications,
        targets: targets.into_iter().map(|(u, m)| (u, linalg::rows(&m))).collect(),
        cells,
        slopes,
        skipped,
        approximate_targets: atoms.approximate,
    })
}

/// Normality screen for one coordinate of `√N·vec(Υ̂(u) − Υ(u))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateScreen {
    pub lag: usize,
    /// Row and column of the entry in `Υ(u)` (0-based).
    pub entry: (usize, usize),
    pub mean: f64,
    pub mean_se: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub skewness_se: f64,
    pub excess_kurtosis: f64,
    pub kurtosis_se: f64,
    pub ks_distance: f64,
    pub ks_critical: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltPoint {
    pub individuals: usize,
    pub replications: usize,
    pub coordinates: Vec<CoordinateScreen>,
    /// Empirical covariance of the stacked `√N` errors (lags in plan order).
    pub sigma: Vec<Vec<f64>>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltResult {
    pub points: Vec<CltPoint>,
    /// Relative Frobenius change of `Σ̂` between the two largest `N`.
    pub sigma_relative_change: Option<f64>,
    pub sigma_stable: Option<bool>,
    pub skipped: Vec<SkippedLag>,
}

fn screen(lag: usize, entry: (usize, usize), xs: &[f64]) -> CoordinateScreen {
    let r = xs.len();
    let skew = stats::skewness(xs);
    let kurt = stats::excess_kurtosis(xs);
    let s_se = stats::skewness_se(r);
    let k_se = stats::kurtosis_se(r);
    let ks = stats::ks_distance_studentized(xs);
    let crit = stats::ks_critical_1pct(r);
    CoordinateScreen {
        lag,
        entry,
        mean: stats::mean(xs),
        mean_se: stats::std_error(xs),
        std_dev: stats::variance(xs).sqrt(),
        skewness: skew,
        skewness_se: s_se,
        excess_kurtosis: kurt,
        kurtosis_se: k_se,
        ks_distance: ks,
        ks_critical: crit,
        passes: skew.abs() < NORMALITY_SE_MULTIPLE * s_se && kurt.abs() < NORMALITY_SE_MULTIPLE * k_se && ks < crit,
    }
}

/// Normality screens of `√N·vec(Υ̂_N(u) − Υ(u))` at each `N` in the sweep.
pub fn run_clt(plan: &ExperimentPlan) -> Result<CltResult> {
    plan.validate()?;
    if plan.replications < MIN_NORMALITY_REPLICATIONS {
        return Err(RcarError::Precondition(format!(
            "normality screens need R ≥ {MIN_NORMALITY_REPLICATIONS}, got {}",
            plan.replications
        )));
    }
    let Sweep::Individuals(grid) = &plan.sweep else {
        return Err(RcarError::Precondition("CLT experiments sweep (or fix) N".into()));
    };
    let atoms = stationary_atoms(plan)?;
    let omega_bar = plan.spec.mean_omega();
    let p = plan.spec.order;
    let mut skipped = Vec::new();
    let lags: Vec<usize> = plan
        .lags
        .iter()
        .copied()
        .filter(|&u| {
            let ok = lag_fits(&plan.spec, u);
            if !ok {
                skipped.push(SkippedLag {
                    grid_value: plan.spec.horizon,
                    lag: u,
                    reason: format!("lag {u} exceeds the horizon"),
                });
            }
            ok
        })
        .collect();
    if lags.is_empty() {
        return Err(RcarError::Precondition("no requested lag fits the horizon".into()));
    }
    let targets: Vec<Matrix> = lags
        .iter()
        .map(|&u| moments::upsilon_series(&atoms, &omega_bar, u, &plan.series).map(|s| s.value))
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    for (g, &n) in grid.iter().enumerate() {
        let spec = plan.spec_at(n);
        let opts = plan.sim_options();
        let scale = (n as f64).sqrt();
        let stacked: Vec<Vec<f64>> = replicate(plan, g, |seed| {
            let panel = simulate_panel(&spec, seed, &opts)?;
            let mut out = Vec::with_capacity(lags.len() * p * p);
            for (&u, target) in lags.iter().zip(&targets) {
                let err = (upsilon_hat(&panel, u)?.value - target) * scale;
                out.extend(linalg::vec(&err).iter().copied());
            }
            Ok(out)
        })?;

        let dim = stacked[0].len();
        let mut coordinates = Vec::with_capacity(dim);
        for k in 0..dim {
            let xs: Vec<f64> = stacked.iter().map(|s| s[k]).collect();
            let lag = lags[k / (p * p)];
            let within = k % (p * p);
            coordinates.push(screen(lag, (within % p, within / p), &xs));
        }
        let means: Vec<f64> = (0..dim).map(|k| stats::mean(&stacked.iter().map(|s| s[k]).collect::<Vec<_>>())).collect();
        let r = stacked.len() as f64;
        let sigma = Matrix::from_fn(dim, dim, |i, j| {
            stacked.iter().map(|s| (s[i] - means[i]) * (s[j] - means[j])).sum::<f64>() / (r - 1.0)
        });
        let all_pass = coordinates.iter().all(|c| c.passes);
        points.push((
            CltPoint {
                individuals: n,
                replications: plan.replications,
                coordinates,
                sigma: linalg::rows(&sigma),
                all_pass,
            },
            sigma,
        ));
    }

    let sigma_relative_change = (points.len() >= 2).then(|| {
        let a = &points[points.len() - 2].1;
        let b = &points[points.len() - 1].1;
        (b - a).norm() / b.norm()
    });
    Ok(CltResult {
        points: points.into_iter().map(|(p, _)| p).collect(),
        sigma_stable: sigma_relative_change.map(|c| c < SIGMA_STABILITY_TOL),
        sigma_relative_change,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AhatPoint {
    pub horizon: usize,
    pub replications: usize,
    /// Mean Frobenius error `‖Â_T − A(ω)‖`.
    pub mean_error: f64,
    pub mean_error_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AhatResult {
    pub points: Vec<AhatPoint>,
    pub slope: Option<SlopeFit>,
}

/// Decay of `‖Â_T − A(ω)‖` over a `T` sweep; one coefficient draw per replication.
pub fn run_ahat_convergence(plan: &ExperimentPlan) -> Result<AhatResult> {
    plan.validate()?;
    let Sweep::Horizon(grid) = &plan.sweep else {
        return Err(RcarError::Precondition("Â_T convergence experiments sweep T".into()));
    };
    let p = plan.spec.order;
    let mut points = Vec::new();
    for (g, &t) in grid.iter().enumerate() {
        let spec = plan.spec_at(t);
        let errs: Vec<f64> = replicate(plan, g, |seed| {
            let (mut cs, mut ns, mut ps) = individual_streams(seed, 1);
            let draw = draw_individual(&spec, &mut cs, &mut ns, Default::default(), crate::model::DEFAULT_BOUNDARY_TOL)?;
            let sigma2 = if plan.noiseless { 0.0 } else { draw.sigma2 };
            let path = simulate_path(&draw.coefficients, sigma2, t, &plan.init, &mut ps)?;
            let fit = a_hat_individual(&path, p)?;
            Ok((fit.a_hat - companion_from_coeffs(&draw.coefficients).matrix()).norm())
        })?;
        points.push(AhatPoint {
            horizon: t,
            replications: errs.len(),
            mean_error: stats::mean(&errs),
            mean_error_se: stats::std_error(&errs),
        });
    }
    let slope = (points.len() >= 2 && points.iter().all(|pt| pt.mean_error > 0.0)).then(|| {
        let x: Vec<f64> = points.iter().map(|pt| (pt.horizon as f64).ln()).collect();
        let y: Vec<f64> = points.iter().map(|pt| pt.mean_error.ln()).collect();
        let se: Vec<f64> = points.iter().map(|pt| pt.mean_error_se / pt.mean_error).collect();
        stats::fit_slope(&x, &y, &se)
    });
    Ok(AhatResult { points, slope })
}

/// Stationary-start check: do the first two observable states share first and second moments?
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityDiagnostic {
    pub individuals: usize,
    pub mean_start: Vec<f64>,
    pub mean_next: Vec<f64>,
    pub second_moment_start: Vec<Vec<f64>>,
    pub second_moment_next: Vec<Vec<f64>>,
    /// Largest `|difference| / SE` over all mean and second-moment entries.
    pub max_statistic: f64,
    pub flagged: bool,
    /// Fewer than 200 individuals.
    pub small_sample: bool,
}

fn paired_statistic(diffs: &[f64]) -> f64 {
    let m = stats::mean(diffs);
    let se = stats::std_error(diffs);
    if m == 0.0 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY
    } else {
        (m / se).abs()
    }
}

pub fn run_stationarity_diagnostic(panel: &Panel) -> Result<StationarityDiagnostic> {
    panel.validate()?;
    let p = panel.order;
    let n = panel.individuals();
    let pairs: Vec<(linalg::Vector, linalg::Vector)> = panel
        .observations
        .iter()
        .map(|s| {
            let st = build_states(s, p)?;
            Ok((st.states[0].clone(), st.states[1].clone()))
        })
        .collect::<Result<_>>()?;

    let mut max_stat = 0.0_f64;
    let mut mean_start = vec![0.0; p];
    let mut mean_next = vec![0.0; p];
    for i in 0..p {
        let d: Vec<f64> = pairs.iter().map(|(a, b)| b[i] - a[i]).collect();
        max_stat = max_stat.max(paired_statistic(&d));
        mean_start[i] = pairs.iter().map(|(a, _)| a[i]).sum::<f64>() / n as f64;
        mean_next[i] = pairs.iter().map(|(_, b)| b[i]).sum::<f64>() / n as f64;
    }
    let mut m0 = Matrix::zeros(p, p);
    let mut m1 = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let d: Vec<f64> = pairs.iter().map(|(a, b)| b[i] * b[j] - a[i] * a[j]).collect();
            max_stat = max_stat.max(paired_statistic(&d));
            m0[(i, j)] = pairs.iter().map(|(a, _)| a[i] * a[j]).sum::<f64>() / n as f64;
            m1[(i, j)] = pairs.iter().map(|(_, b)| b[i] * b[j]).sum::<f64>() / n as f64;
        }
    }
    Ok(StationarityDiagnostic {
        individuals: n,
        mean_start,
        mean_next,
        second_moment_start: linalg::rows(&m0),
        second_moment_next: linalg::rows(&m1),
        max_statistic: max_stat,
        flagged: max_stat > STATIONARITY_FLAG_SE,
        small_sample: n < 200,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientDistribution, NoiseSpec};

    fn spec(dist: CoefficientDistribution, n: usize, t: usize) -> ModelSpec {
        ModelSpec::new(dist, NoiseSpec::constant(1.0).unwrap(), n, t).unwrap()
    }

    fn white(n: usize, t: usize) -> ModelSpec {
        spec(CoefficientDistribution::degenerate(vec![0.0]).unwrap(), n, t)
    }

    #[test]
    fn plan_validation() {
        let mut plan = ExperimentPlan::new(white(10, 5), Sweep::Individuals(vec![100, 50]), 20, 1);
        assert!(matches!(plan.validate(), Err(RcarError::Precondition(_))));
        plan.sweep = Sweep::Individuals(vec![50, 100]);
        plan.validate().unwrap();
        plan.statistics.push(Statistic::Normality);
        assert!(matches!(plan.validate(), Err(RcarError::Precondition(_))));
    }

    #[test]
    fn clt_refuses_small_r() {
        let mut plan = ExperimentPlan::new(white(10, 5), Sweep::Individuals(vec![100]), 10, 1);
        plan.statistics = vec![Statistic::Normality];
        assert!(matches!(run_clt(&plan), Err(RcarError::Precondition(_))));
        plan.statistics = vec![];
        assert!(matches!(run_clt(&plan), Err(RcarError::Precondition(_))));
    }

    #[test]
    fn consistency_white_noise() {
        let mut plan = ExperimentPlan::new(white(1, 5), Sweep::Individuals(vec![100, 400, 1600]), 60, 3);
        plan.lags = vec![0, 1, 9];
        let res = run_consistency(&plan).unwrap();
        let r0: Vec<f64> = res.cells.iter().filter(|c| c.lag == 0).map(|c| c.rmse).collect();
        assert!(r0[2] < r0[0]);
        assert_eq!(res.targets[0].1, vec![vec![1.0]]);
        assert_eq!(res.skipped.len(), 3);
        assert!(res.skipped.iter().all(|s| s.lag == 9));
        assert!(res.slopes.iter().find(|s| s.lag == 9).unwrap().fit.is_none());
    }

    #[test]
    fn consistency_refuses_nonstationary() {
        let s = spec(CoefficientDistribution::discrete(vec![vec![0.5], vec![1.1]], vec![0.5, 0.5]).unwrap(), 1, 5);
        let plan = ExperimentPlan::new(s, Sweep::Individuals(vec![10, 20]), 5, 0);
        assert!(matches!(run_consistency(&plan), Err(RcarError::Nonstationary(_))));
    }

    #[test]
    fn experiments_are_reproducible() {
        let plan = ExperimentPlan::new(white(1, 4), Sweep::Individuals(vec![20, 40]), 8, 42);
        assert_eq!(run_consistency(&plan).unwrap(), run_consistency(&plan).unwrap());
    }

    #[test]
    fn standard_errors_shrink_with_replications() {
        let mut plan = ExperimentPlan::new(white(1, 5), Sweep::Individuals(vec![200]), 100, 7);
        let small = run_consistency(&plan).unwrap().cells[0].clone();
        plan.replications = 400;
        let big = run_consistency(&plan).unwrap().cells[0].clone();
        let ratio = big.bias_se[0][0] / small.bias_se[0][0];
        assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn noiseless_ahat_is_exact() {
        let s = spec(CoefficientDistribution::degenerate(vec![0.5]).unwrap(), 1, 10);
        let mut plan = ExperimentPlan::new(s, Sweep::Horizon(vec![20, 80, 320]), 4, 1);
        plan.noiseless = true;
        plan.init = InitMode::BurnIn { burn: 0, start: Some(vec![1.0]) };
        let res = run_ahat_convergence(&plan).unwrap();
        assert!(res.points.iter().all(|p| p.mean_error == 0.0));
        assert!(res.slope.is_none());
    }

    #[test]
    fn near_unit_root_still_converges() {
        let s = spec(CoefficientDistribution::degenerate(vec![0.99]).unwrap(), 1, 10);
        let plan = ExperimentPlan::new(s, Sweep::Horizon(vec![200, 800, 3200]), 60, 5);
        let res = run_ahat_convergence(&plan).unwrap();
        assert!(res.slope.unwrap().slope < 0.0);
    }

    #[test]
    fn stationarity_diagnostic_cases() {
        let s = spec(CoefficientDistribution::degenerate(vec![0.5]).unwrap(), 400, 3);
        let panel = simulate_panel(&s, 8, &SimulationOptions::default()).unwrap();
        assert!(!run_stationarity_diagnostic(&panel).unwrap().flagged);

        let opts = SimulationOptions {
            init: InitMode::BurnIn { burn: 0, start: Some(vec![10.0]) },
            ..Default::default()
        };
        let panel = simulate_panel(&s, 8, &opts).unwrap();
        assert!(run_stationarity_diagnostic(&panel).unwrap().flagged);

        let zeros = Panel::from_observations(2, vec![vec![0.0; 5]; 300]).unwrap();
        let d = run_stationarity_diagnostic(&zeros).unwrap();
        assert_eq!(d.max_statistic, 0.0);
        assert!(!d.flagged && !d.small_sample);
    }
}
