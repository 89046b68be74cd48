use std::path::{Path, PathBuf};

use serde::Serialize;

use rcar::error::RcarError;
use rcar::estimate::{estimate_cross_sectional, estimate_per_individual, upsilon_hat, OmegaMethod};
use rcar::harness::{self, AhatResult, CltResult, ConsistencyResult, ExperimentPlan};
use rcar::linalg::{rows, Matrix};
use rcar::model::{char_poly_roots, is_second_order_stationary, is_stationary_draw, AtomSet, CoefficientDistribution, SecondOrderVerdict};
use rcar::moments::{self, ExistenceReport};
use rcar::simulate::{simulate_panel, Panel, SimulationOptions};

use crate::config::{Config, ExperimentKind, Pathway};
use crate::error::{CliError, Result};
use crate::panel_io::{read_panel, write_atomic, write_panel};
use crate::report::{Report, SCHEMA_VERSION};

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize)]
pub struct AtomVerdict {
    pub index: usize,
    pub weight: f64,
    pub coefficients: Vec<f64>,
    pub spectral_radius: f64,
    /// Characteristic roots as `[re, im]`.
    pub roots: Vec<[f64; 2]>,
    pub stationary: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stationarity {
    /// `"stationary"` or `"nonstationary"`.
    pub verdict: &'static str,
    pub second_order: SecondOrderVerdict,
    /// Empty for gaussian laws, whose atoms are sampled.
    pub atoms: Vec<AtomVerdict>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LagTable {
    pub lag: usize,
    pub value: Rows,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalTable {
    pub atom: usize,
    pub gamma: Vec<LagTable>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UpsilonEntry {
    pub lag: usize,
    /// Truncated series over the moment sequence.
    pub series: Rows,
    /// Probability-weighted per-atom closed form.
    pub closed_form: Rows,
    pub terms: usize,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSample {
    pub lambda: f64,
    pub re: Rows,
    pub im: Rows,
    pub terms: usize,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeResult {
    pub order: usize,
    pub mean_noise_variance: f64,
    pub stationarity: Stationarity,
    pub conditional: Option<Vec<ConditionalTable>>,
    pub unconditional: Option<Vec<UpsilonEntry>>,
    pub spectral_existence: Option<ExistenceReport>,
    pub spectral_density: Option<Vec<SpectralSample>>,
    /// Expectations were taken over a Monte Carlo sample of the law.
    pub approximate: bool,
}

fn atom_verdicts(dist: &CoefficientDistribution, tol: f64) -> Result<Vec<AtomVerdict>> {
    let listed: Vec<(&rcar::model::CoefficientVector, f64)> = match dist {
        CoefficientDistribution::Degenerate { alpha } => vec![(alpha, 1.0)],
        CoefficientDistribution::Discrete { atoms, weights } => atoms.iter().zip(weights.iter().copied()).collect(),
        CoefficientDistribution::Gaussian { .. } => Vec::new(),
    };
    listed
        .into_iter()
        .enumerate()
        .map(|(i, (c, w))| {
            let roots = char_poly_roots(c).map_err(CliError::Numerical)?;
            Ok(AtomVerdict {
                index: i,
                weight: w,
                coefficients: c.as_slice().to_vec(),
                spectral_radius: roots.iter().fold(0.0_f64, |m, z| m.max(z.norm())),
                roots: roots.iter().map(|z| [z.re, z.im]).collect(),
                stationary: is_stationary_draw(c, tol).map_err(CliError::Numerical)?,
            })
        })
        .collect()
}

/// Stationarity verdicts, covariance tables and spectral samples for `[model]`.
pub fn cmd_analyze(config: &Config) -> Result<Report<AnalyzeResult>> {
    let spec = config.model()?;
    let opts = &config.analysis;
    let tol = opts.boundary_tol;
    let second_order = is_second_order_stationary(&spec.coefficients, tol, opts.expectation).map_err(CliError::from_model)?;
    let atoms_report = atom_verdicts(&spec.coefficients, tol)?;
    let omega_bar = spec.mean_omega();
    let mut result = AnalyzeResult {
        order: spec.order,
        mean_noise_variance: spec.noise.mean_variance(),
        stationarity: Stationarity {
            verdict: if second_order.stationary { "stationary" } else { "nonstationary" },
            second_order: second_order.clone(),
            atoms: atoms_report,
        },
        conditional: None,
        unconditional: None,
        spectral_existence: None,
        spectral_density: None,
        approximate: second_order.approximate,
    };
    if !second_order.stationary {
        return Ok(Report::new("analyze", config, result));
    }

    let atoms = AtomSet::resolve(&spec.coefficients, opts.expectation, tol).map_err(CliError::from_model)?;
    if !atoms.approximate {
        let mut tables = Vec::with_capacity(atoms.atoms.len());
        for (i, a) in atoms.atoms.iter().enumerate() {
            let set = moments::conditional_covariances(a, &omega_bar, opts.max_lag).map_err(CliError::Numerical)?;
            tables.push(ConditionalTable {
                atom: i,
                gamma: set.lags.iter().enumerate().map(|(u, m)| LagTable { lag: u, value: rows(m) }).collect(),
            });
        }
        result.conditional = Some(tables);
    }

    let mut ups = Vec::with_capacity(opts.max_lag + 1);
    for u in 0..=opts.max_lag {
        let s = moments::upsilon_series(&atoms, &omega_bar, u, &opts.series).map_err(CliError::from_model)?;
        let c = moments::upsilon_closed_form(&atoms, &omega_bar, u).map_err(CliError::from_model)?;
        ups.push(UpsilonEntry {
            lag: u,
            series: rows(&s.value),
            closed_form: rows(&c),
            terms: s.terms,
            tail_bound: s.tail_bound,
        });
    }
    result.unconditional = Some(ups);

    let existence = moments::spectral_existence_check(&atoms, tol).map_err(CliError::Numerical)?;
    if existence.exists {
        let mut samples = Vec::with_capacity(opts.lambdas.len());
        for &lambda in &opts.lambdas {
            let s = moments::spectral_density(&atoms, &omega_bar, lambda, &opts.series).map_err(CliError::from_model)?;
            samples.push(SpectralSample {
                lambda,
                re: s.value.row_iter().map(|r| r.iter().map(|z| z.re).collect()).collect(),
                im: s.value.row_iter().map(|r| r.iter().map(|z| z.im).collect()).collect(),
                terms: s.terms,
                tail_bound: s.tail_bound,
            });
        }
        result.spectral_density = Some(samples);
    }
    result.spectral_existence = Some(existence);
    Ok(Report::new("analyze", config, result))
}

/// Printed after `simulate` and stored next to the panel as `NAME.meta.json`.
#[derive(Debug, Clone, Serialize)]
pub struct SimulateRecord {
    pub seed: u64,
    pub individuals: usize,
    pub horizon: usize,
    pub order: usize,
    pub rows: usize,
    pub panel_path: PathBuf,
    pub truth_path: Option<PathBuf>,
    /// Individuals whose first coefficient draw was rejected as nonstationary.
    pub redrawn_individuals: usize,
    pub kept_nonstationary: usize,
}

pub fn manifest_path(panel: &Path) -> PathBuf {
    let stem = panel.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    panel.with_file_name(format!("{stem}.meta.json"))
}

/// Simulates `[model]` and writes the panel, its truth sidecar (when
/// `simulation.keep_truth`) and a manifest carrying the seed and config.
pub fn cmd_simulate(config: &Config, seed: u64, out: &Path) -> Result<(Panel, Report<SimulateRecord>)> {
    let spec = config.model()?;
    let opts: &SimulationOptions = &config.simulation;
    opts.init.validate(spec.order).map_err(CliError::from_model)?;
    let panel = simulate_panel(spec, seed, opts).map_err(CliError::from_model)?;
    let written = write_panel(out, &panel)?;
    let draws = panel.truth.as_deref().unwrap_or(&[]);
    let record = SimulateRecord {
        seed,
        individuals: panel.individuals(),
        horizon: panel.horizon(),
        order: panel.order,
        rows: panel.individuals() * (panel.horizon() + 1),
        panel_path: out.to_path_buf(),
        truth_path: written,
        redrawn_individuals: draws.iter().filter(|d| d.redraws > 0).count(),
        kept_nonstationary: draws.iter().filter(|d| !d.stationary).count(),
    };
    let mut effective = config.clone();
    effective.seed = seed;
    let report = Report::new("simulate", &effective, record);
    report.write(&manifest_path(out))?;
    Ok((panel, report))
}

#[derive(Debug, Clone, Serialize)]
pub struct PanelSummary {
    pub path: PathBuf,
    pub order: usize,
    pub individuals: usize,
    pub horizon: usize,
    pub has_truth: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LagHat {
    pub lag: usize,
    pub pairs_per_individual: usize,
    pub value: Rows,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossSectionalOut {
    pub upsilon_hat: Vec<LagHat>,
    /// `Υ̂(u) Υ̂(0)⁻¹`; for `p = 1` the scalar ratios `υ̂(u)/υ̂(0)`.
    pub covariance_ratios: Vec<LagTable>,
    pub omega_hat: Option<Rows>,
    /// Cross-sectional standard error of `Ω̂` (`p = 1`).
    pub omega_hat_se: Option<f64>,
    pub omega_method: OmegaMethod,
    /// `Ω̂` minus the sample mean of the true `σ²`, in standard errors (`p = 1` with truth).
    pub omega_error_in_se: Option<f64>,
    /// Why ratios and `Ω̂` are missing when `Υ̂(0)` cannot be inverted.
    pub ratio_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IndividualOut {
    pub omega: usize,
    pub alpha_hat: Vec<f64>,
    pub residual_variance: f64,
    pub spectral_radius: f64,
    pub alpha_error: Option<Vec<f64>>,
    pub sigma2_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentEntry {
    pub v: usize,
    pub u: usize,
    pub value: Rows,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerIndividualOut {
    pub mean_a_hat: Rows,
    pub mean_alpha_hat: Vec<f64>,
    pub mean_omega_hat: Rows,
    pub explosive_fraction: f64,
    pub short_series_warning: bool,
    pub moments: Vec<MomentEntry>,
    pub individuals: Vec<IndividualOut>,
    /// Root mean squared `α̂ − α` per coefficient, when truth is present.
    pub alpha_rmse: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateResult {
    pub panel: PanelSummary,
    pub pathway: Pathway,
    pub cross_sectional: Option<CrossSectionalOut>,
    pub per_individual: Option<PerIndividualOut>,
}

/// `(α₁, …, α_p)` from a companion matrix's bottom row.
fn alpha_of(a: &Matrix) -> Vec<f64> {
    let p = a.nrows();
    (1..=p).map(|k| a[(p - 1, p - k)]).collect()
}

/// Estimates a panel file with the options in `config.estimation`.
pub fn cmd_estimate(config: &Config, panel_path: &Path) -> Result<Report<EstimateResult>> {
    let est = &config.estimation;
    let order = est.order.or(config.model.as_ref().map(|m| m.order));
    let panel = read_panel(panel_path, order)?;
    let truth = panel.truth.as_deref();
    let p = panel.order;

    let cross_sectional = match est.pathway {
        Pathway::CrossSectional | Pathway::Both => {
            let r = match estimate_cross_sectional(&panel, est.max_lag) {
                Ok(r) => r,
                Err(e) if matches!(e.root(), RcarError::Singular(_)) => {
                    return singular_cross_section(config, panel_path, &panel, e);
                }
                Err(e) => return Err(CliError::from_data(e)),
            };
            let omega_error_in_se = match (truth, &r.omega_hat, r.omega_hat_se) {
                (Some(t), Some(om), Some(se)) if se > 0.0 => {
                    let mean_sigma2 = t.iter().map(|d| d.sigma2).sum::<f64>() / t.len() as f64;
                    Some((om[(0, 0)] - mean_sigma2) / se)
                }
                _ => None,
            };
            Some(CrossSectionalOut {
                upsilon_hat: r
                    .upsilon_hat
                    .lags
                    .iter()
                    .zip(&r.lag_counts)
                    .enumerate()
                    .map(|(u, (m, c))| LagHat {
                        lag: u,
                        pairs_per_individual: *c,
                        value: rows(m),
                    })
                    .collect(),
                covariance_ratios: r
                    .covariance_ratios
                    .iter()
                    .enumerate()
                    .map(|(u, m)| LagTable { lag: u, value: rows(m) })
                    .collect(),
                omega_hat: r.omega_hat.as_ref().map(rows),
                omega_hat_se: r.omega_hat_se,
                omega_method: r.omega_method,
                omega_error_in_se,
                ratio_error: None,
            })
        }
        Pathway::PerIndividual => None,
    };

    let per_individual = match est.pathway {
        Pathway::PerIndividual | Pathway::Both => {
            let r = estimate_per_individual(&panel, est.max_power, est.max_lag).map_err(CliError::from_data)?;
            let individuals: Vec<IndividualOut> = r
                .summaries
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let alpha_hat = alpha_of(&s.fit.a_hat);
                    let truth_i = truth.map(|t| &t[i]);
                    IndividualOut {
                        omega: i + 1,
                        alpha_error: truth_i.map(|d| alpha_hat.iter().zip(d.coefficients.as_slice()).map(|(h, a)| h - a).collect()),
                        sigma2_error: truth_i.map(|d| s.fit.residual_variance - d.sigma2),
                        alpha_hat,
                        residual_variance: s.fit.residual_variance,
                        spectral_radius: s.spectral_radius,
                    }
                })
                .collect();
            let alpha_rmse = truth.map(|_| {
                (0..p)
                    .map(|k| {
                        let mse = individuals
                            .iter()
                            .map(|o| o.alpha_error.as_ref().map_or(0.0, |e| e[k] * e[k]))
                            .sum::<f64>()
                            / individuals.len() as f64;
                        mse.sqrt()
                    })
                    .collect()
            });
            Some(PerIndividualOut {
                mean_a_hat: rows(&r.mean_a_hat),
                mean_alpha_hat: alpha_of(&r.mean_a_hat),
                mean_omega_hat: rows(&r.mean_omega_hat),
                explosive_fraction: r.explosive_fraction,
                short_series_warning: r.short_series_warning,
                moments: r
                    .moments
                    .entries
                    .iter()
                    .map(|(&(v, u), m)| MomentEntry { v, u, value: rows(m) })
                    .collect(),
                individuals,
                alpha_rmse,
            })
        }
        Pathway::CrossSectional => None,
    };

    let mut effective = config.clone();
    effective.estimation.order = Some(p);
    Ok(Report::new(
        "estimate",
        &effective,
        EstimateResult {
            panel: PanelSummary {
                path: panel_path.to_path_buf(),
                order: p,
                individuals: panel.individuals(),
                horizon: panel.horizon(),
                has_truth: truth.is_some(),
            },
            pathway: est.pathway,
            cross_sectional,
            per_individual,
        },
    ))
}

/// Report for a panel whose `Υ̂(0)` is singular: the lag tables are still
/// well defined, but ratios, `Ω̂` and the per-individual regressions are not.
fn singular_cross_section(config: &Config, panel_path: &Path, panel: &Panel, cause: RcarError) -> Result<Report<EstimateResult>> {
    let est = &config.estimation;
    let mut upsilon = Vec::with_capacity(est.max_lag + 1);
    for u in 0..=est.max_lag {
        let h = upsilon_hat(panel, u).map_err(CliError::from_data)?;
        upsilon.push(LagHat {
            lag: u,
            pairs_per_individual: h.pairs_per_individual,
            value: rows(&h.value),
        });
    }
    if est.pathway == Pathway::Both {
        // the per-individual Gram matrices are singular too
        estimate_per_individual(panel, est.max_power, est.max_lag).map_err(CliError::from_data)?;
    }
    let mut effective = config.clone();
    effective.estimation.order = Some(panel.order);
    Ok(Report::new(
        "estimate",
        &effective,
        EstimateResult {
            panel: PanelSummary {
                path: panel_path.to_path_buf(),
                order: panel.order,
                individuals: panel.individuals(),
                horizon: panel.horizon(),
                has_truth: panel.truth.is_some(),
            },
            pathway: est.pathway,
            cross_sectional: Some(CrossSectionalOut {
                upsilon_hat: upsilon,
                covariance_ratios: Vec::new(),
                omega_hat: None,
                omega_hat_se: None,
                omega_method: if panel.order == 1 { OmegaMethod::ScalarTelescoping } else { OmegaMethod::Heuristic },
                omega_error_in_se: None,
                ratio_error: Some(cause.to_string()),
            }),
            per_individual: None,
        },
    ))
}

/// One pass/fail line of an experiment, with its standard-error context.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub standard_error: Option<f64>,
    pub band: Option<[f64; 2]>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct McResult {
    pub kind: ExperimentKind,
    pub consistency: Option<ConsistencyResult>,
    pub clt: Option<CltResult>,
    pub ahat_convergence: Option<AhatResult>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

pub const CONSISTENCY_SLOPE_BAND: [f64; 2] = [-0.65, -0.35];
pub const AHAT_SLOPE_BAND: [f64; 2] = [-0.7, -0.3];

fn slope_check(name: String, fit: Option<&rcar::stats::SlopeFit>, band: [f64; 2]) -> Check {
    match fit {
        Some(f) => Check {
            passed: f.slope >= band[0] && f.slope <= band[1],
            value: f.slope,
            standard_error: Some(f.slope_se),
            band: Some(band),
            detail: format!("slope {:.4} ± {:.4} (95% CI [{:.4}, {:.4}])", f.slope, f.slope_se, f.ci_low, f.ci_high),
            name,
        },
        None => Check {
            passed: false,
            value: f64::NAN,
            standard_error: None,
            band: Some(band),
            detail: "no slope: fewer than two usable grid points or a zero error".into(),
            name,
        },
    }
}

pub fn experiment_plan(config: &Config, seed: u64) -> Result<ExperimentPlan> {
    let spec = config.model()?.clone();
    let e = config.experiment()?;
    let plan = ExperimentPlan {
        spec,
        sweep: e.sweep.clone(),
        replications: e.replications,
        lags: e.lags.clone(),
        seed,
        statistics: e.statistics.clone(),
        init: config.simulation.init.clone(),
        noiseless: e.noiseless,
        series: config.analysis.series,
    };
    plan.validate().map_err(|err| CliError::Config(format!("experiment: {err}")))?;
    Ok(plan)
}

/// Runs `[experiment]` and reports pass/fail per check.
pub fn cmd_mc(config: &Config, seed: u64) -> Result<Report<McResult>> {
    let plan = experiment_plan(config, seed)?;
    let e = config.experiment()?;
    let mut result = McResult {
        kind: e.kind,
        consistency: None,
        clt: None,
        ahat_convergence: None,
        checks: Vec::new(),
        passed: false,
    };
    match e.kind {
        ExperimentKind::Consistency => {
            let r = harness::run_consistency(&plan).map_err(CliError::from_model)?;
            let band = e.slope_band.unwrap_or(CONSISTENCY_SLOPE_BAND);
            for s in &r.slopes {
                result.checks.push(slope_check(format!("rmse_slope_lag{}", s.lag), s.fit.as_ref(), band));
            }
            for &u in &plan.lags {
                let cells: Vec<_> = r.cells.iter().filter(|c| c.lag == u).collect();
                if let (Some(first), Some(last)) = (cells.first(), cells.last()) {
                    if cells.len() >= 2 {
                        result.checks.push(Check {
                            name: format!("rmse_decreases_lag{u}"),
                            passed: last.rmse < first.rmse,
                            value: last.rmse / first.rmse,
                            standard_error: None,
                            band: None,
                            detail: format!(
                                "RMSE {:.4e} ± {:.1e} at N={} vs {:.4e} ± {:.1e} at N={}",
                                first.rmse, first.rmse_se, first.grid_value, last.rmse, last.rmse_se, last.grid_value
                            ),
                        });
                    }
                }
            }
            result.consistency = Some(r);
        }
        ExperimentKind::Clt => {
            let r = harness::run_clt(&plan).map_err(CliError::from_model)?;
            for pt in &r.points {
                let failing: Vec<String> = pt
                    .coordinates
                    .iter()
                    .filter(|c| !c.passes)
                    .map(|c| format!("lag {} entry ({}, {})", c.lag, c.entry.0, c.entry.1))
                    .collect();
                let worst_ks = pt.coordinates.iter().map(|c| c.ks_distance / c.ks_critical).fold(0.0, f64::max);
                result.checks.push(Check {
                    name: format!("normality_n{}", pt.individuals),
                    passed: pt.all_pass,
                    value: worst_ks,
                    standard_error: None,
                    band: None,
                    detail: if failing.is_empty() {
                        format!("{} coordinates pass; worst KS / critical = {worst_ks:.3}", pt.coordinates.len())
                    } else {
                        format!("failing: {}", failing.join("; "))
                    },
                });
            }
            if let (Some(change), Some(stable)) = (r.sigma_relative_change, r.sigma_stable) {
                result.checks.push(Check {
                    name: "sigma_stabilizes".into(),
                    passed: stable,
                    value: change,
                    standard_error: None,
                    band: Some([0.0, harness::SIGMA_STABILITY_TOL]),
                    detail: format!("relative change of Σ̂ between the two largest N: {change:.3}"),
                });
            }
            result.clt = Some(r);
        }
        ExperimentKind::AhatConvergence => {
            let r = harness::run_ahat_convergence(&plan).map_err(CliError::from_model)?;
            if plan.noiseless {
                let worst = r.points.iter().map(|p| p.mean_error).fold(0.0, f64::max);
                result.checks.push(Check {
                    name: "noiseless_exact".into(),
                    passed: worst == 0.0,
                    value: worst,
                    standard_error: None,
                    band: None,
                    detail: format!("largest mean error {worst:e}"),
                });
            } else {
                let band = e.slope_band.unwrap_or(AHAT_SLOPE_BAND);
                result.checks.push(slope_check("ahat_error_slope".into(), r.slope.as_ref(), band));
            }
            result.ahat_convergence = Some(r);
        }
    }
    result.passed = result.checks.iter().all(|c| c.passed);
    let mut effective = config.clone();
    effective.seed = seed;
    Ok(Report::new("mc", &effective, result))
}

/// Writes `report` to `out` atomically, or returns the JSON text when `out` is `None`.
pub fn emit<T: Serialize>(report: &Report<T>, out: Option<&Path>) -> Result<Option<String>> {
    debug_assert_eq!(report.schema_version, SCHEMA_VERSION);
    match out {
        Some(path) => {
            write_atomic(path, report.to_json().as_bytes())?;
            Ok(None)
        }
        None => Ok(Some(report.to_json())),
    }
}
