use std::path::{Path, PathBuf};
use std::process::Command;

use rcar::estimate::estimate_cross_sectional;
use rcar_cli::config::{Config, Pathway};
use rcar_cli::error::{exit, CliError};
use rcar_cli::panel_io::{read_panel, truth_path};
use rcar_cli::{cmd_analyze, cmd_estimate, cmd_mc, cmd_oracle, cmd_simulate};

const AR1_HALF: &str = r#"
[model]
p = 1
n = 2
t = 3
coefficients = { kind = "degenerate", alpha = [0.5] }
noise = { kind = "constant", sigma2 = 1.0 }
"#;

const TWO_ATOM: &str = r#"
[model]
p = 1
n = 2000
t = 30
coefficients = { kind = "discrete", atoms = [[0.2], [0.4]], weights = [0.5, 0.5] }
noise = { kind = "constant", sigma2 = 1.0 }
"#;

fn config(text: &str) -> Config {
    Config::parse(text).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rcar"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn analyze_ar1_tables_and_spectrum() {
    let mut c = config(AR1_HALF);
    c.analysis.lambdas = vec![0.0];
    let r = cmd_analyze(&c).unwrap().result;
    assert_eq!(r.stationarity.verdict, "stationary");
    let ups = r.unconditional.unwrap();
    assert!((ups[0].series[0][0] - 4.0 / 3.0).abs() < 1e-10);
    assert!((ups[0].closed_form[0][0] - 4.0 / 3.0).abs() < 1e-14);
    let s = &r.spectral_density.unwrap()[0];
    assert!((s.re[0][0] - 0.636_620).abs() < 1e-6);
    assert_eq!(s.im[0][0], 0.0);
    assert_eq!(r.conditional.unwrap()[0].gamma.len(), 5);
}

#[test]
fn analyze_unit_root_is_a_verdict() {
    let c = config(&AR1_HALF.replace("[0.5]", "[1.0]"));
    let r = cmd_analyze(&c).unwrap().result;
    assert_eq!(r.stationarity.verdict, "nonstationary");
    assert!(r.unconditional.is_none() && r.conditional.is_none() && r.spectral_density.is_none());
    assert!(!r.stationarity.atoms[0].stationary);
}

#[test]
fn analyze_report_carries_schema_and_config() {
    let report = cmd_analyze(&config(AR1_HALF)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["config"]["analysis"]["max_lag"], 4);
    assert_eq!(v["config"]["simulation"]["init"]["kind"], "exact_stationary");
}

#[test]
fn simulate_dense_grid_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("panel.csv");
    let mut c = config(AR1_HALF);
    c.simulation.keep_truth = true;
    let (panel, record) = cmd_simulate(&c, 7, &out).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "omega,t,y");
    assert_eq!(lines.len() - 1, 8);
    assert!(lines[1].starts_with("1,0,") && lines[8].starts_with("2,3,"));
    let truth = std::fs::read_to_string(truth_path(&out)).unwrap();
    assert_eq!(truth.lines().count() - 1, 2);
    assert_eq!(record.result.seed, 7);

    let back = read_panel(&out, None).unwrap();
    assert_eq!(back.order, panel.order);
    assert_eq!(back.observations, panel.observations);
    let (a, b) = (back.truth.unwrap(), panel.truth.unwrap());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.coefficients, y.coefficients);
        assert_eq!(x.sigma2.to_bits(), y.sigma2.to_bits());
    }
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(&TWO_ATOM.replace("n = 2000", "n = 50"));
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    cmd_simulate(&c, 11, &a).unwrap();
    cmd_simulate(&c, 11, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let d = dir.path().join("d.csv");
    cmd_simulate(&c, 12, &d).unwrap();
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&d).unwrap());
}

#[test]
fn estimate_all_zero_panel() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "z.csv", "omega,t,y\n1,0,0\n1,1,0\n1,2,0\n2,0,0\n2,1,0\n2,2,0\n");
    let mut c = config("");
    c.estimation.order = Some(1);
    c.estimation.pathway = Pathway::CrossSectional;
    let r = cmd_estimate(&c, &p).unwrap().result;
    let cs = r.cross_sectional.unwrap();
    assert_eq!(cs.upsilon_hat.len(), 3);
    assert!(cs.upsilon_hat.iter().all(|l| l.value == vec![vec![0.0]]));
    assert!(cs.omega_hat.is_none() && cs.ratio_error.is_some());

    c.estimation.pathway = Pathway::PerIndividual;
    assert!(matches!(cmd_estimate(&c, &p), Err(CliError::Numerical(_))));
}

#[test]
fn estimate_two_atom_omega_within_stated_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("two.csv");
    let mut c = config(TWO_ATOM);
    c.simulation.keep_truth = true;
    cmd_simulate(&c, 2024, &out).unwrap();
    let r = cmd_estimate(&c, &out).unwrap().result;
    let cs = r.cross_sectional.unwrap();
    let om = cs.omega_hat.unwrap()[0][0];
    let se = cs.omega_hat_se.unwrap();
    assert!((om - 1.0).abs() < 5.0 * se, "Ω̂ = {om}, se = {se}");
    assert!(cs.omega_error_in_se.unwrap().abs() < 5.0);
    let pi = r.per_individual.unwrap();
    assert_eq!(pi.individuals.len(), 2000);
    assert!(pi.alpha_rmse.is_some() && pi.individuals[0].alpha_error.is_some());
}

#[test]
fn pathways_agree_for_fixed_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("deg.csv");
    let c = config(&AR1_HALF.replace("n = 2", "n = 400").replace("t = 3", "t = 200"));
    let (panel, _) = cmd_simulate(&c, 5, &out).unwrap();
    let r = cmd_estimate(&c, &out).unwrap().result;
    let rho1 = r.cross_sectional.unwrap().covariance_ratios[1].value[0][0];
    let pi = r.per_individual.unwrap();
    let mean_a = pi.mean_alpha_hat[0];
    let spread: Vec<f64> = pi.individuals.iter().map(|i| i.alpha_hat[0]).collect();
    let se = rcar::stats::std_error(&spread);
    assert!((rho1 - mean_a).abs() < 4.0 * se, "ρ̂(1) = {rho1}, mean Â = {mean_a}, se = {se}");
    assert_eq!(estimate_cross_sectional(&panel, 2).unwrap().order, 1);
}

#[test]
fn malformed_rows_report_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("omega,t,y\n1,0,0.5\n1,1,abc\n", ":3:"),
        ("omega,t,y\n1,0,0.5\n1,2,0.1\n", ":3:"),
        ("omega,t,y\n1,0,0.5\n1,1,0.1\n2,0,0.2\n", "individual 2 has 1"),
        ("omega,t\n1,0\n", ":1:"),
        ("omega,t,y\n1,0,0.5,9\n", ":2:"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let p = write(dir.path(), &format!("bad{i}.csv"), text);
        let err = read_panel(&p, Some(1)).unwrap_err();
        assert!(matches!(err, CliError::Data(_)), "{err}");
        assert!(err.to_string().contains(needle), "case {i}: {err}");
    }
}

#[test]
fn estimate_lag_beyond_horizon_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "s.csv", "omega,t,y\n1,0,1\n1,1,2\n1,2,1\n");
    let mut c = config("");
    c.estimation.order = Some(1);
    c.estimation.max_lag = 5;
    c.estimation.pathway = Pathway::CrossSectional;
    assert!(matches!(cmd_estimate(&c, &p), Err(CliError::Data(_))));
}

const WHITE_MC: &str = r#"
[model]
p = 1
t = 5
coefficients = { kind = "degenerate", alpha = [0.0] }
noise = { kind = "constant", sigma2 = 1.0 }

[experiment]
kind = "consistency"
sweep = { variable = "individuals", grid = [100, 400, 1600] }
replications = 100
"#;

#[test]
fn mc_white_noise_consistency_passes() {
    let r = cmd_mc(&config(WHITE_MC), 3).unwrap().result;
    assert!(r.passed, "{:?}", r.checks);
}

#[test]
fn mc_small_r_normality_is_a_config_error() {
    let text = WHITE_MC.replace("consistency", "clt").replace("replications = 100", "replications = 10\nstatistics = [\"normality\"]");
    assert!(matches!(cmd_mc(&config(&text), 0), Err(CliError::Config(_))));
}

#[test]
fn mc_two_atom_slope_recorded_in_band() {
    let text = r#"
[model]
p = 1
t = 10
coefficients = { kind = "discrete", atoms = [[0.2], [0.4]], weights = [0.5, 0.5] }
noise = { kind = "constant", sigma2 = 1.0 }

[experiment]
kind = "consistency"
sweep = { variable = "individuals", grid = [100, 400, 1600] }
replications = 200
"#;
    let r = cmd_mc(&config(text), 17).unwrap().result;
    let c = r.checks.iter().find(|c| c.name == "rmse_slope_lag0").unwrap();
    assert!(c.passed && (-0.65..=-0.35).contains(&c.value), "{c:?}");
    let target = &r.consistency.unwrap().targets[0].1;
    assert!((target[0][0] - 1.116_071_428_571_428_5).abs() < 1e-10);
}

#[test]
fn oracle_examples() {
    let s = cmd_oracle("two_atom_upsilon0", &[]).unwrap();
    assert!(s.contains("1/0.96") && s.contains("1/0.84") && s.contains("1.1160714"));
    assert!(cmd_oracle("ar1_gamma0", &["a=0.5".into()]).unwrap().contains("1.3333333333333"));
    let s = cmd_oracle("roots", &["0.5".into(), "0.3".into()]).unwrap();
    assert!(s.contains("0.852079") && s.contains("-0.352079"), "{s}");
    assert!(matches!(cmd_oracle("bogus", &[]), Err(CliError::Config(_))));
}

#[test]
fn generated_config_reference_is_current() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/config-reference.toml");
    let doc = std::fs::read_to_string(&path).unwrap();
    let body: String = doc.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    assert_eq!(Config::parse(&body).unwrap(), Config::reference());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(dir.path(), "ok.toml", AR1_HALF);
    let status = bin().args(["analyze", "-c"]).arg(&ok).output().unwrap();
    assert_eq!(status.status.code(), Some(exit::OK));
    let v: serde_json::Value = serde_json::from_slice(&status.stdout).unwrap();
    assert_eq!(v["command"], "analyze");

    let bad = write(dir.path(), "bad.toml", "[model]\np = 1\nbogus = 2\n");
    let o = bin().args(["analyze", "-c"]).arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let panel = write(dir.path(), "p.csv", "omega,t,y\n1,0,x\n");
    let o = bin().args(["estimate", "--order", "1"]).arg(&panel).output().unwrap();
    assert_eq!(o.status.code(), Some(exit::DATA));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));

    let o = bin().args(["analyze", "--max-terms", "3", "-c"]).arg(&ok).output().unwrap();
    assert_eq!(o.status.code(), Some(exit::NUMERICAL));

    let failing = write(
        dir.path(),
        "fail.toml",
        &WHITE_MC.replace("replications = 100", "replications = 60\nslope_band = [0.0, 0.1]"),
    );
    let o = bin().args(["mc", "-c"]).arg(&failing).output().unwrap();
    assert_eq!(o.status.code(), Some(exit::ACCEPTANCE));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL rmse_slope_lag0"));

    let o = bin().args(["oracle", "nope"]).output().unwrap();
    assert_eq!(o.status.code(), Some(exit::CONFIG));
}

#[test]
fn binary_simulate_respects_env_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", AR1_HALF);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = bin()
            .args(["simulate", "-c"])
            .arg(&cfg)
            .arg("--panel")
            .arg(&out)
            .env("RCAR_SEED", seed)
            .env("RCAR_THREADS", "2")
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).contains(&format!("seed={seed}")));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv", "9"), run("b.csv", "9"));
    assert_ne!(run("a.csv", "9"), run("c.csv", "10"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["seed"], 9);
    assert_eq!(meta["schema_version"], 1);
}
