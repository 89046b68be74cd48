//! Panel CSV files.
//!
//! Panel: header `omega,t,y`, one row per observation, sorted by `(omega, t)`,
//! with `omega = 1..=N` and `t = 0..=T` densely filled. Truth sidecar:
//! header `omega,sigma2,alpha1,…,alphap`, one row per individual.
//! Numbers are written with 17 significant digits so every `f64` round-trips.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rcar::model::{is_stationary_draw, CoefficientVector, DEFAULT_BOUNDARY_TOL};
use rcar::simulate::{IndividualDraw, Panel};

use crate::error::{CliError, Result};

const PANEL_HEADER: [&str; 3] = ["omega", "t", "y"];

/// Formats `x` with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `dir/name.csv` → `dir/name.truth.csv`.
pub fn truth_path(panel: &Path) -> PathBuf {
    let stem = panel.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    panel.with_file_name(format!("{stem}.truth.csv"))
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for r in rows {
        w.write_record(&r).expect("writing to memory");
    }
    w.into_inner().expect("flushing to memory")
}

pub fn panel_to_csv(panel: &Panel) -> Vec<u8> {
    let header: Vec<String> = PANEL_HEADER.iter().map(|s| s.to_string()).collect();
    let rows = panel.observations.iter().enumerate().flat_map(|(i, ys)| {
        ys.iter()
            .enumerate()
            .map(move |(t, y)| vec![(i + 1).to_string(), t.to_string(), format_f64(*y)])
    });
    csv_bytes(&header, rows)
}

pub fn truth_to_csv(order: usize, truth: &[IndividualDraw]) -> Vec<u8> {
    let mut header = vec!["omega".to_string(), "sigma2".to_string()];
    header.extend((1..=order).map(|k| format!("alpha{k}")));
    let rows = truth.iter().enumerate().map(|(i, d)| {
        let mut r = vec![(i + 1).to_string(), format_f64(d.sigma2)];
        r.extend(d.coefficients.as_slice().iter().map(|a| format_f64(*a)));
        r
    });
    csv_bytes(&header, rows)
}

/// Writes the panel and, when it carries truth, the sidecar. Returns the sidecar path.
pub fn write_panel(path: &Path, panel: &Panel) -> Result<Option<PathBuf>> {
    write_atomic(path, &panel_to_csv(panel))?;
    match &panel.truth {
        Some(truth) => {
            let tp = truth_path(path);
            write_atomic(&tp, &truth_to_csv(panel.order, truth))?;
            Ok(Some(tp))
        }
        None => Ok(None),
    }
}

fn data_err(path: &Path, line: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}:{line}: {msg}", path.display()))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f))
}

fn headers(path: &Path, r: &mut csv::Reader<File>) -> Result<Vec<String>> {
    Ok(r.headers()
        .map_err(|e| data_err(path, 1, e))?
        .iter()
        .map(str::to_string)
        .collect())
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(i).ok_or_else(|| data_err(path, line, format!("missing column `{name}`")))?;
    raw.parse()
        .map_err(|e| data_err(path, line, format!("column `{name}`: cannot parse `{raw}`: {e}")))
}

/// Reads a panel file as raw series, checking sort order and the dense grid.
pub fn read_observations(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = reader(path)?;
    let h = headers(path, &mut r)?;
    if h != PANEL_HEADER {
        return Err(data_err(path, 1, format!("expected header `omega,t,y`, found `{}`", h.join(","))));
    }
    let mut series: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            data_err(path, line, e)
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(data_err(path, line, format!("expected 3 fields, found {}", rec.len())));
        }
        let omega: usize = field(path, line, &rec, 0, "omega")?;
        let t: usize = field(path, line, &rec, 1, "t")?;
        let y: f64 = field(path, line, &rec, 2, "y")?;
        if !y.is_finite() {
            return Err(data_err(path, line, format!("non-finite observation {y}")));
        }
        let n = series.len();
        if omega == n + 1 && t == 0 {
            if n >= 2 && series[n - 1].len() != series[0].len() {
                return Err(data_err(
                    path,
                    line,
                    format!("individual {n} has {} observations, individual 1 has {}", series[n - 1].len(), series[0].len()),
                ));
            }
            series.push(vec![y]);
        } else if n >= 1 && omega == n && t == series[n - 1].len() {
            series[n - 1].push(y);
        } else {
            let expected = if n == 0 {
                "omega = 1, t = 0".to_string()
            } else {
                format!("omega = {n}, t = {} or omega = {}, t = 0", series[n - 1].len(), n + 1)
            };
            return Err(data_err(
                path,
                line,
                format!("row (omega = {omega}, t = {t}) breaks the sorted dense grid; expected {expected}"),
            ));
        }
    }
    let Some(first) = series.first() else {
        return Err(data_err(path, 1, "panel has no observations"));
    };
    let len = first.len();
    if let Some((i, s)) = series.iter().enumerate().find(|(_, s)| s.len() != len) {
        return Err(CliError::Data(format!(
            "{}: individual {} has {} observations, individual 1 has {len}",
            path.display(),
            i + 1,
            s.len()
        )));
    }
    Ok(series)
}

/// Reads a truth sidecar; the order is the number of `alpha` columns.
pub fn read_truth(path: &Path) -> Result<(usize, Vec<IndividualDraw>)> {
    let mut r = reader(path)?;
    let h = headers(path, &mut r)?;
    let p = h.len().saturating_sub(2);
    let expected: Vec<String> = ["omega".to_string(), "sigma2".to_string()]
        .into_iter()
        .chain((1..=p).map(|k| format!("alpha{k}")))
        .collect();
    if p == 0 || h != expected {
        return Err(data_err(
            path,
            1,
            format!("expected header `omega,sigma2,alpha1,…,alphap`, found `{}`", h.join(",")),
        ));
    }
    let mut draws = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            data_err(path, line, e)
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let omega: usize = field(path, line, &rec, 0, "omega")?;
        if omega != draws.len() + 1 {
            return Err(data_err(path, line, format!("expected omega = {}, found {omega}", draws.len() + 1)));
        }
        let sigma2: f64 = field(path, line, &rec, 1, "sigma2")?;
        let alpha = (1..=p)
            .map(|k| field(path, line, &rec, k + 1, &format!("alpha{k}")))
            .collect::<Result<Vec<f64>>>()?;
        let coefficients = CoefficientVector::new(alpha).map_err(|e| data_err(path, line, e))?;
        let stationary = is_stationary_draw(&coefficients, DEFAULT_BOUNDARY_TOL).map_err(|e| data_err(path, line, e))?;
        draws.push(IndividualDraw {
            coefficients,
            sigma2,
            stationary,
            redraws: 0,
        });
    }
    Ok((p, draws))
}

/// Reads a panel plus its sidecar, if one exists next to it.
///
/// The order comes from `order`, else from the sidecar.
pub fn read_panel(path: &Path, order: Option<usize>) -> Result<Panel> {
    let observations = read_observations(path)?;
    let tp = truth_path(path);
    let truth = if tp.exists() { Some(read_truth(&tp)?) } else { None };
    let p = match (order, &truth) {
        (Some(p), Some((q, _))) if p != *q => {
            return Err(CliError::Data(format!(
                "order {p} conflicts with the {q} alpha columns in {}",
                tp.display()
            )))
        }
        (Some(p), _) => p,
        (None, Some((q, _))) => *q,
        (None, None) => {
            return Err(CliError::Config(
                "panel order unknown: set estimation.order, model.p or pass --order".into(),
            ))
        }
    };
    let mut panel = Panel::from_observations(p, observations).map_err(CliError::from_data)?;
    if let Some((_, draws)) = truth {
        if draws.len() != panel.individuals() {
            return Err(CliError::Data(format!(
                "{} has {} rows but the panel has {} individuals",
                tp.display(),
                draws.len(),
                panel.individuals()
            )));
        }
        panel.truth = Some(draws);
    }
    Ok(panel)
}
