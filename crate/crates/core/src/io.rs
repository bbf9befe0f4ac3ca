//! CSV and export formats: campaigns, chains, Laplace summaries, gain tables, study
//! estimates, and prediction bands.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::GainResult;
use crate::error::{Error, Result};
use crate::inference::{GaussianApprox, McmcChain};
use crate::model::{Campaign, Stage, TimeSeries};
use crate::pipeline::PredictionBands;
use crate::robustness::VariabilitySummary;

pub const CAMPAIGN_HEADER: [&str; 5] = ["t_min", "temp_int_C", "flux_int_Wm2", "temp_ext_C", "flux_ext_Wm2"];

/// Relative tolerance on sample spacing when reading timestamps.
const SPACING_TOL: f64 = 1e-6;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| format!(" at line {}", p.line())).unwrap_or_default();
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        other => Error::data(format!("{}{line}: {other:?}", path.display())),
    }
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Reads a campaign from `reader`; `name` only labels error messages.
pub fn parse_campaign(reader: impl std::io::Read, name: &str, stage: Stage) -> Result<Campaign> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = r
        .headers()
        .map_err(|e| Error::data(format!("{name}: unreadable header: {e}")))?
        .clone();
    if header.iter().collect::<Vec<_>>() != CAMPAIGN_HEADER {
        return Err(Error::data(format!(
            "{name}: expected header {}, found {}",
            CAMPAIGN_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut cols: [Vec<f64>; 5] = Default::default();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(format!("{name}: {e}")))?;
        for (k, col) in cols.iter_mut().enumerate() {
            let field = rec.get(k).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| {
                Error::data(format!(
                    "{name}: row {} column {}: cannot parse {field:?} as a number",
                    row + 2,
                    CAMPAIGN_HEADER[k]
                ))
            })?;
            col.push(v);
        }
    }
    let [t, ti, fi, te, fe] = cols;
    if t.len() < 2 {
        return Err(Error::data(format!("{name}: need at least two samples, found {}", t.len())));
    }
    let dt = t[1] - t[0];
    if !(dt > 0.0) {
        return Err(Error::data(format!("{name}: timestamps must increase")));
    }
    for (i, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > SPACING_TOL * dt {
            return Err(Error::data(format!(
                "{name}: uneven sample spacing between rows {} and {}",
                i + 2,
                i + 3
            )));
        }
    }
    let s = |v: Vec<f64>| TimeSeries::new(t[0], dt, v);
    Campaign::new(s(ti), s(te), s(fi), s(fe), stage)
}

pub fn read_campaign_csv(path: &Path, stage: Stage) -> Result<Campaign> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    parse_campaign(f, &path.display().to_string(), stage)
}

pub fn write_campaign_csv(path: &Path, c: &Campaign) -> Result<()> {
    let header: Vec<String> = CAMPAIGN_HEADER.iter().map(|s| s.to_string()).collect();
    write_rows(
        path,
        &header,
        (0..c.len()).map(|i| {
            vec![
                num(c.temp_int.time(i)),
                num(c.temp_int.values[i]),
                num(c.flux_int.values[i]),
                num(c.temp_ext.values[i]),
                num(c.flux_ext.values[i]),
            ]
        }),
    )
}

pub fn write_chain_csv(path: &Path, chain: &McmcChain, param_names: &[&str]) -> Result<()> {
    let mut header = vec!["iter".to_string()];
    header.extend(param_names.iter().map(|s| s.to_string()));
    header.push("log_post".into());
    write_rows(
        path,
        &header,
        chain.samples.iter().zip(&chain.log_post).zip(&chain.iterations).map(|((s, lp), it)| {
            let mut r = vec![it.to_string()];
            r.extend(s.iter().map(|&x| num(x)));
            r.push(num(*lp));
            r
        }),
    )
}

/// Serializable view of a Laplace approximation; the covariance is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceExport {
    pub param_names: Vec<String>,
    pub map: Vec<f64>,
    pub sd: Vec<f64>,
    pub covariance: Vec<f64>,
    pub log_posterior_at_map: f64,
}

impl From<&GaussianApprox> for LaplaceExport {
    fn from(g: &GaussianApprox) -> Self {
        let d = g.map.len();
        LaplaceExport {
            param_names: g.param_names.clone(),
            map: g.map.clone(),
            sd: g.sd(),
            covariance: (0..d * d).map(|k| g.covariance[(k / d, k % d)]).collect(),
            log_posterior_at_map: g.log_posterior_at_map,
        }
    }
}

/// Gain table; window times come from the observation time base `(t0, dt)` in minutes.
pub fn write_gain_csv(path: &Path, results: &[GainResult], time_base: (f64, f64)) -> Result<()> {
    let (t0, dt) = time_base;
    let header: Vec<String> = ["window_start_min", "window_end_min", "label", "d_kl_nats", "map_R", "map_rhoC"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_rows(
        path,
        &header,
        results.iter().map(|g| {
            vec![
                num(t0 + g.setup.start as f64 * dt),
                num(t0 + (g.setup.end - 1) as f64 * dt),
                g.setup.label.clone(),
                num(g.d_kl),
                num(g.laplace.map[0]),
                num(g.laplace.map[1]),
            ]
        }),
    )
}

pub fn write_study_csv(path: &Path, s: &VariabilitySummary) -> Result<()> {
    let header: Vec<String> = ["repeat", "R", "rhoC"].iter().map(|s| s.to_string()).collect();
    write_rows(
        path,
        &header,
        s.estimates
            .iter()
            .map(|e| vec![e.repeat.to_string(), num(e.r_value), num(e.rho_c)]),
    )
}

pub fn write_bands_csv(path: &Path, b: &PredictionBands, times: &[f64]) -> Result<()> {
    let header: Vec<String> = [
        "t_min",
        "flux_int_median",
        "flux_int_lower",
        "flux_int_upper",
        "flux_ext_median",
        "flux_ext_lower",
        "flux_ext_upper",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    write_rows(
        path,
        &header,
        times.iter().enumerate().map(|(i, t)| {
            vec![
                num(*t),
                num(b.median_int[i]),
                num(b.lower_int[i]),
                num(b.upper_int[i]),
                num(b.median_ext[i]),
                num(b.lower_ext[i]),
                num(b.upper_ext[i]),
            ]
        }),
    )
}

/// Writes `text` to `path`, naming the path on failure.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}
