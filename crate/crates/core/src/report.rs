//! Flat-file forms of the analysis results.
//!
//! Every CSV writer refuses non-finite values. Numbers use the shortest
//! round-trip formatting, so identical inputs give byte-identical files.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dynamics::SimReport;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::linearization::StabilityVerdict;
use crate::spectral::SpectralReport;
use crate::steady::SteadyState;

/// Builds a CSV table; fails on the first non-finite cell.
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<String> {
    let mut out = header.join(",");
    out.push('\n');
    for (r, row) in rows.into_iter().enumerate() {
        debug_assert_eq!(row.len(), header.len());
        for (c, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteOutput {
                    column: header[c].to_string(),
                    row: r,
                });
            }
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct SteadyFile {
    s: Vec<f64>,
    n0: f64,
    n: Vec<f64>,
    #[serde(rename = "E")]
    e: Vec<f64>,
    #[serde(rename = "M")]
    m: Vec<f64>,
    residual_fp: f64,
    #[serde(rename = "residual_R")]
    residual_r: f64,
}

pub fn steady_json(state: &SteadyState) -> Value {
    serde_json::to_value(SteadyFile {
        s: state.grid().nodes().to_vec(),
        n0: state.n0,
        n: state.n.values().to_vec(),
        e: state.e.values().to_vec(),
        m: state.m.values().to_vec(),
        residual_fp: state.residual_fp,
        residual_r: state.residual_r,
    })
    .expect("plain numeric struct")
}

/// Reads a state written by [`steady_json`]; the grid is rebuilt from `s`.
pub fn read_steady_json(text: &str) -> Result<SteadyState> {
    let f: SteadyFile = serde_json::from_str(text)?;
    let grid = Grid::from_nodes(f.s)?;
    Ok(SteadyState {
        n0: f.n0,
        n: GridFunction::new(grid.clone(), f.n)?,
        e: GridFunction::new(grid.clone(), f.e)?,
        m: GridFunction::new(grid, f.m)?,
        residual_fp: f.residual_fp,
        residual_r: f.residual_r,
    })
}

pub fn steady_csv(state: &SteadyState) -> Result<String> {
    let nodes = state.grid().nodes();
    csv_table(
        &["s", "n", "E", "M"],
        (0..nodes.len()).map(|i| vec![nodes[i], state.n[i], state.e[i], state.m[i]]),
    )
}

pub fn stability_json(verdict: &StabilityVerdict) -> Value {
    json!({
        "margin": verdict.margin,
        "kappa": verdict.kappa(),
        "stable_by_dissipativity": verdict.stable_by_dissipativity,
        "positivity_pos1": verdict.positivity_pos1,
        "positivity_pos2": verdict.positivity_pos2,
        "aeg_hypotheses_met": verdict.aeg_hypotheses_met,
        "mu0": verdict.mu0,
    })
}

pub fn margin_csv(verdict: &StabilityVerdict) -> Result<String> {
    let p = &verdict.margin_profile;
    let nodes = p.grid().nodes();
    csv_table(&["s", "margin"], (0..nodes.len()).map(|i| vec![nodes[i], p[i]]))
}

pub fn spectral_json(report: &SpectralReport) -> Value {
    let mut v = serde_json::to_value(report).expect("plain numeric struct");
    // the CSV carries the samples
    if let Some(obj) = v.as_object_mut() {
        obj.remove("samples");
        obj.insert("n_samples".into(), json!(report.samples.len()));
    }
    v
}

pub fn spectral_csv(report: &SpectralReport) -> Result<String> {
    let header = ["lambda", "K", "L", "a1", "a2", "a3", "a4", "a5", "a6", "a7", "a8", "a9"];
    csv_table(
        &header,
        report.samples.iter().map(|s| {
            let mut row = vec![s.lambda, s.k, s.l];
            row.extend_from_slice(&s.a);
            row
        }),
    )
}

pub fn sim_csv(report: &SimReport) -> Result<String> {
    csv_table(
        &[
            "t",
            "norm",
            "boundary",
            "growth_window_rate",
            "profile_distance",
            "mass_residual",
            "min_value",
        ],
        (0..report.times.len()).map(|i| {
            vec![
                report.times[i],
                report.norms[i],
                report.boundary_values[i],
                report.local_rates[i],
                report.profile_distance[i],
                report.mass_residuals[i],
                report.min_values[i],
            ]
        }),
    )
}

pub fn profile_csv(n: &GridFunction) -> Result<String> {
    let nodes = n.grid().nodes();
    csv_table(&["s", "n"], (0..nodes.len()).map(|i| vec![nodes[i], n[i]]))
}

/// Reads a two-column `s,n` profile (header optional).
pub fn read_profile_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (a, b) = (cols.next().unwrap_or(""), cols.next().unwrap_or(""));
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                xs.push(x);
                ys.push(y);
            }
            _ if k == 0 => continue,
            _ => {
                return Err(Error::Config {
                    path: format!("line {}", k + 1),
                    message: format!("expected two numbers, got `{line}`"),
                })
            }
        }
    }
    Ok((xs, ys))
}
