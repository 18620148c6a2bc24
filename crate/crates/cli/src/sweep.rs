//! Parameter sweeps over one or two scalar entries of the model JSON.
//!
//! Each point re-runs steady → stability → spectrum → linearized simulation.
//! Points run on a worker pool capped by `CANNDYN_THREADS`; rows come back
//! in parameter-index order regardless of completion order.

use canndyn_core::dynamics::{simulate, Mode};
use canndyn_core::error::Error;
use canndyn_core::ingredients::parse_model_config;
use canndyn_core::linearization::{build_linearization, dissipativity_margin, trivial_stability_check};
use canndyn_core::par;
use canndyn_core::spectral::spectral_report;
use canndyn_core::steady::{solve_steady, trivial_steady};
use canndyn_core::GridFunction;
use serde_json::{json, Value};

use crate::args::SweepArgs;
use crate::commands::{
    apply_overrides, build_grid, check_spectrum_opts, lambda_range, read_text, sim_config, steady_config, Outcome,
    Writer,
};
use crate::error::CliError;

struct Row {
    params: Vec<f64>,
    r0: f64,
    margin: f64,
    k0: f64,
    rightmost_root: Option<f64>,
    sim_growth_rate: f64,
    n0: f64,
}

fn set_path(doc: &mut Value, path: &str, x: f64) -> Result<(), CliError> {
    let mut cur = doc;
    for seg in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(seg),
            Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| CliError::Usage(format!("sweep path `{path}` not found at `{seg}`")))?;
    }
    if !cur.is_number() {
        return Err(CliError::Usage(format!("sweep path `{path}` is not a number")));
    }
    *cur = json!(x);
    Ok(())
}

fn threads() -> Result<usize, CliError> {
    match std::env::var("CANNDYN_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!("CANNDYN_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn run_point(args: &SweepArgs, base: &Value, params: &[f64]) -> Result<Row, CliError> {
    let mut doc = base.clone();
    set_path(&mut doc, &args.vary.path, params[0])?;
    if let Some(v2) = &args.vary2 {
        set_path(&mut doc, &v2.path, params[1])?;
    }
    let model = apply_overrides(parse_model_config(&doc.to_string())?, &args.common)?;
    let grid = build_grid(&model, &args.common)?;
    let r0 = trivial_stability_check(&model, &grid)?.r0;
    let state = match solve_steady(&model, &grid, &steady_config(&args.steady)?) {
        Ok(s) => s,
        Err(Error::NoEquilibrium { .. }) => trivial_steady(&model, &grid),
        Err(e) => return Err(e.into()),
    };
    let lin = build_linearization(&model, &state)?;
    let margin = dissipativity_margin(&lin).margin;
    let spec = spectral_report(&lin, lambda_range(&lin, &args.spectrum)?, args.spectrum.scan, args.spectrum.root_tol)?;
    let cfg = sim_config(&args.sim, Mode::Linearized, Vec::new())?;
    let initial = GridFunction::from_fn(&grid, |s| (-s).exp());
    let sim = simulate(&model, &initial, &cfg, Some(&lin))?;
    Ok(Row {
        params: params.to_vec(),
        r0,
        margin,
        k0: spec.k0,
        rightmost_root: spec.rightmost_root(),
        sim_growth_rate: sim.growth_rate,
        n0: state.n0,
    })
}

fn csv(header: &[String], rows: &[Row]) -> Result<String, CliError> {
    let mut out = header.join(",");
    out.push('\n');
    for (r, row) in rows.iter().enumerate() {
        let mut cells: Vec<Option<f64>> = row.params.iter().copied().map(Some).collect();
        cells.extend([
            Some(row.r0),
            Some(row.margin),
            Some(row.k0),
            row.rightmost_root,
            Some(row.sim_growth_rate),
            Some(row.n0),
        ]);
        let mut line = Vec::with_capacity(cells.len());
        for (c, cell) in cells.into_iter().enumerate() {
            match cell {
                Some(v) if !v.is_finite() => {
                    return Err(Error::NonFiniteOutput {
                        column: header[c].clone(),
                        row: r,
                    }
                    .into())
                }
                Some(v) => line.push(format!("{v:?}")),
                // no real root in the scanned window
                None => line.push(String::new()),
            }
        }
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn sweep(args: &SweepArgs) -> Outcome {
    check_spectrum_opts(&args.spectrum)?;
    steady_config(&args.steady)?;
    sim_config(&args.sim, Mode::Linearized, Vec::new())?;
    let workers = threads()?;
    let base: Value = serde_json::from_str(&read_text(&args.common.model)?)
        .map_err(|e| CliError::Core(Error::Config { path: ".".into(), message: e.to_string() }))?;

    let xs = args.vary.values();
    let points: Vec<Vec<f64>> = match &args.vary2 {
        None => xs.iter().map(|&x| vec![x]).collect(),
        Some(v2) => {
            let ys = v2.values();
            xs.iter()
                .flat_map(|&x| ys.iter().map(move |&y| vec![x, y]))
                .collect()
        }
    };

    let rows = par::with_threads(workers, || par::map_slice(&points, |p| run_point(args, &base, p)))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let mut header = vec![args.vary.path.clone()];
    if let Some(v2) = &args.vary2 {
        header.push(v2.path.clone());
    }
    header.extend(
        ["R0", "margin", "K0", "rightmost_root", "sim_growth_rate", "n0"]
            .iter()
            .map(|s| s.to_string()),
    );
    let mut w = Writer::new(&args.common.out)?;
    w.text("sweep.csv", &csv(&header, &rows)?)?;
    Ok(json!({ "verb": "sweep", "rows": rows.len(), "threads": workers, "files": w.files() }))
}
