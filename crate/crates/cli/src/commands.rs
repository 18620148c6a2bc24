use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use canndyn_core::dynamics::{simulate, Mode, SimConfig};
use canndyn_core::ingredients::{parse_model_config, validate_model};
use canndyn_core::linearization::{build_linearization, dissipativity_margin, trivial_stability_check};
use canndyn_core::report;
use canndyn_core::spectral::{default_lambda_range, spectral_report};
use canndyn_core::steady::{solve_steady, trivial_steady, SteadyConfig};
use canndyn_core::{Grid, GridFunction, Linearization, ModelSpec, SteadyState};
use serde_json::{json, Value};

use crate::args::{
    Common, Initial, SimOpts, SimulateArgs, SpectrumArgs, SpectrumOpts, StabilityArgs, StateSource, SteadyArgs,
    SteadyOpts, ValidateArgs,
};
use crate::error::CliError;

pub type Outcome = Result<Value, CliError>;

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn apply_overrides(mut model: ModelSpec, common: &Common) -> Result<ModelSpec, CliError> {
    if let Some(s_max) = common.s_max {
        model.s_max = s_max;
        model.check()?;
    }
    Ok(model)
}

pub fn load_model(common: &Common) -> Result<ModelSpec, CliError> {
    let model = parse_model_config(&read_text(&common.model)?)?;
    apply_overrides(model, common)
}

pub fn build_grid(model: &ModelSpec, common: &Common) -> Result<Arc<Grid>, CliError> {
    Ok(Grid::build(model.s_max, common.grid_cells, common.spacing)?)
}

pub fn steady_config(opts: &SteadyOpts) -> Result<SteadyConfig, CliError> {
    let [lo, hi] = opts.n0_bracket[..] else {
        return Err(CliError::Usage("--n0-bracket takes two values".into()));
    };
    if !(0.0 <= lo && lo < hi) {
        return Err(CliError::Usage(format!("--n0-bracket needs 0 <= LO < HI, got {lo} {hi}")));
    }
    if !(opts.fp_tol > 0.0) || !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(CliError::Usage("--fp-tol must be > 0 and --damping in (0, 1]".into()));
    }
    Ok(SteadyConfig {
        n0_bracket: [lo, hi],
        fp_tol: opts.fp_tol,
        fp_damping: opts.damping,
        ..SteadyConfig::default()
    })
}

fn resolve_state(
    model: &ModelSpec,
    common: &Common,
    steady: &SteadyOpts,
    source: &StateSource,
) -> Result<SteadyState, CliError> {
    match source {
        StateSource::Steady => {
            let grid = build_grid(model, common)?;
            Ok(solve_steady(model, &grid, &steady_config(steady)?)?)
        }
        StateSource::Trivial => Ok(trivial_steady(model, &build_grid(model, common)?)),
        StateSource::File(path) => Ok(report::read_steady_json(&read_text(path)?)?),
    }
}

pub struct Writer {
    dir: PathBuf,
    written: Vec<String>,
}

impl Writer {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path.display().to_string());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut body = serde_json::to_string_pretty(value).expect("json values serialize");
        body.push('\n');
        self.text(name, &body)
    }

    pub fn files(&self) -> Value {
        json!(self.written)
    }
}

pub fn validate(args: &ValidateArgs) -> Outcome {
    if !(args.e_max >= 0.0) || args.samples < 2 {
        return Err(CliError::Usage("--e-max must be >= 0 and --samples >= 2".into()));
    }
    let model = load_model(&args.common)?;
    let rep = validate_model(&model, [0.0, args.e_max], args.samples)?;
    let value = serde_json::to_value(&rep).expect("report serializes");
    let mut w = Writer::new(&args.common.out)?;
    w.json("validation.json", &value)?;
    if !rep.ok {
        return Err(CliError::Validation(format!(
            "{} assumption violation(s), tail mass {}",
            rep.violation_count, rep.tail_mass
        )));
    }
    Ok(json!({ "verb": "validate", "ok": true, "files": w.files() }))
}

pub fn steady(args: &SteadyArgs) -> Outcome {
    let model = load_model(&args.common)?;
    let state = resolve_state(&model, &args.common, &args.steady, &StateSource::Steady)?;
    let mut w = Writer::new(&args.common.out)?;
    w.json("steady.json", &report::steady_json(&state))?;
    w.text("steady.csv", &report::steady_csv(&state)?)?;
    Ok(json!({
        "verb": "steady",
        "n0": state.n0,
        "residual_fp": state.residual_fp,
        "residual_R": state.residual_r,
        "files": w.files(),
    }))
}

pub fn stability(args: &StabilityArgs) -> Outcome {
    let model = load_model(&args.common)?;
    let state = resolve_state(&model, &args.common, &args.steady, &args.state.state)?;
    let lin = build_linearization(&model, &state)?;
    let verdict = dissipativity_margin(&lin);
    let mut value = report::stability_json(&verdict);
    if state.is_trivial() {
        let check = trivial_stability_check(&model, state.grid())?;
        value["trivial_check"] = serde_json::to_value(check).expect("plain struct");
    }
    let mut w = Writer::new(&args.common.out)?;
    w.json("stability.json", &value)?;
    w.text("margin.csv", &report::margin_csv(&verdict)?)?;
    Ok(json!({
        "verb": "stability",
        "margin": verdict.margin,
        "stable_by_dissipativity": verdict.stable_by_dissipativity,
        "files": w.files(),
    }))
}

pub fn lambda_range(lin: &Linearization, opts: &SpectrumOpts) -> Result<[f64; 2], CliError> {
    match opts.lambda_range.as_deref() {
        None => Ok(default_lambda_range(lin)),
        Some(&[lo, hi]) if lo < hi => Ok([lo, hi]),
        Some(v) => Err(CliError::Usage(format!("--lambda-range needs LO < HI, got {v:?}"))),
    }
}

pub fn check_spectrum_opts(opts: &SpectrumOpts) -> Result<(), CliError> {
    if opts.scan < 2 || !(opts.root_tol > 0.0) {
        return Err(CliError::Usage("--scan must be >= 2 and --root-tol > 0".into()));
    }
    Ok(())
}

pub fn spectrum(args: &SpectrumArgs) -> Outcome {
    check_spectrum_opts(&args.spectrum)?;
    let model = load_model(&args.common)?;
    let state = resolve_state(&model, &args.common, &args.steady, &args.state.state)?;
    let lin = build_linearization(&model, &state)?;
    let range = lambda_range(&lin, &args.spectrum)?;
    let rep = spectral_report(&lin, range, args.spectrum.scan, args.spectrum.root_tol)?;
    let mut w = Writer::new(&args.common.out)?;
    w.json("spectrum.json", &report::spectral_json(&rep))?;
    w.text("spectrum.csv", &report::spectral_csv(&rep)?)?;
    Ok(json!({
        "verb": "spectrum",
        "K0": rep.k0,
        "rightmost_root": rep.rightmost_root(),
        "files": w.files(),
    }))
}

pub fn sim_config(opts: &SimOpts, mode: Mode, snapshot_times: Vec<f64>) -> Result<SimConfig, CliError> {
    if !(opts.t_end > 0.0) || !(opts.cfl > 0.0 && opts.cfl <= 1.0) || opts.record_every == 0 {
        return Err(CliError::Usage("--t-end must be > 0, --cfl in (0, 1], --record-every >= 1".into()));
    }
    Ok(SimConfig {
        dt: None,
        cfl: opts.cfl,
        t_end: opts.t_end,
        record_every: opts.record_every,
        mode,
        snapshot_times,
    })
}

/// Piecewise-linear interpolation of `(xs, ys)` onto the grid, zero outside.
fn interpolate(grid: &Arc<Grid>, xs: &[f64], ys: &[f64]) -> Result<GridFunction, CliError> {
    if xs.len() < 2 || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CliError::Usage("initial profile needs at least two rows with ascending s".into()));
    }
    Ok(GridFunction::from_fn(grid, |s| {
        if s < xs[0] || s > xs[xs.len() - 1] {
            return 0.0;
        }
        let k = xs.partition_point(|&x| x <= s).clamp(1, xs.len() - 1);
        let t = (s - xs[k - 1]) / (xs[k] - xs[k - 1]);
        ys[k - 1] + t * (ys[k] - ys[k - 1])
    }))
}

pub fn simulate_cmd(args: &SimulateArgs) -> Outcome {
    let cfg = sim_config(&args.sim, args.mode, args.snapshots.clone())?;
    let model = load_model(&args.common)?;
    let need_state = args.mode == Mode::Linearized || args.initial == Initial::Steady;
    let state = if need_state {
        Some(resolve_state(&model, &args.common, &args.steady, &args.state.state)?)
    } else {
        None
    };
    let grid = match &state {
        Some(s) => s.grid().clone(),
        None => build_grid(&model, &args.common)?,
    };
    let initial = match &args.initial {
        Initial::Steady => state.as_ref().expect("state resolved above").n.clone(),
        Initial::Bump { center, width, amp } => {
            GridFunction::from_fn(&grid, |s| amp * (-((s - center) / width).powi(2)).exp())
        }
        Initial::File(path) => {
            let (xs, ys) = report::read_profile_csv(&read_text(path)?)?;
            interpolate(&grid, &xs, &ys)?
        }
    };
    let lin = match (&state, args.mode) {
        (Some(s), Mode::Linearized) => Some(build_linearization(&model, s)?),
        _ => None,
    };
    let rep = simulate(&model, &initial, &cfg, lin.as_ref())?;
    let mut w = Writer::new(&args.common.out)?;
    w.text("sim.csv", &report::sim_csv(&rep)?)?;
    for (k, (_, profile)) in rep.snapshots.iter().enumerate() {
        w.text(&format!("snapshot_{k}.csv"), &report::profile_csv(profile)?)?;
    }
    Ok(json!({
        "verb": "simulate",
        "growth_rate": rep.growth_rate,
        "dt": rep.dt,
        "steps": rep.steps,
        "files": w.files(),
    }))
}
