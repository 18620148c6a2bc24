//! Explicit first-order upwind simulation of the nonlinear and the
//! linearized equations.
//!
//! Node `i ≥ 1` is the right end of cell `(s_{i−1}, s_i]` and is updated in
//! flux form `nᵢ ← nᵢ − dt/hᵢ·(Fᵢ − Fᵢ₋₁) − dt·lossᵢ·nᵢ + dt·sourceᵢ` with
//! `F = γ·n`. Node 0 is then fixed by the renewal condition. The last node
//! uses the same update, so mass leaves at `s_max` with flux `γ·n`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::ingredients::ModelSpec;
use crate::linearization::Linearization;
use crate::sampled::{gf, NodeRates};
use crate::steady::feedbacks_sampled;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Nonlinear,
    Linearized,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonlinear" => Ok(Mode::Nonlinear),
            "linearized" => Ok(Mode::Linearized),
            other => Err(Error::UnknownSelector(format!("mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Fixed step. When `None` the step is `cfl · minᵢ hᵢ/(γᵢ + hᵢ·lossᵢ)`.
    pub dt: Option<f64>,
    pub cfl: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub mode: Mode,
    /// Profiles are copied at the first step reaching each of these times.
    pub snapshot_times: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: None,
            cfl: 0.9,
            t_end: 10.0,
            record_every: 10,
            mode: Mode::Nonlinear,
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimReport {
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub boundary_values: Vec<f64>,
    /// Least-squares slope of `ln‖n‖₁` over the final third of the records.
    pub growth_rate: f64,
    /// `d/dt ln‖n‖₁` between consecutive records.
    pub local_rates: Vec<f64>,
    pub profile_distance: Vec<f64>,
    pub mass_residuals: Vec<f64>,
    pub min_values: Vec<f64>,
    /// `max |n|` at each record.
    pub sup_norms: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub final_state: GridFunction,
    pub snapshots: Vec<(f64, GridFunction)>,
}

/// Frozen per-run data: sampled rates and, in linearized mode, the
/// starred coefficients.
struct Stepper<'a> {
    model: &'a ModelSpec,
    grid: Arc<Grid>,
    mode: Mode,
    rates: NodeRates,
    lin: Option<&'a Linearization>,
}

/// Right-hand side pieces evaluated at the current state.
struct Coefficients {
    gamma: Vec<f64>,
    loss: Vec<f64>,
    source: Vec<f64>,
    /// Quadrature weights of the renewal condition: `γ₀·n(0) = Σ wᵢ·bᵢ·nᵢ`.
    renewal: Vec<f64>,
    gamma_at_zero: f64,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a ModelSpec, grid: &Arc<Grid>, lin: Option<&'a Linearization>, mode: Mode) -> Result<Self> {
        if mode == Mode::Linearized {
            let l = lin.ok_or_else(|| Error::Precondition("linearized mode requires a linearization".into()))?;
            if !l.grid().same_nodes(grid) {
                return Err(Error::InvalidGrid("state and linearization live on different grids".into()));
            }
        }
        Ok(Stepper {
            model,
            grid: grid.clone(),
            mode,
            rates: NodeRates::new(model, grid),
            lin,
        })
    }

    fn coefficients(&self, n: &GridFunction) -> Result<Coefficients> {
        let nodes = self.grid.nodes();
        match self.mode {
            Mode::Nonlinear => {
                let (e, m) = feedbacks_sampled(&self.rates, n);
                let mut gamma = Vec::with_capacity(nodes.len());
                for (i, &s) in nodes.iter().enumerate() {
                    let g = self.model.gamma.value(s, e[i]);
                    if !(g > 0.0) {
                        return Err(Error::GammaBound {
                            s,
                            value: g,
                            gamma0: self.model.gamma0,
                        });
                    }
                    gamma.push(g);
                }
                let loss = nodes
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| self.model.mu.value(s, e[i]) + m[i])
                    .collect();
                Ok(Coefficients {
                    gamma_at_zero: gamma[0],
                    gamma,
                    loss,
                    source: vec![0.0; nodes.len()],
                    renewal: self.rates.beta.clone(),
                })
            }
            Mode::Linearized => {
                let lin = self.lin.expect("checked in new");
                let gamma = lin.gamma_star.values().to_vec();
                // u(0) = Λ(u) is the renewal condition with γ₀ = γ*(0)
                let renewal = lin.lambda_weight.values().iter().map(|w| w * gamma[0]).collect();
                Ok(Coefficients {
                    gamma_at_zero: gamma[0],
                    gamma,
                    loss: lin.mortality_star.values().to_vec(),
                    source: lin.apply_c(n).into_values(),
                    renewal,
                })
            }
        }
    }

    fn stable_dt(&self, n: &GridFunction, cfl: f64) -> Result<f64> {
        let c = self.coefficients(n)?;
        let dt = (1..self.grid.len())
            .map(|i| {
                let h = self.grid.width(i);
                h / (c.gamma[i] + h * c.loss[i].max(0.0))
            })
            .fold(f64::INFINITY, f64::min);
        Ok(cfl * dt)
    }

    /// One explicit step; also returns the continuous mass budget
    /// `influx − sink + source − outflow` at the old state.
    fn step(&self, n: &GridFunction, dt: f64) -> Result<(GridFunction, f64)> {
        let c = self.coefficients(n)?;
        let w = self.grid.weights();
        let len = self.grid.len();
        let mut next = vec![0.0; len];
        for i in 1..len {
            let h = self.grid.width(i);
            let courant = dt * c.gamma[i] / h;
            if courant > 1.0 {
                return Err(Error::Cfl {
                    courant,
                    s: self.grid.nodes()[i],
                });
            }
            let flux_in = c.gamma[i - 1] * n[i - 1];
            let flux_out = c.gamma[i] * n[i];
            next[i] = n[i] - dt / h * (flux_out - flux_in) - dt * c.loss[i] * n[i] + dt * c.source[i];
        }
        let interior: f64 = (1..len).map(|i| w[i] * c.renewal[i] * next[i]).sum();
        next[0] = interior / (c.gamma_at_zero - w[0] * c.renewal[0]);

        let influx: f64 = (0..len).map(|i| w[i] * c.renewal[i] * n[i]).sum();
        let sink: f64 = (0..len).map(|i| w[i] * c.loss[i] * n[i]).sum();
        let source: f64 = (0..len).map(|i| w[i] * c.source[i]).sum();
        let outflow = c.gamma[len - 1] * n[len - 1];
        Ok((gf(&self.grid, next), influx - sink + source - outflow))
    }
}

fn check_mode_data(state: &GridFunction, mode: Mode) -> Result<()> {
    if mode == Mode::Nonlinear && state.values().iter().any(|&v| v < 0.0) {
        return Err(Error::Precondition("nonlinear mode needs a nonnegative state".into()));
    }
    Ok(())
}

/// Advances `state` by one explicit upwind step of length `dt`.
pub fn step(model: &ModelSpec, state: &GridFunction, lin: Option<&Linearization>, dt: f64, mode: Mode) -> Result<GridFunction> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    let stepper = Stepper::new(model, state.grid(), lin, mode)?;
    Ok(stepper.step(state, dt)?.0)
}

fn relative_budget_gap(before: &GridFunction, after: &GridFunction, dt: f64, budget: f64) -> f64 {
    let norm = before.l1_norm();
    if norm == 0.0 {
        return 0.0;
    }
    ((after.integrate() - before.integrate()) / dt - budget).abs() / norm
}

/// `|Δ∫n/dt − (∫βn − ∫(μ+M)n − γ(s_max)n(s_max))| / ‖n‖₁` for two
/// consecutive nonlinear states.
pub fn mass_balance_residual(model: &ModelSpec, before: &GridFunction, after: &GridFunction, dt: f64) -> Result<f64> {
    let stepper = Stepper::new(model, before.grid(), None, Mode::Nonlinear)?;
    let c = stepper.coefficients(before)?;
    let w = before.grid().weights();
    let len = w.len();
    let influx: f64 = (0..len).map(|i| w[i] * c.renewal[i] * before[i]).sum();
    let sink: f64 = (0..len).map(|i| w[i] * c.loss[i] * before[i]).sum();
    let outflow = c.gamma[len - 1] * before[len - 1];
    Ok(relative_budget_gap(before, after, dt, influx - sink - outflow))
}

/// Least-squares slope of `ln y` against `t`, skipping zero norms.
fn log_slope(t: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn normalized(n: &GridFunction) -> GridFunction {
    let norm = n.l1_norm();
    if norm > 0.0 {
        n.map(|v| v / norm)
    } else {
        n.clone()
    }
}

/// Runs the scheme from `initial` to `cfg.t_end`.
pub fn simulate(model: &ModelSpec, initial: &GridFunction, cfg: &SimConfig, lin: Option<&Linearization>) -> Result<SimReport> {
    check_mode_data(initial, cfg.mode)?;
    if !(cfg.t_end > 0.0) || cfg.record_every == 0 {
        return Err(Error::InvalidParameter("t_end must be > 0 and record_every >= 1".into()));
    }
    if !(cfg.cfl > 0.0 && cfg.cfl <= 1.0) {
        return Err(Error::InvalidParameter(format!("cfl must lie in (0, 1], got {}", cfg.cfl)));
    }
    let grid = initial.grid().clone();
    let stepper = Stepper::new(model, &grid, lin, cfg.mode)?;
    let dt = match cfg.dt {
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}"))),
        None => stepper.stable_dt(initial, cfg.cfl)?,
    };
    let steps = (cfg.t_end / dt).ceil() as usize;

    let mut times = vec![0.0];
    let mut profiles = vec![initial.clone()];
    let mut mass_residuals = vec![0.0];
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = cfg.snapshot_times.clone();
    pending.sort_by(f64::total_cmp);
    pending.reverse();
    while pending.last().is_some_and(|&t| t <= 0.0) {
        snapshots.push((0.0, initial.clone()));
        pending.pop();
    }

    let mut n = initial.clone();
    let mut t = 0.0;
    for k in 1..=steps {
        let h = dt.min(cfg.t_end - t);
        let (next, budget) = stepper.step(&n, h)?;
        t = if k == steps { cfg.t_end } else { t + h };
        if next.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        while pending.last().is_some_and(|&ts| ts <= t) {
            snapshots.push((t, next.clone()));
            pending.pop();
        }
        if k % cfg.record_every == 0 || k == steps {
            times.push(t);
            mass_residuals.push(relative_budget_gap(&n, &next, h, budget));
            profiles.push(next.clone());
        }
        n = next;
    }

    let norms: Vec<f64> = profiles.iter().map(|p| p.l1_norm()).collect();
    let boundary_values = profiles.iter().map(|p| p[0]).collect();
    let min_values = profiles.iter().map(|p| p.min()).collect();
    let sup_norms = profiles.iter().map(|p| p.sup_norm()).collect();
    let mut local_rates = vec![0.0; times.len()];
    for i in 1..times.len() {
        local_rates[i] = log_slope(&times[i - 1..=i], &norms[i - 1..=i]);
    }
    if times.len() > 1 {
        local_rates[0] = local_rates[1];
    }
    let start = times.len() - times.len().div_ceil(3).max(2).min(times.len());
    let growth_rate = log_slope(&times[start..], &norms[start..]);
    let limit = normalized(&n);
    let profile_distance = profiles
        .iter()
        .map(|p| normalized(p).zip_with(&limit, |a, b| a - b).l1_norm())
        .collect();

    Ok(SimReport {
        times,
        norms,
        boundary_values,
        growth_rate,
        local_rates,
        profile_distance,
        mass_residuals,
        min_values,
        sup_norms,
        dt,
        steps,
        final_state: n,
        snapshots,
    })
}

#[derive(Clone, Debug)]
pub struct AegDiagnostic {
    pub aeg_detected: bool,
    pub limit_profile: GridFunction,
    /// `profile_distance` at the start of the final quarter of the records.
    pub settled_distance: f64,
}

/// Asynchronous exponential growth check on a growing linearized run.
///
/// The distance to the final normalized profile is zero at the last record
/// by construction, so convergence is judged by two things: the distance
/// is nonincreasing over the final half of the records, and it has already
/// dropped below `tol` at the start of the final quarter.
pub fn aeg_diagnostic(report: &SimReport, tol: f64) -> Result<AegDiagnostic> {
    if !(report.growth_rate > 0.0) {
        return Err(Error::NotApplicable(format!(
            "AEG diagnostic needs a growing run, growth_rate = {}",
            report.growth_rate
        )));
    }
    let d = &report.profile_distance;
    let len = d.len();
    let half = len / 2;
    let monotone = d[half..].windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let settled_distance = d[(3 * len) / 4];
    Ok(AegDiagnostic {
        aeg_detected: monotone && settled_distance < tol,
        limit_profile: normalized(&report.final_state),
        settled_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingredients::{AttackKernel, Rate1D, Rate2D};
    use crate::linearization::build_linearization;
    use crate::steady::trivial_steady;

    fn transport_decay(mu: f64) -> ModelSpec {
        ModelSpec {
            beta: Rate1D::constant(0.0),
            mu: Rate2D::without_feedback(Rate1D::constant(mu)),
            gamma: Rate2D::without_feedback(Rate1D::constant(1.0)),
            alpha: AttackKernel::zero(),
            c: Rate1D::constant(1.0),
            gamma0: 0.5,
            s_max: 20.0,
        }
    }

    fn bump(grid: &Arc<Grid>, center: f64, width: f64) -> GridFunction {
        GridFunction::from_fn(grid, |s| {
            let x = (s - center) / width;
            if x.abs() < 1.0 {
                (1.0 - x * x).powi(2)
            } else {
                0.0
            }
        })
    }

    #[test]
    fn zero_state_stays_zero() {
        let m = transport_decay(0.3);
        let g = Grid::uniform(m.s_max, 100).unwrap();
        let z = GridFunction::zeros(&g);
        let next = step(&m, &z, None, 0.1, Mode::Nonlinear).unwrap();
        assert!(next.values().iter().all(|&v| v == 0.0));
        let lin = build_linearization(&m, &trivial_steady(&m, &g)).unwrap();
        let next = step(&m, &z, Some(&lin), 0.1, Mode::Linearized).unwrap();
        assert!(next.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linearized_mode_needs_linearization() {
        let m = transport_decay(0.3);
        let g = Grid::uniform(m.s_max, 50).unwrap();
        let z = GridFunction::zeros(&g);
        assert!(matches!(step(&m, &z, None, 0.1, Mode::Linearized), Err(Error::Precondition(_))));
    }

    #[test]
    fn cfl_violation_is_reported() {
        let m = transport_decay(0.3);
        let g = Grid::uniform(m.s_max, 100).unwrap();
        let n = bump(&g, 5.0, 1.0);
        assert!(matches!(step(&m, &n, None, 0.5, Mode::Nonlinear), Err(Error::Cfl { .. })));
    }

    #[test]
    fn transport_decay_norm() {
        let m = transport_decay(0.4);
        let g = Grid::uniform(m.s_max, 2000).unwrap();
        let n0 = bump(&g, 4.0, 1.5);
        let cfg = SimConfig {
            t_end: 5.0,
            record_every: 50,
            ..SimConfig::default()
        };
        let r = simulate(&m, &n0, &cfg, None).unwrap();
        let exact = (-0.4_f64 * 5.0).exp() * n0.l1_norm();
        // explicit Euler decays by (1 − μ·dt) per step
        assert!((r.norms.last().unwrap() - exact).abs() < 1e-2 * exact);
        assert!((r.growth_rate + 0.4).abs() < 1e-3);
    }

    #[test]
    fn pure_transport_conserves_mass() {
        let m = transport_decay(0.0);
        let g = Grid::uniform(m.s_max, 400).unwrap();
        let n0 = bump(&g, 5.0, 1.0);
        let r = simulate(
            &m,
            &n0,
            &SimConfig {
                t_end: 4.0,
                record_every: 1,
                ..SimConfig::default()
            },
            None,
        )
        .unwrap();
        assert!(r.mass_residuals.iter().all(|&x| x < 1e-10), "{:?}", r.mass_residuals.iter().cloned().fold(0.0, f64::max));
        let before = n0.clone();
        let after = step(&m, &before, None, r.dt, Mode::Nonlinear).unwrap();
        assert!(mass_balance_residual(&m, &before, &after, r.dt).unwrap() < 1e-10);
        let z = GridFunction::zeros(&g);
        assert_eq!(mass_balance_residual(&m, &z, &z, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn decaying_run_is_not_aeg_applicable() {
        let m = transport_decay(0.4);
        let g = Grid::uniform(m.s_max, 200).unwrap();
        let r = simulate(
            &m,
            &bump(&g, 3.0, 1.0),
            &SimConfig {
                t_end: 2.0,
                ..SimConfig::default()
            },
            None,
        )
        .unwrap();
        assert!(matches!(aeg_diagnostic(&r, 0.01), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn records_are_increasing_and_end_at_t_end() {
        let m = transport_decay(0.1);
        let g = Grid::uniform(m.s_max, 100).unwrap();
        let r = simulate(
            &m,
            &bump(&g, 3.0, 1.0),
            &SimConfig {
                t_end: 1.234,
                record_every: 7,
                snapshot_times: vec![0.0, 0.5],
                ..SimConfig::default()
            },
            None,
        )
        .unwrap();
        assert!(r.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*r.times.last().unwrap(), 1.234);
        assert_eq!(r.snapshots.len(), 2);
        assert!(r.snapshots[1].0 >= 0.5);
        assert_eq!(*r.profile_distance.last().unwrap(), 0.0);
    }

    #[test]
    fn negative_initial_data_rejected_in_nonlinear_mode() {
        let m = transport_decay(0.1);
        let g = Grid::uniform(m.s_max, 100).unwrap();
        let n = bump(&g, 3.0, 1.0).map(|v| -v);
        assert!(simulate(&m, &n, &SimConfig::default(), None).is_err());
    }
}
