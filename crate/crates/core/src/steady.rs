//! Stationary solutions and the net reproduction functional.
//!
//! A positive equilibrium is found by nested iteration: for a trial boundary
//! density `n*(0)` a damped Picard loop makes the feedbacks `(E*, M*)`
//! self-consistent with the stationary profile, and an outer bisection on
//! `n*(0)` drives the net reproduction number to one.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::ingredients::ModelSpec;
use crate::sampled::{gf, weighted_sum, NodeRates};

const MAX_BISECTIONS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct SteadyState {
    /// Boundary density `n*(0)`.
    pub n0: f64,
    pub n: GridFunction,
    pub e: GridFunction,
    pub m: GridFunction,
    /// `max(‖E − E[n]‖∞, ‖M − M[n]‖∞)`
    pub residual_fp: f64,
    /// `|R − 1|` for positive states.
    pub residual_r: f64,
}

impl SteadyState {
    pub fn grid(&self) -> &Arc<Grid> {
        self.n.grid()
    }

    pub fn is_trivial(&self) -> bool {
        self.n.values().iter().all(|&v| v == 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteadyConfig {
    pub n0_bracket: [f64; 2],
    pub fp_tol: f64,
    pub fp_damping: f64,
    pub max_iter: usize,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        SteadyConfig {
            n0_bracket: [0.0, 10.0],
            fp_tol: 1e-10,
            fp_damping: 0.5,
            max_iter: 10_000,
        }
    }
}

/// `E(s) = ∫ c(y) α(y,s) n(y) dy` and `M(s) = ∫ α(s,y) n(y) dy`.
pub fn feedbacks_from_density(model: &ModelSpec, n: &GridFunction) -> (GridFunction, GridFunction) {
    let rates = NodeRates::new(model, n.grid());
    feedbacks_sampled(&rates, n)
}

/// Kernel sums factor through the separable terms, so each feedback costs
/// one quadrature per term instead of one per node.
pub(crate) fn feedbacks_sampled(rates: &NodeRates, n: &GridFunction) -> (GridFunction, GridFunction) {
    let grid = n.grid();
    let len = grid.len();
    let mut e = vec![0.0; len];
    let mut m = vec![0.0; len];
    for t in &rates.terms {
        let prey_energy = weighted_sum(grid, &t.c_alpha1, n.values());
        let attackers = weighted_sum(grid, &t.alpha2, n.values());
        for j in 0..len {
            e[j] += t.alpha2[j] * prey_energy;
            m[j] += t.alpha1[j] * attackers;
        }
    }
    (gf(grid, e), gf(grid, m))
}

fn gamma_along(model: &ModelSpec, e: &GridFunction) -> Result<Vec<f64>> {
    e.grid()
        .nodes()
        .iter()
        .zip(e.values())
        .map(|(&s, &ev)| {
            let g = model.gamma.value(s, ev);
            if g >= model.gamma0 {
                Ok(g)
            } else {
                Err(Error::GammaBound {
                    s,
                    value: g,
                    gamma0: model.gamma0,
                })
            }
        })
        .collect()
}

/// Survival exponent `∫₀^s (μ(y,E(y)) + M(y))/γ(y,E(y)) dy` and `γ(s, E(s))`.
fn survival_exponent(model: &ModelSpec, e: &GridFunction, m: &GridFunction) -> Result<(GridFunction, Vec<f64>)> {
    let gamma = gamma_along(model, e)?;
    let grid = e.grid();
    let rate: Vec<f64> = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &s)| (model.mu.value(s, e[i]) + m[i]) / gamma[i])
        .collect();
    Ok((gf(grid, rate).cumulative_integral(), gamma))
}

/// Stationary profile `n(s) = n0·γ(0,E(0))/γ(s,E(s))·exp{−∫₀^s (μ+M)/γ}`.
pub fn profile_from_feedbacks(model: &ModelSpec, n0: f64, e: &GridFunction, m: &GridFunction) -> Result<GridFunction> {
    if !(n0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("n0 must be >= 0, got {n0}")));
    }
    let (exponent, gamma) = survival_exponent(model, e, m)?;
    let values = exponent
        .values()
        .iter()
        .zip(&gamma)
        .map(|(x, g)| n0 * gamma[0] / g * (-x).exp())
        .collect();
    Ok(gf(e.grid(), values))
}

/// Net reproduction number of the environment `(E, M)`.
pub fn net_reproduction(model: &ModelSpec, e: &GridFunction, m: &GridFunction) -> Result<f64> {
    let (exponent, gamma) = survival_exponent(model, e, m)?;
    let grid = e.grid();
    let integrand = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &s)| model.beta.value(s) / gamma[i] * (-exponent[i]).exp())
        .collect();
    Ok(gf(grid, integrand).integrate())
}

/// `R(n)`: net reproduction number of the environment generated by `n`.
pub fn net_reproduction_of_density(model: &ModelSpec, n: &GridFunction) -> Result<f64> {
    let (e, m) = feedbacks_from_density(model, n);
    net_reproduction(model, &e, &m)
}

pub fn trivial_steady(_model: &ModelSpec, grid: &Arc<Grid>) -> SteadyState {
    SteadyState {
        n0: 0.0,
        n: GridFunction::zeros(grid),
        e: GridFunction::zeros(grid),
        m: GridFunction::zeros(grid),
        residual_fp: 0.0,
        residual_r: 0.0,
    }
}

struct Solver<'a> {
    model: &'a ModelSpec,
    grid: &'a Arc<Grid>,
    rates: NodeRates,
    cfg: SteadyConfig,
}

struct Inner {
    n: GridFunction,
    e: GridFunction,
    m: GridFunction,
    residual: f64,
}

impl Solver<'_> {
    /// Damped Picard iteration on `(E, M)` at fixed `n0`, started from zero.
    fn inner(&self, n0: f64) -> Result<Inner> {
        let mut e = GridFunction::zeros(self.grid);
        let mut m = GridFunction::zeros(self.grid);
        let d = self.cfg.fp_damping;
        let mut residual = f64::INFINITY;
        for _ in 0..self.cfg.max_iter {
            let n = profile_from_feedbacks(self.model, n0, &e, &m)?;
            let (e_new, m_new) = feedbacks_sampled(&self.rates, &n);
            residual = sup_diff(&e_new, &e).max(sup_diff(&m_new, &m));
            if !residual.is_finite() {
                break;
            }
            if residual < self.cfg.fp_tol {
                return Ok(Inner { n, e, m, residual });
            }
            e = e.zip_with(&e_new, |a, b| (1.0 - d) * a + d * b);
            m = m.zip_with(&m_new, |a, b| (1.0 - d) * a + d * b);
        }
        Err(Error::NonConvergence {
            iterations: self.cfg.max_iter,
            residual,
        })
    }

    fn state(&self, n0: f64) -> Result<(SteadyState, f64)> {
        let inner = self.inner(n0)?;
        let f = net_reproduction(self.model, &inner.e, &inner.m)? - 1.0;
        Ok((
            SteadyState {
                n0,
                n: inner.n,
                e: inner.e,
                m: inner.m,
                residual_fp: inner.residual,
                residual_r: f.abs(),
            },
            f,
        ))
    }
}

fn sup_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Solves for a stationary state with `n*(0)` in `cfg.n0_bracket`.
///
/// A degenerate bracket `[a, a]` skips the root-find and returns the
/// self-consistent state at `n*(0) = a`; `[0, 0]` gives the trivial state with
/// `residual_r = |R(0) − 1|`.
pub fn solve_steady(model: &ModelSpec, grid: &Arc<Grid>, cfg: &SteadyConfig) -> Result<SteadyState> {
    let [lo, hi] = cfg.n0_bracket;
    if !(lo >= 0.0 && hi >= lo) {
        return Err(Error::InvalidParameter(format!("invalid n0 bracket [{lo}, {hi}]")));
    }
    if !(cfg.fp_damping > 0.0 && cfg.fp_damping <= 1.0) {
        return Err(Error::InvalidParameter(format!("damping must lie in (0, 1], got {}", cfg.fp_damping)));
    }
    if !(cfg.fp_tol > 0.0) {
        return Err(Error::InvalidParameter("fp_tol must be > 0".into()));
    }
    let solver = Solver {
        model,
        grid,
        rates: NodeRates::new(model, grid),
        cfg: *cfg,
    };
    if lo == hi {
        return Ok(solver.state(lo)?.0);
    }

    let tol = cfg.fp_tol;
    let (mut s_lo, mut f_lo) = solver.state(lo)?;
    let (mut s_hi, mut f_hi) = solver.state(hi)?;
    let lo_ok = f_lo.abs() < tol;
    let hi_ok = f_hi.abs() < tol;
    if f_lo.signum() == f_hi.signum() && !(lo_ok || hi_ok) {
        return Err(Error::NoEquilibrium { lo, hi, f_lo, f_hi });
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (a + b);
        let (s_mid, f_mid) = solver.state(mid)?;
        if f_mid.abs() < tol {
            return Ok(s_mid);
        }
        if mid <= a || mid >= b {
            break;
        }
        if f_mid.signum() == f_lo.signum() {
            a = mid;
            f_lo = f_mid;
            s_lo = s_mid;
        } else {
            b = mid;
            f_hi = f_mid;
            s_hi = s_mid;
        }
    }
    // bracket collapsed to adjacent floats without meeting the tolerance
    let best = if f_lo.abs() <= f_hi.abs() { s_lo } else { s_hi };
    if best.residual_r < tol {
        Ok(best)
    } else {
        Err(Error::NonConvergence {
            iterations: MAX_BISECTIONS,
            residual: best.residual_r,
        })
    }
}
