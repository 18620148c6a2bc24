//! Point spectrum of the linearized generator on the real axis.
//!
//! For a strictly separable kernel `α(y,s) = α₁(y)α₂(s)` the eigenvalue
//! problem reduces to a 3×3 linear system in `(u(0), ū₁, ū₂)` whose
//! determinant `K(λ)` vanishes exactly at eigenvalues with `λ > −μ₀`.
//! `L(λ) = Λ(π(·,λ)) − 1` plays the same role for `A + B` alone.
//!
//! Integrals of the form `π(s,λ)·∫₀^s q(r)/(γ*(r)π(r,λ)) dr` are evaluated by
//! a trapezoid recursion on the ratio `π(sᵢ₊₁)/π(sᵢ)`, so underflow of `π`
//! deep in the tail never produces `0/0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::ingredients::ModelSpec;
use crate::linearization::Linearization;
use crate::par;
use crate::sampled::gf;
use crate::steady::SteadyState;

const MAX_BISECTIONS: usize = 200;

/// Relative tolerance for the `c·α₁ = p·α₂` check.
const PROPORTIONALITY_TOL: f64 = 1e-9;

fn check_domain(lin: &Linearization, lambda: f64) -> Result<()> {
    if lambda > -lin.mu0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::LambdaOutOfDomain {
            lambda,
            neg_mu0: -lin.mu0,
        })
    }
}

fn exponent(lin: &Linearization, lambda: f64) -> Vec<f64> {
    lin.survival_exponent
        .values()
        .iter()
        .zip(lin.transit_time.values())
        .map(|(phi, tau)| phi + lambda * tau)
        .collect()
}

/// `π(s,λ) = γ*(0)/γ*(s)·exp{−∫₀^s (μ + M* + λ)/γ* dy}`.
pub fn pi_eval(lin: &Linearization, lambda: f64) -> Result<GridFunction> {
    check_domain(lin, lambda)?;
    Ok(gf(lin.grid(), exponent(lin, lambda).into_iter().map(|x| (-x).exp()).collect()))
}

/// `π(s,λ) = exp{−∫₀^s (ρ*+λ)/γ* dy}` integrated directly from `ρ*`, which
/// carries the grid derivative `γ*_s`. Agrees with [`pi_eval`] to O(h²).
pub fn pi_eval_from_rho(lin: &Linearization, lambda: f64) -> Result<GridFunction> {
    check_domain(lin, lambda)?;
    let rate = lin.rho_star.zip_with(&lin.gamma_star, |r, g| (r + lambda) / g);
    Ok(rate.cumulative_integral().map(|x| (-x).exp()))
}

/// `J(s) = ∫₀^s exp{−(Φ(s) − Φ(r))}·q(r)/γ*(r) dr` where `π = e^{−Φ}`.
fn propagate(lin: &Linearization, phi: &[f64], q: &[f64]) -> Vec<f64> {
    let nodes = lin.grid().nodes();
    let gamma = lin.gamma_star.values();
    let mut out = Vec::with_capacity(q.len());
    out.push(0.0);
    let mut acc = 0.0;
    for i in 1..q.len() {
        let decay = (-(phi[i] - phi[i - 1])).exp();
        let h = nodes[i] - nodes[i - 1];
        acc = decay * acc + 0.5 * h * (decay * q[i - 1] / gamma[i - 1] + q[i] / gamma[i]);
        out.push(acc);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CharacteristicSample {
    pub lambda: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub a: [f64; 9],
    #[serde(rename = "L")]
    pub l: f64,
}

impl CharacteristicSample {
    /// Rows of the 3×3 system in `(u(0), ū₁, ū₂)`.
    pub fn matrix(&self, g3_scaled: f64) -> [[f64; 3]; 3] {
        let a = &self.a;
        [
            [a[0], 1.0 + a[1], a[2]],
            [a[3], a[4], 1.0 + a[5]],
            [1.0 + a[6], g3_scaled + a[7], a[8]],
        ]
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// The boundary correction `g₃` enters the third row divided by `γ*(0)`,
/// matching the boundary functional `Λ`.
fn g3_scaled(lin: &Linearization) -> Result<f64> {
    Ok(lin.g3()? / lin.gamma_star[0])
}

struct Propagated {
    pi: Vec<f64>,
    j1: Vec<f64>,
    j2: Vec<f64>,
}

fn propagated(lin: &Linearization, lambda: f64) -> Result<Propagated> {
    let term = lin.c_terms.first().ok_or(Error::NotSeparable { terms: 0 })?;
    if lin.c_terms.len() != 1 {
        return Err(Error::NotSeparable {
            terms: lin.c_terms.len(),
        });
    }
    check_domain(lin, lambda)?;
    let phi = exponent(lin, lambda);
    let pi = phi.iter().map(|x| (-x).exp()).collect();
    let j1 = propagate(lin, &phi, term.g1.values());
    let j2 = propagate(lin, &phi, term.g2.values());
    Ok(Propagated { pi, j1, j2 })
}

/// `a₁(λ)…a₉(λ)`, `K(λ)` and `L(λ)` at one real `λ > −μ₀`.
pub fn characteristic_k(lin: &Linearization, lambda: f64) -> Result<CharacteristicSample> {
    let p = propagated(lin, lambda)?;
    let term = &lin.c_terms[0];
    let grid = lin.grid();
    let w = grid.weights();
    let g0 = lin.gamma_star[0];
    let beta_weight: Vec<f64> = grid.nodes().iter().map(|&s| lin.model().beta.value(s) / g0).collect();
    let integral = |weight: &[f64], f: &[f64]| -> f64 { (0..f.len()).map(|i| w[i] * weight[i] * f[i]).sum() };
    let prey = term.prey_weight.values();
    let att = term.attacker_weight.values();
    let a = [
        -integral(prey, &p.pi),
        integral(prey, &p.j1),
        integral(prey, &p.j2),
        -integral(att, &p.pi),
        integral(att, &p.j1),
        integral(att, &p.j2),
        -integral(&beta_weight, &p.pi),
        integral(&beta_weight, &p.j1),
        integral(&beta_weight, &p.j2),
    ];
    let l = integral(lin.lambda_weight.values(), &p.pi) - 1.0;
    let mut sample = CharacteristicSample { lambda, k: 0.0, a, l };
    sample.k = det3(&sample.matrix(g3_scaled(lin)?));
    Ok(sample)
}

/// `L(λ) = Λ(π(·,λ)) − 1`; zeros are the eigenvalues of `A + B`.
pub fn characteristic_l(lin: &Linearization, lambda: f64) -> Result<f64> {
    let pi = pi_eval(lin, lambda)?;
    Ok(lin.boundary_functional(&pi) - 1.0)
}

/// `L′(0) = −∫ w_Λ(s)·π(s,0)·τ(s) ds`, `τ(s) = ∫₀^s dr/γ*(r)`.
pub fn l_prime_zero(lin: &Linearization) -> Result<f64> {
    let pi = pi_eval(lin, 0.0)?;
    let f = pi.zip_with(&lin.transit_time, |p, t| p * t);
    Ok(-lin.lambda_weight.dot(&f))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Root {
    pub lambda: f64,
    pub bracket: [f64; 2],
    pub value: f64,
    pub converged: bool,
}

/// Default `λ` window: from just above `−μ₀` to `10·max ρ*/min γ*`.
pub fn default_lambda_range(lin: &Linearization) -> [f64; 2] {
    let max_rho = lin.rho_star.max();
    let min_gamma = lin.gamma_star.min();
    let hi = if max_rho > 0.0 { 10.0 * max_rho / min_gamma } else { 1.0 };
    [-lin.mu0 + 1e-3 * lin.mu0, hi]
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn bisect(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut fa: f64, mut b: f64, tol: f64) -> Result<Root> {
    let bracket = [a, b];
    let mut best = (a, fa);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (a + b);
        let fm = f(mid)?;
        if fm.abs() < best.1.abs() {
            best = (mid, fm);
        }
        if fm.abs() < tol {
            return Ok(Root {
                lambda: mid,
                bracket,
                value: fm,
                converged: true,
            });
        }
        if mid <= a || mid >= b {
            break;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(Root {
        lambda: best.0,
        bracket,
        value: best.1,
        converged: best.1.abs() < tol,
    })
}

/// Sign-change scan of `f` on sampled values, refined by bisection.
fn roots_from_samples(
    f: &(dyn Fn(f64) -> Result<f64> + Sync),
    lambdas: &[f64],
    values: &[f64],
    root_tol: f64,
) -> Result<Vec<Root>> {
    let mut roots = Vec::new();
    for i in 0..values.len() {
        if values[i] == 0.0 {
            roots.push(Root {
                lambda: lambdas[i],
                bracket: [lambdas[i], lambdas[i]],
                value: 0.0,
                converged: true,
            });
            continue;
        }
        if i + 1 < values.len() && values[i + 1] != 0.0 && values[i].signum() != values[i + 1].signum() {
            roots.push(bisect(f, lambdas[i], values[i], lambdas[i + 1], root_tol)?);
        }
    }
    Ok(roots)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RootScan {
    pub samples: Vec<CharacteristicSample>,
    pub roots: Vec<Root>,
}

/// Evaluates `K` on `n_scan` equispaced points of `lambda_range` and
/// bisects every sign change down to `|K| < root_tol`. Roots ascend.
pub fn scan_real_roots_k(lin: &Linearization, lambda_range: [f64; 2], n_scan: usize, root_tol: f64) -> Result<RootScan> {
    let [lo, hi] = lambda_range;
    check_domain(lin, lo)?;
    if n_scan < 2 || !(hi > lo) {
        return Err(Error::InvalidParameter(format!(
            "scan needs n_scan >= 2 and lo < hi, got {n_scan} on [{lo}, {hi}]"
        )));
    }
    let lambdas = linspace(lo, hi, n_scan);
    let samples = par::map_slice(&lambdas, |&l| characteristic_k(lin, l))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = samples.iter().map(|s| s.k).collect();
    let k = |l: f64| characteristic_k(lin, l).map(|s| s.k);
    let roots = roots_from_samples(&k, &lambdas, &values, root_tol)?;
    Ok(RootScan { samples, roots })
}

/// Real roots of `L` on the same kind of scan (no separability required).
pub fn scan_real_roots_l(lin: &Linearization, lambda_range: [f64; 2], n_scan: usize, root_tol: f64) -> Result<Vec<Root>> {
    let [lo, hi] = lambda_range;
    check_domain(lin, lo)?;
    if n_scan < 2 || !(hi > lo) {
        return Err(Error::InvalidParameter("scan needs n_scan >= 2 and lo < hi".into()));
    }
    let lambdas = linspace(lo, hi, n_scan);
    let values = par::map_slice(&lambdas, |&l| characteristic_l(lin, l))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let l = |x: f64| characteristic_l(lin, x);
    roots_from_samples(&l, &lambdas, &values, root_tol)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralReport {
    pub lambda_range: [f64; 2],
    pub mu0: f64,
    pub samples: Vec<CharacteristicSample>,
    #[serde(rename = "real_roots_K")]
    pub real_roots_k: Vec<Root>,
    #[serde(rename = "K0")]
    pub k0: f64,
    #[serde(rename = "unstable_by_K0")]
    pub unstable_by_k0: bool,
    #[serde(rename = "L_roots")]
    pub l_roots: Vec<Root>,
    #[serde(rename = "Lprime0")]
    pub l_prime0: f64,
    /// Complex eigenvalues are not searched for.
    pub scope: &'static str,
}

impl SpectralReport {
    pub fn rightmost_root(&self) -> Option<f64> {
        self.real_roots_k.iter().filter(|r| r.converged).map(|r| r.lambda).reduce(f64::max)
    }
}

pub fn spectral_report(lin: &Linearization, lambda_range: [f64; 2], n_scan: usize, root_tol: f64) -> Result<SpectralReport> {
    let scan = scan_real_roots_k(lin, lambda_range, n_scan, root_tol)?;
    let k0 = characteristic_k(lin, 0.0)?.k;
    Ok(SpectralReport {
        lambda_range,
        mu0: lin.mu0,
        samples: scan.samples,
        real_roots_k: scan.roots,
        k0,
        unstable_by_k0: k0 < 0.0,
        l_roots: scan_real_roots_l(lin, lambda_range, n_scan, root_tol)?,
        l_prime0: l_prime_zero(lin)?,
        scope: "real-axis scan only",
    })
}

#[derive(Clone, Debug)]
pub struct Example33 {
    pub condition_holds: bool,
    pub profile: GridFunction,
}

fn check_proportional(model: &ModelSpec, lin: &Linearization, p: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Precondition(format!("proportionality factor must be > 0, got {p}")));
    }
    let term = model.alpha.single_term()?;
    let nodes = lin.grid().nodes();
    let scale = nodes
        .iter()
        .map(|&s| (p * term.alpha2.value(s)).abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for &s in nodes {
        let gap = model.c.value(s) * term.alpha1.value(s) - p * term.alpha2.value(s);
        if gap.abs() > PROPORTIONALITY_TOL * scale {
            return Err(Error::Precondition(format!("c·α₁ ≠ p·α₂ at s = {s} (gap {gap})")));
        }
    }
    Ok(())
}

/// Pointwise sufficient condition for `K(0) < 0` when `c·α₁ = p·α₂` and
/// `α₂(0) = 0`:
///
/// `p⁻¹α₁ + α₂′γ_E + α₂·(d/ds γ_E(s,E*) − γ_E·ρ*/γ* + μ_E) < 0`.
///
/// At `s = 0` the profile reduces to `p⁻¹α₁(0) + α₂′(0)γ_E(0)`, which is zero
/// whenever `γ_E(0) = 0`; the condition asks for `≤ 0` there and strict
/// negativity at every `s > 0`.
pub fn instability_example33(model: &ModelSpec, lin: &Linearization, p: f64) -> Result<Example33> {
    check_proportional(model, lin, p)?;
    let term = model.alpha.single_term()?;
    if term.alpha2.value(0.0) != 0.0 {
        return Err(Error::Precondition("α₂(0) must vanish".into()));
    }
    let grid = lin.grid();
    let d_gamma_e = lin.gamma_e.derivative();
    let values: Vec<f64> = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let a2 = term.alpha2.value(s);
            let ge = lin.gamma_e[i];
            term.alpha1.value(s) / p
                + term.alpha2.deriv(s) * ge
                + a2 * (d_gamma_e[i] - ge * lin.rho_star[i] / lin.gamma_star[i] + lin.mu_e[i])
        })
        .collect();
    let condition_holds = values[0] <= 0.0 && values[1..].iter().all(|&v| v < 0.0);
    Ok(Example33 {
        condition_holds,
        profile: gf(grid, values),
    })
}

/// Formal derivative of the age-structured net reproduction `R̃(E)` at `E*`:
///
/// `−∫ β(a)·exp{−∫₀^a μ(y,E*) + E*(y)·α₁/(pα₂) dy}·∫₀^a (μ_E(y,E*) + α₁/(pα₂)) dy da`.
pub fn rtilde_prime(model: &ModelSpec, state: &SteadyState, p: f64) -> Result<f64> {
    let unit_growth = model.gamma.is_env_free()
        && model.gamma.base.family == crate::ingredients::RateFamily::Constant
        && model.gamma.base.params[0] == 1.0;
    if !unit_growth {
        return Err(Error::Precondition("requires the age-structured case γ ≡ 1".into()));
    }
    if !(p > 0.0) {
        return Err(Error::Precondition(format!("proportionality factor must be > 0, got {p}")));
    }
    let term = model.alpha.single_term()?;
    let grid = state.grid();
    let nodes = grid.nodes();
    let scale = nodes.iter().map(|&s| (p * term.alpha2.value(s)).abs()).fold(0.0, f64::max);
    let mut ratio = Vec::with_capacity(nodes.len());
    for (i, &s) in nodes.iter().enumerate() {
        let (a1, a2, c) = (term.alpha1.value(s), term.alpha2.value(s), model.c.value(s));
        if (c * a1 - p * a2).abs() > PROPORTIONALITY_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Precondition(format!("c·α₁ ≠ p·α₂ at s = {s}")));
        }
        let r = if a2 > 0.0 {
            a1 / (p * a2)
        } else if i == 0 && c > 0.0 {
            // limit of α₁/(pα₂) along c·α₁ = p·α₂
            1.0 / c
        } else {
            return Err(Error::Precondition(format!("α₂ must be positive at interior node s = {s}")));
        };
        ratio.push(r);
    }
    let e = &state.e;
    let exponent = gf(
        grid,
        nodes.iter().enumerate().map(|(i, &s)| model.mu.value(s, e[i]) + e[i] * ratio[i]).collect(),
    )
    .cumulative_integral();
    let inner = gf(
        grid,
        nodes.iter().enumerate().map(|(i, &s)| model.mu.d_env(s, e[i]) + ratio[i]).collect(),
    )
    .cumulative_integral();
    let integrand = gf(
        grid,
        nodes
            .iter()
            .enumerate()
            .map(|(i, &s)| model.beta.value(s) * (-exponent[i]).exp() * inner[i])
            .collect(),
    );
    Ok(-integrand.integrate())
}

/// Solves `(λ − (A + B)) u = f` through the explicit resolvent formula.
pub fn resolvent_ab(lin: &Linearization, lambda: f64, f: &GridFunction) -> Result<GridFunction> {
    check_domain(lin, lambda)?;
    let phi = exponent(lin, lambda);
    let pi: Vec<f64> = phi.iter().map(|x| (-x).exp()).collect();
    let particular = propagate(lin, &phi, f.values());
    let grid = lin.grid();
    let l_value = grid
        .weights()
        .iter()
        .zip(lin.lambda_weight.values().iter().zip(&pi))
        .map(|(w, (lw, p))| w * lw * p)
        .sum::<f64>()
        - 1.0;
    if l_value.abs() < 1e-12 {
        return Err(Error::Pole { lambda, l_value });
    }
    let u0 = crate::linearization::boundary_total(lin, &particular) / -l_value;
    Ok(gf(
        grid,
        pi.iter().zip(&particular).map(|(p, j)| u0 * p + j).collect(),
    ))
}

#[derive(Clone, Debug)]
pub struct Eigenfunction {
    pub lambda: f64,
    /// `(u(0), ū₁, ū₂)` spanning the kernel of the 3×3 system.
    pub coefficients: [f64; 3],
    pub u: GridFunction,
}

/// Reconstructs `u = u(0)π − ū₁·π∫g₁/(γ*π) − ū₂·π∫g₂/(γ*π)` at a root of `K`.
pub fn eigenfunction(lin: &Linearization, lambda: f64) -> Result<Eigenfunction> {
    let sample = characteristic_k(lin, lambda)?;
    let m = sample.matrix(g3_scaled(lin)?);
    let candidates = [cross(&m[0], &m[1]), cross(&m[0], &m[2]), cross(&m[1], &m[2])];
    let norm = |v: &[f64; 3]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut coefficients = candidates
        .iter()
        .copied()
        .max_by(|a, b| norm(a).total_cmp(&norm(b)))
        .expect("three candidates");
    let scale = norm(&coefficients);
    if scale == 0.0 {
        return Err(Error::Precondition("degenerate characteristic matrix".into()));
    }
    let sign = if coefficients[0] < 0.0 { -1.0 } else { 1.0 };
    coefficients.iter_mut().for_each(|c| *c *= sign / scale);
    let p = propagated(lin, lambda)?;
    let [u0, u1, u2] = coefficients;
    let values = (0..p.pi.len())
        .map(|i| u0 * p.pi[i] - u1 * p.j1[i] - u2 * p.j2[i])
        .collect();
    Ok(Eigenfunction {
        lambda,
        coefficients,
        u: gf(lin.grid(), values),
    })
}

/// `‖(A+B+C)u − λu‖₁ / ‖u‖₁` and `|u(0) − Λ(u)| / ‖u‖∞` for the
/// reconstructed eigenfunction.
pub fn eigen_residual(lin: &Linearization, eig: &Eigenfunction) -> (f64, f64) {
    let au = lin.apply_generator(&eig.u);
    let r = au.zip_with(&eig.u, |a, u| a - eig.lambda * u);
    let interior = r.l1_norm() / eig.u.l1_norm();
    let boundary = (eig.u[0] - lin.boundary_functional(&eig.u)).abs() / eig.u.sup_norm();
    (interior, boundary)
}
