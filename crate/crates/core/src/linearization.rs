//! Linearization about a stationary state.
//!
//! The linearized generator splits as `A + B + C`:
//!
//! * `A u = −γ*·u_s` on `{u(0) = Λ(u)}`,
//! * `B u = −ρ*·u` with `ρ* = μ(·,E*) + γ*_s + M*`,
//! * `C u = −Σₖ (⟨c·α₁ₖ, u⟩·g1ₖ + ⟨α₂ₖ, u⟩·g2ₖ)`, finite rank because the
//!   attack kernel is a finite sum of separable terms.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::ingredients::ModelSpec;
use crate::par;
use crate::sampled::{gf, weighted_sum, NodeRates};
use crate::steady::{net_reproduction, SteadyState};

/// Rank-two piece of `C` contributed by one separable term.
#[derive(Clone, Debug)]
pub struct CTerm {
    /// `c·α₁`, paired with `u` to give `ū₁`.
    pub prey_weight: GridFunction,
    /// `α₂`, paired with `u` to give `ū₂`.
    pub attacker_weight: GridFunction,
    /// `α₂·((γ_E n*)_s + μ_E n*) + α₂′·γ_E n*`
    pub g1: GridFunction,
    /// `α₁·n*`
    pub g2: GridFunction,
    pub alpha2_at_zero: f64,
}

#[derive(Clone, Debug)]
pub struct Linearization {
    model: ModelSpec,
    state: SteadyState,
    /// `γ*(s) = γ(s, E*(s))`
    pub gamma_star: GridFunction,
    pub gamma_star_s: GridFunction,
    /// `μ(s, E*(s)) + M*(s)`
    pub mortality_star: GridFunction,
    pub rho_star: GridFunction,
    /// `γ_E(s, E*(s))`
    pub gamma_e: GridFunction,
    /// `μ_E(s, E*(s))`
    pub mu_e: GridFunction,
    /// `β(s) − γ_E(0,E*(0))·n*(0)·c(s)·α(s,0)`
    pub boundary_numerator: GridFunction,
    /// Density of the boundary functional: `Λ(u) = ∫ lambda_weight·u`.
    pub lambda_weight: GridFunction,
    pub c_terms: Vec<CTerm>,
    /// `min_s μ(s,E*) + M*`
    pub mu0: f64,
    /// `−ln π(s, 0)` in the overflow-free form
    /// `ln γ*(s) − ln γ*(0) + ∫₀^s (μ + M*)/γ*`.
    pub(crate) survival_exponent: GridFunction,
    /// `τ(s) = ∫₀^s dy/γ*(y)`
    pub(crate) transit_time: GridFunction,
}

impl Linearization {
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn state(&self) -> &SteadyState {
        &self.state
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.state.grid()
    }

    pub fn is_separable(&self) -> bool {
        self.c_terms.len() == 1
    }

    fn single(&self) -> Result<&CTerm> {
        match self.c_terms.as_slice() {
            [t] => Ok(t),
            _ => Err(Error::NotSeparable {
                terms: self.c_terms.len(),
            }),
        }
    }

    pub fn g1(&self) -> Result<&GridFunction> {
        Ok(&self.single()?.g1)
    }

    pub fn g2(&self) -> Result<&GridFunction> {
        Ok(&self.single()?.g2)
    }

    /// `γ_E(0,E*(0))·n*(0)·α₂(0)`
    pub fn g3(&self) -> Result<f64> {
        let t = self.single()?;
        Ok(self.gamma_e[0] * self.state.n0 * t.alpha2_at_zero)
    }

    /// `Λ(u)`
    pub fn boundary_functional(&self, u: &GridFunction) -> f64 {
        self.lambda_weight.dot(u)
    }

    /// `C u` on the grid.
    pub fn apply_c(&self, u: &GridFunction) -> GridFunction {
        let grid = self.grid();
        let mut out = vec![0.0; grid.len()];
        for t in &self.c_terms {
            let u1 = t.prey_weight.dot(u);
            let u2 = t.attacker_weight.dot(u);
            for (i, o) in out.iter_mut().enumerate() {
                *o -= u1 * t.g1[i] + u2 * t.g2[i];
            }
        }
        gf(grid, out)
    }

    /// Discrete `(A + B + C) u = −γ*·u_s − ρ*·u + C u`, with `u_s` from
    /// [`GridFunction::derivative`]. The boundary condition is not imposed.
    pub fn apply_generator(&self, u: &GridFunction) -> GridFunction {
        self.apply_ab(u).zip_with(&self.apply_c(u), |a, b| a + b)
    }

    /// Discrete `(A + B) u`.
    pub fn apply_ab(&self, u: &GridFunction) -> GridFunction {
        let du = u.derivative();
        let values = (0..u.grid().len())
            .map(|i| -self.gamma_star[i] * du[i] - self.rho_star[i] * u[i])
            .collect();
        gf(u.grid(), values)
    }

    /// `C`-kernel `K_C(y_j, s_i)` with `(C u)(s) = −∫ u(y) K_C(y, s) dy`.
    pub fn c_kernel(&self, j: usize, i: usize) -> f64 {
        self.c_terms
            .iter()
            .map(|t| t.prey_weight[j] * t.g1[i] + t.attacker_weight[j] * t.g2[i])
            .sum()
    }
}

/// Builds the linearized operator data about `state`.
pub fn build_linearization(model: &ModelSpec, state: &SteadyState) -> Result<Linearization> {
    if !(state.residual_fp.is_finite() && state.residual_r.is_finite()) {
        return Err(Error::Precondition("steady state residuals are not finite".into()));
    }
    let grid = state.grid().clone();
    let nodes = grid.nodes();
    let e = &state.e;
    let rates = NodeRates::new(model, &grid);

    let mut gamma_star = Vec::with_capacity(grid.len());
    for (i, &s) in nodes.iter().enumerate() {
        let g = model.gamma.value(s, e[i]);
        if !(g >= model.gamma0) {
            return Err(Error::GammaBound {
                s,
                value: g,
                gamma0: model.gamma0,
            });
        }
        gamma_star.push(g);
    }
    let gamma_star = gf(&grid, gamma_star);
    let gamma_star_s = gamma_star.derivative();
    let mu_star = gf(
        &grid,
        nodes.iter().enumerate().map(|(i, &s)| model.mu.value(s, e[i])).collect(),
    );
    let mortality_star = mu_star.zip_with(&state.m, |a, b| a + b);
    let rho_star = gf(
        &grid,
        (0..grid.len())
            .map(|i| mortality_star[i] + gamma_star_s[i])
            .collect(),
    );
    let gamma_e = gf(
        &grid,
        nodes.iter().enumerate().map(|(i, &s)| model.gamma.d_env(s, e[i])).collect(),
    );
    let mu_e = gf(
        &grid,
        nodes.iter().enumerate().map(|(i, &s)| model.mu.d_env(s, e[i])).collect(),
    );

    let n_star = &state.n;
    let boundary_scale = gamma_e[0] * state.n0;
    // c(s)·α(s, 0) = Σₖ c α₁ₖ(s)·α₂ₖ(0)
    let boundary_numerator = gf(
        &grid,
        (0..grid.len())
            .map(|i| {
                let c_alpha_s0: f64 = rates.terms.iter().map(|t| t.c_alpha1[i] * t.alpha2[0]).sum();
                rates.beta[i] - boundary_scale * c_alpha_s0
            })
            .collect(),
    );
    let lambda_weight = boundary_numerator.map(|v| v / gamma_star[0]);

    let gamma_e_n = gamma_e.zip_with(n_star, |a, b| a * b);
    let gamma_e_n_s = gamma_e_n.derivative();
    let drift = gf(
        &grid,
        (0..grid.len())
            .map(|i| gamma_e_n_s[i] + mu_e[i] * n_star[i])
            .collect(),
    );
    let c_terms = rates
        .terms
        .iter()
        .map(|t| CTerm {
            prey_weight: gf(&grid, t.c_alpha1.clone()),
            attacker_weight: gf(&grid, t.alpha2.clone()),
            g1: gf(
                &grid,
                (0..grid.len())
                    .map(|i| {
                        let slope = if gamma_e_n[i] == 0.0 {
                            0.0
                        } else {
                            t.alpha2_prime[i] * gamma_e_n[i]
                        };
                        t.alpha2[i] * drift[i] + slope
                    })
                    .collect(),
            ),
            g2: gf(&grid, t.alpha1.iter().zip(n_star.values()).map(|(a, n)| a * n).collect()),
            alpha2_at_zero: t.alpha2[0],
        })
        .collect();

    let mu0 = mortality_star.min();
    let survival_rate = mortality_star.zip_with(&gamma_star, |m, g| m / g).cumulative_integral();
    let ln_g0 = gamma_star[0].ln();
    let survival_exponent = gf(
        &grid,
        (0..grid.len())
            .map(|i| gamma_star[i].ln() - ln_g0 + survival_rate[i])
            .collect(),
    );
    let transit_time = gamma_star.map(|g| 1.0 / g).cumulative_integral();

    Ok(Linearization {
        model: model.clone(),
        state: state.clone(),
        gamma_star,
        gamma_star_s,
        mortality_star,
        rho_star,
        gamma_e,
        mu_e,
        boundary_numerator,
        lambda_weight,
        c_terms,
        mu0,
        survival_exponent,
        transit_time,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Positivity {
    pub pos1: bool,
    pub pos2: bool,
    pub aeg_hypotheses_met: bool,
}

#[derive(Clone, Debug)]
pub struct StabilityVerdict {
    /// `min_s` of the dissipativity slack; also the exported decay bound `κ`
    /// in `‖T(t)‖ ≤ e^{−κt}` (a growth bound when negative).
    pub margin: f64,
    pub stable_by_dissipativity: bool,
    pub margin_profile: GridFunction,
    pub positivity_pos1: bool,
    pub positivity_pos2: bool,
    pub aeg_hypotheses_met: bool,
    pub mu0: f64,
}

impl StabilityVerdict {
    pub fn kappa(&self) -> f64 {
        self.margin
    }
}

/// Pointwise dissipativity slack
/// `κ(s) = μ + M* − |β − γ_E(0)n*(0)c(s)α(s,0)| − ∫ |K_C(s, y)| dy`.
pub fn margin_profile(lin: &Linearization) -> GridFunction {
    let grid = lin.grid();
    let w = grid.weights();
    let n = grid.len();
    let values = par::map_range(n, |i| {
        let coupling: f64 = (0..n).map(|j| w[j] * lin.c_kernel(i, j).abs()).sum();
        lin.mortality_star[i] - lin.boundary_numerator[i].abs() - coupling
    });
    gf(grid, values)
}

pub fn dissipativity_margin(lin: &Linearization) -> StabilityVerdict {
    let profile = margin_profile(lin);
    let margin = profile.min();
    let pos = positivity_check(lin);
    StabilityVerdict {
        margin,
        stable_by_dissipativity: margin > 0.0,
        margin_profile: profile,
        positivity_pos1: pos.pos1,
        positivity_pos2: pos.pos2,
        aeg_hypotheses_met: pos.aeg_hypotheses_met,
        mu0: lin.mu0,
    }
}

/// Sign conditions making the linearized semigroup positive, plus the full
/// hypothesis list for asynchronous exponential growth.
pub fn positivity_check(lin: &Linearization) -> Positivity {
    let n = lin.grid().len();
    let pos1 = par::map_range(n, |j| (0..n).all(|i| lin.c_kernel(j, i) <= 0.0))
        .into_iter()
        .all(|ok| ok);
    let pos2 = lin.boundary_numerator.values().iter().all(|&v| v >= 0.0);
    // C has rank at most twice the number of kernel terms, hence is compact.
    let finite_rank = !lin.c_terms.is_empty();
    Positivity {
        pos1,
        pos2,
        aeg_hypotheses_met: pos1 && pos2 && lin.mu0 > 0.0 && finite_rank,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrivialCheck {
    /// `μ(s,0) > β(s)` at every node.
    pub stable: bool,
    pub r0: f64,
    /// `stable ⇒ R(0) < 1`
    pub implication_holds: bool,
}

/// Stability test for `n* ≡ 0`: the dissipativity condition collapses to
/// `μ(s,0) > β(s)`, which forces `R(0) < 1`.
pub fn trivial_stability_check(model: &ModelSpec, grid: &Arc<Grid>) -> Result<TrivialCheck> {
    let stable = grid
        .nodes()
        .iter()
        .all(|&s| model.mu.value(s, 0.0) > model.beta.value(s));
    let zero = GridFunction::zeros(grid);
    let r0 = net_reproduction(model, &zero, &zero)?;
    Ok(TrivialCheck {
        stable,
        r0,
        implication_holds: !stable || r0 < 1.0,
    })
}

pub(crate) fn boundary_total(lin: &Linearization, u: &[f64]) -> f64 {
    weighted_sum(lin.grid(), lin.lambda_weight.values(), u)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::ingredients::{AttackKernel, Feedback, Rate1D, Rate2D};
    use crate::steady::{solve_steady, trivial_steady, SteadyConfig};

    pub(crate) fn trivial_model(mu: f64, beta0: f64) -> ModelSpec {
        ModelSpec {
            beta: Rate1D::exp_decay(beta0, 1.0),
            mu: Rate2D::without_feedback(Rate1D::constant(mu)),
            gamma: Rate2D::without_feedback(Rate1D::constant(1.0)),
            alpha: AttackKernel::separable(Rate1D::constant(0.2), Rate1D::poly_exp(1.0, 1.0, 1.0)),
            c: Rate1D::constant(1.0),
            gamma0: 0.5,
            s_max: 30.0,
        }
    }

    #[test]
    fn trivial_state_fields() {
        let mut m = trivial_model(0.6, 0.5);
        m.gamma = Rate2D::new(Rate1D::saturating_ramp(1.0, 0.5, 0.3), Feedback::Linear, 0.4);
        let g = Grid::uniform(m.s_max, 300).unwrap();
        let lin = build_linearization(&m, &trivial_steady(&m, &g)).unwrap();
        assert!(lin.g1().unwrap().values().iter().all(|&v| v == 0.0));
        assert!(lin.g2().unwrap().values().iter().all(|&v| v == 0.0));
        assert_eq!(lin.g3().unwrap(), 0.0);
        for (i, &s) in g.nodes().iter().enumerate() {
            let rho = m.mu.value(s, 0.0) + lin.gamma_star_s[i];
            assert_eq!(lin.rho_star[i], rho);
            assert_eq!(lin.lambda_weight[i], m.beta.value(s) / m.gamma.value(0.0, 0.0));
        }
    }

    #[test]
    fn constant_rates_give_constant_rho() {
        let m = trivial_model(0.7, 0.5);
        let g = Grid::uniform(m.s_max, 100).unwrap();
        let lin = build_linearization(&m, &trivial_steady(&m, &g)).unwrap();
        assert!(lin.rho_star.values().iter().all(|&v| (v - 0.7).abs() < 1e-12));
        assert_eq!(lin.mu0, 0.7);
    }

    #[test]
    fn env_free_growth_has_plain_boundary_weight() {
        // positive state, γ_E ≡ 0, α₂(0) = 0
        let mut m = trivial_model(0.4, 2.0);
        m.alpha = AttackKernel::separable(Rate1D::constant(0.3), Rate1D::poly_exp(1.0, 1.0, 1.0));
        let g = Grid::uniform(m.s_max, 400).unwrap();
        let st = solve_steady(
            &m,
            &g,
            &SteadyConfig {
                n0_bracket: [0.0, 10.0],
                ..SteadyConfig::default()
            },
        )
        .unwrap();
        assert!(st.n0 > 0.0);
        let lin = build_linearization(&m, &st).unwrap();
        assert_eq!(lin.g3().unwrap(), 0.0);
        for (i, &s) in g.nodes().iter().enumerate() {
            assert_eq!(lin.lambda_weight[i], m.beta.value(s) / lin.gamma_star[0]);
        }
    }

    #[test]
    fn multi_term_kernel_rejects_separable_accessors() {
        let mut m = trivial_model(0.4, 0.5);
        let t = m.alpha.terms[0].clone();
        m.alpha.terms.push(t);
        let g = Grid::uniform(m.s_max, 50).unwrap();
        let lin = build_linearization(&m, &trivial_steady(&m, &g)).unwrap();
        assert!(matches!(lin.g1(), Err(Error::NotSeparable { terms: 2 })));
        assert!(lin.g3().is_err());
        // the margin and positivity checks still work for finite sums
        let v = dissipativity_margin(&lin);
        assert!(v.margin.is_finite());
    }

    #[test]
    fn trivial_margin_is_mortality_minus_fertility() {
        let m = trivial_model(0.6, 0.5);
        let g = Grid::uniform(m.s_max, 400).unwrap();
        let lin = build_linearization(&m, &trivial_steady(&m, &g)).unwrap();
        let v = dissipativity_margin(&lin);
        for (i, &s) in g.nodes().iter().enumerate() {
            assert_eq!(v.margin_profile[i], m.mu.value(s, 0.0) - m.beta.value(s));
        }
        assert!((v.margin - 0.1).abs() < 1e-15);
        assert!(v.stable_by_dissipativity);
        assert_eq!(v.kappa(), v.margin);
        assert!(v.positivity_pos1 && v.positivity_pos2);
    }

    #[test]
    fn positive_state_without_feedback_violates_pos1() {
        let mut m = trivial_model(0.4, 2.0);
        m.alpha = AttackKernel::separable(Rate1D::constant(0.3), Rate1D::constant(0.5));
        let g = Grid::uniform(m.s_max, 200).unwrap();
        let st = solve_steady(&m, &g, &SteadyConfig::default()).unwrap();
        let lin = build_linearization(&m, &st).unwrap();
        let p = positivity_check(&lin);
        assert!(!p.pos1);
        assert!(p.pos2);
        assert!(!p.aeg_hypotheses_met);
    }

    #[test]
    fn trivial_check_cases() {
        let g = Grid::uniform(30.0, 600).unwrap();
        let mut m = trivial_model(1.0, 0.5);
        m.beta = Rate1D::constant(0.5);
        let t = trivial_stability_check(&m, &g).unwrap();
        assert!(t.stable && t.r0 < 1.0 && t.implication_holds);

        let m = trivial_model(0.3, 0.5);
        let t = trivial_stability_check(&m, &g).unwrap();
        assert!(!t.stable);

        let mut m = trivial_model(0.3, 0.5);
        m.beta = Rate1D::constant(0.0);
        let t = trivial_stability_check(&m, &g).unwrap();
        assert!(t.stable);
        assert_eq!(t.r0, 0.0);
    }

    #[test]
    fn generator_annihilates_nothing_on_zero() {
        let m = trivial_model(0.6, 0.5);
        let g = Grid::uniform(m.s_max, 40).unwrap();
        let lin = build_linearization(&m, &trivial_steady(&m, &g)).unwrap();
        let z = GridFunction::zeros(&g);
        assert!(lin.apply_generator(&z).values().iter().all(|&v| v == 0.0));
        assert_eq!(boundary_total(&lin, z.values()), 0.0);
    }
}
