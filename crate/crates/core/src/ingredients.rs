//! Model ingredients: fertility `β(s)`, mortality `μ(s,E)`, growth `γ(s,E)`,
//! attack kernel `α(y,s)` and energetic value `c(s)`.
//!
//! Every ingredient is drawn from a closed set of parametric families whose
//! derivatives are available in closed form, so the linearized operator never
//! needs a second layer of numerical differentiation.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// Tail fraction above which [`validate_model`] flags the truncation.
pub const DEFAULT_TAIL_TOL: f64 = 1e-3;

const MAX_REPORTED_PER_INGREDIENT: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateFamily {
    /// `p0`
    Constant,
    /// `p0·exp(−p1·s)`, `p1 ≥ 0`
    ExpDecay,
    /// `p0·s^p1·exp(−p2·s)`, `p1 = 0` or `p1 ≥ 1`, `p2 > 0`
    PolyExp,
    /// `p0 + p1·(1 − exp(−p2·s))`, `p2 ≥ 0`
    SaturatingRamp,
}

impl RateFamily {
    fn n_params(self) -> usize {
        match self {
            RateFamily::Constant => 1,
            RateFamily::ExpDecay => 2,
            RateFamily::PolyExp | RateFamily::SaturatingRamp => 3,
        }
    }

    fn name(self) -> &'static str {
        match self {
            RateFamily::Constant => "constant",
            RateFamily::ExpDecay => "exp_decay",
            RateFamily::PolyExp => "poly_exp",
            RateFamily::SaturatingRamp => "saturating_ramp",
        }
    }
}

/// A bounded function of size alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rate1D {
    pub family: RateFamily,
    pub params: Vec<f64>,
}

impl Rate1D {
    pub fn new(family: RateFamily, params: Vec<f64>) -> Result<Self> {
        let rate = Rate1D { family, params };
        rate.check().map_err(Error::InvalidParameter)?;
        Ok(rate)
    }

    pub fn constant(value: f64) -> Self {
        Rate1D {
            family: RateFamily::Constant,
            params: vec![value],
        }
    }

    pub fn exp_decay(p0: f64, rate: f64) -> Self {
        Rate1D {
            family: RateFamily::ExpDecay,
            params: vec![p0, rate],
        }
    }

    pub fn poly_exp(p0: f64, power: f64, rate: f64) -> Self {
        Rate1D {
            family: RateFamily::PolyExp,
            params: vec![p0, power, rate],
        }
    }

    pub fn saturating_ramp(p0: f64, p1: f64, rate: f64) -> Self {
        Rate1D {
            family: RateFamily::SaturatingRamp,
            params: vec![p0, p1, rate],
        }
    }

    /// Checks parameter count, finiteness and family constraints.
    fn check(&self) -> std::result::Result<(), String> {
        let want = self.family.n_params();
        if self.params.len() != want {
            return Err(format!(
                "{} expects {} params, got {}",
                self.family.name(),
                want,
                self.params.len()
            ));
        }
        if let Some(p) = self.params.iter().find(|p| !p.is_finite()) {
            return Err(format!("non-finite parameter {p}"));
        }
        let p = &self.params;
        match self.family {
            RateFamily::Constant => {}
            RateFamily::ExpDecay => {
                if p[1] < 0.0 {
                    return Err("exp_decay requires p1 >= 0".into());
                }
            }
            RateFamily::PolyExp => {
                if !(p[1] == 0.0 || p[1] >= 1.0) {
                    return Err("poly_exp requires p1 = 0 or p1 >= 1 (bounded derivative at 0)".into());
                }
                if p[2] <= 0.0 {
                    return Err("poly_exp requires p2 > 0".into());
                }
            }
            RateFamily::SaturatingRamp => {
                if p[2] < 0.0 {
                    return Err("saturating_ramp requires p2 >= 0".into());
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, s: f64) -> f64 {
        let p = &self.params;
        match self.family {
            RateFamily::Constant => p[0],
            RateFamily::ExpDecay => p[0] * (-p[1] * s).exp(),
            RateFamily::PolyExp => p[0] * s.powf(p[1]) * (-p[2] * s).exp(),
            RateFamily::SaturatingRamp => p[0] + p[1] * (1.0 - (-p[2] * s).exp()),
        }
    }

    /// Derivative with respect to the (single) size argument.
    pub fn deriv(&self, s: f64) -> f64 {
        let p = &self.params;
        match self.family {
            RateFamily::Constant => 0.0,
            RateFamily::ExpDecay => -p[1] * p[0] * (-p[1] * s).exp(),
            RateFamily::PolyExp => {
                let e = (-p[2] * s).exp();
                let lead = if p[1] == 0.0 {
                    0.0
                } else {
                    p[1] * s.powf(p[1] - 1.0)
                };
                p[0] * e * (lead - p[2] * s.powf(p[1]))
            }
            RateFamily::SaturatingRamp => p[1] * p[2] * (-p[2] * s).exp(),
        }
    }

    /// Fraction of `∫₀^∞ |f|` lying beyond `s_max`, in closed form.
    ///
    /// `None` for families that are not integrable on the half-line
    /// (nonzero constants, ramps with a nonzero limit).
    pub fn tail_fraction(&self, s_max: f64) -> Option<f64> {
        let p = &self.params;
        if p[0] == 0.0 && self.family != RateFamily::SaturatingRamp {
            return Some(0.0);
        }
        match self.family {
            RateFamily::Constant => None,
            RateFamily::ExpDecay => (p[1] > 0.0).then(|| (-p[1] * s_max).exp()),
            RateFamily::PolyExp => Some(gamma_ur(p[1] + 1.0, p[2] * s_max)),
            RateFamily::SaturatingRamp => {
                let limit = p[0] + p[1];
                if p[1] == 0.0 && p[0] == 0.0 {
                    Some(0.0)
                } else if limit == 0.0 && p[2] > 0.0 {
                    Some((-p[2] * s_max).exp())
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    None,
    /// `f(E) = E`
    Linear,
    /// `f(E) = E/(1+E)`
    Saturating,
}

/// A rate depending on size and environment:
/// `value(s, E) = base(s) + feedback_coeff·f(E)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rate2D {
    pub base: Rate1D,
    pub feedback: Feedback,
    pub feedback_coeff: f64,
}

impl Rate2D {
    pub fn new(base: Rate1D, feedback: Feedback, feedback_coeff: f64) -> Self {
        Rate2D {
            base,
            feedback,
            feedback_coeff,
        }
    }

    pub fn without_feedback(base: Rate1D) -> Self {
        Rate2D::new(base, Feedback::None, 0.0)
    }

    fn f(&self, e: f64) -> f64 {
        match self.feedback {
            Feedback::None => 0.0,
            Feedback::Linear => e,
            Feedback::Saturating => e / (1.0 + e),
        }
    }

    fn f_prime(&self, e: f64) -> f64 {
        match self.feedback {
            Feedback::None => 0.0,
            Feedback::Linear => 1.0,
            Feedback::Saturating => 1.0 / ((1.0 + e) * (1.0 + e)),
        }
    }

    pub fn value(&self, s: f64, e: f64) -> f64 {
        self.base.value(s) + self.feedback_coeff * self.f(e)
    }

    /// Partial derivative in the environment argument.
    pub fn d_env(&self, _s: f64, e: f64) -> f64 {
        self.feedback_coeff * self.f_prime(e)
    }

    /// Partial derivative in size at fixed environment.
    pub fn d_size(&self, s: f64) -> f64 {
        self.base.deriv(s)
    }

    /// True when the rate does not depend on `E` at all.
    pub fn is_env_free(&self) -> bool {
        self.feedback == Feedback::None || self.feedback_coeff == 0.0
    }
}

/// One separable factor pair `α₁(y)·α₂(s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableTerm {
    pub alpha1: Rate1D,
    pub alpha2: Rate1D,
}

/// Attack kernel `α(y, s) = Σᵢ α₁ᵢ(y)·α₂ᵢ(s)`: the rate at which individuals
/// of size `s` attack individuals of size `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackKernel {
    pub terms: Vec<SeparableTerm>,
}

impl AttackKernel {
    pub fn separable(alpha1: Rate1D, alpha2: Rate1D) -> Self {
        AttackKernel {
            terms: vec![SeparableTerm { alpha1, alpha2 }],
        }
    }

    pub fn zero() -> Self {
        AttackKernel::separable(Rate1D::constant(0.0), Rate1D::constant(0.0))
    }

    pub fn value(&self, y: f64, s: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.alpha1.value(y) * t.alpha2.value(s))
            .sum()
    }

    /// `D₂α(y, s)`, the derivative in the attacker-size argument.
    pub fn d_second(&self, y: f64, s: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.alpha1.value(y) * t.alpha2.deriv(s))
            .sum()
    }

    pub fn is_separable(&self) -> bool {
        self.terms.len() == 1
    }

    /// The single term of a strictly separable kernel.
    pub fn single_term(&self) -> Result<&SeparableTerm> {
        match self.terms.as_slice() {
            [t] => Ok(t),
            _ => Err(Error::NotSeparable {
                terms: self.terms.len(),
            }),
        }
    }
}

/// The five model ingredients plus truncation data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub beta: Rate1D,
    pub mu: Rate2D,
    pub gamma: Rate2D,
    pub alpha: AttackKernel,
    pub c: Rate1D,
    /// Declared lower bound on `γ`.
    pub gamma0: f64,
    /// Truncation length of the size domain.
    pub s_max: f64,
}

/// Selects which ingredient [`evaluate`] reads.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ingredient {
    Beta,
    Mu,
    Gamma,
    C,
    /// The full kernel `α(y, s)` at prey size `y`.
    Alpha { y: f64 },
    /// `α₁` of the given term.
    Alpha1(usize),
    /// `α₂` of the given term.
    Alpha2(usize),
}

impl Ingredient {
    fn name(&self) -> String {
        match self {
            Ingredient::Beta => "beta".into(),
            Ingredient::Mu => "mu".into(),
            Ingredient::Gamma => "gamma".into(),
            Ingredient::C => "c".into(),
            Ingredient::Alpha { .. } => "alpha".into(),
            Ingredient::Alpha1(i) => format!("alpha.terms[{i}].alpha1"),
            Ingredient::Alpha2(i) => format!("alpha.terms[{i}].alpha2"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Derivative {
    Value,
    /// Partial in the environment argument (`μ_E`, `γ_E`).
    DE,
    /// Derivative in the attacker-size argument (`D₂α`, `α₂′`).
    DSecondArg,
}

impl Derivative {
    fn name(self) -> &'static str {
        match self {
            Derivative::Value => "value",
            Derivative::DE => "dE",
            Derivative::DSecondArg => "d2_second_arg",
        }
    }
}

/// Closed-form value or partial derivative of one ingredient.
pub fn evaluate(
    model: &ModelSpec,
    which: Ingredient,
    s: f64,
    e: Option<f64>,
    derivative: Derivative,
) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter(format!("size must be >= 0, got {s}")));
    }
    let unsupported = || Error::UnsupportedDerivative {
        ingredient: which.name(),
        derivative: derivative.name().into(),
    };
    let term = |i: usize| {
        model
            .alpha
            .terms
            .get(i)
            .ok_or_else(|| Error::UnknownSelector(which.name()))
    };
    match which {
        Ingredient::Mu | Ingredient::Gamma => {
            let rate = if which == Ingredient::Mu {
                &model.mu
            } else {
                &model.gamma
            };
            let e = e.ok_or_else(|| Error::MissingEnvironment(which.name()))?;
            match derivative {
                Derivative::Value => Ok(rate.value(s, e)),
                Derivative::DE => Ok(rate.d_env(s, e)),
                Derivative::DSecondArg => Err(unsupported()),
            }
        }
        Ingredient::Beta | Ingredient::C | Ingredient::Alpha1(_) => {
            let rate = match which {
                Ingredient::Beta => &model.beta,
                Ingredient::C => &model.c,
                Ingredient::Alpha1(i) => &term(i)?.alpha1,
                _ => unreachable!(),
            };
            match derivative {
                Derivative::Value => Ok(rate.value(s)),
                _ => Err(unsupported()),
            }
        }
        Ingredient::Alpha2(i) => {
            let rate = &term(i)?.alpha2;
            match derivative {
                Derivative::Value => Ok(rate.value(s)),
                Derivative::DSecondArg => Ok(rate.deriv(s)),
                Derivative::DE => Err(unsupported()),
            }
        }
        Ingredient::Alpha { y } => {
            if !(y >= 0.0) {
                return Err(Error::InvalidParameter(format!("prey size must be >= 0, got {y}")));
            }
            match derivative {
                Derivative::Value => Ok(model.alpha.value(y, s)),
                Derivative::DSecondArg => Ok(model.alpha.d_second(y, s)),
                Derivative::DE => Err(unsupported()),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub ingredient: String,
    /// `[s]`, `[s, E]` or, for the kernel, `[y, s]`.
    pub location: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    /// Total number of violating samples (the list above is capped per ingredient).
    pub violation_count: usize,
    pub min_gamma: f64,
    pub tail_mass: f64,
    pub tail_tol: f64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[derive(Default)]
struct ViolationLog {
    list: Vec<Violation>,
    count: usize,
    per_name: std::collections::HashMap<&'static str, usize>,
}

impl ViolationLog {
    fn push(&mut self, name: &'static str, location: Vec<f64>, value: f64) {
        self.count += 1;
        let seen = self.per_name.entry(name).or_default();
        if *seen < MAX_REPORTED_PER_INGREDIENT {
            self.list.push(Violation {
                ingredient: name.into(),
                location,
                value,
            });
        }
        *seen += 1;
    }
}

/// Samples the sign and bound assumptions over `[0, s_max] × [E_lo, E_hi]`.
pub fn validate_model(model: &ModelSpec, e_range: [f64; 2], n_samples: usize) -> Result<ValidationReport> {
    validate_model_with_tol(model, e_range, n_samples, DEFAULT_TAIL_TOL)
}

pub fn validate_model_with_tol(
    model: &ModelSpec,
    e_range: [f64; 2],
    n_samples: usize,
    tail_tol: f64,
) -> Result<ValidationReport> {
    let [e_lo, e_hi] = e_range;
    if !(e_lo <= e_hi) {
        return Err(Error::InvalidParameter(format!("E range [{e_lo}, {e_hi}] is empty")));
    }
    if n_samples < 2 {
        return Err(Error::InvalidParameter("n_samples must be >= 2".into()));
    }
    let sizes = linspace(0.0, model.s_max, n_samples);
    let envs = linspace(e_lo, e_hi, n_samples);
    let mut log = ViolationLog::default();
    let mut min_gamma = f64::INFINITY;

    for &s in &sizes {
        let b = model.beta.value(s);
        if !(b >= 0.0) {
            log.push("beta", vec![s], b);
        }
        let c = model.c.value(s);
        if !(c >= 0.0) {
            log.push("c", vec![s], c);
        }
        for &e in &envs {
            let g = model.gamma.value(s, e);
            min_gamma = min_gamma.min(g);
            if !(g >= model.gamma0) {
                log.push("gamma", vec![s, e], g);
            }
            let m = model.mu.value(s, e);
            if !(m >= 0.0) {
                log.push("mu", vec![s, e], m);
            }
        }
        for &y in &sizes {
            let a = model.alpha.value(y, s);
            if !(a >= 0.0) {
                log.push("alpha", vec![y, s], a);
            }
        }
    }

    let tail_mass = std::iter::once(&model.beta)
        .chain(model.alpha.terms.iter().map(|t| &t.alpha1))
        .filter_map(|r| r.tail_fraction(model.s_max))
        .fold(0.0_f64, f64::max);

    Ok(ValidationReport {
        ok: log.count == 0 && tail_mass < tail_tol,
        violations: log.list,
        violation_count: log.count,
        min_gamma,
        tail_mass,
        tail_tol,
    })
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ModelSpec {
    /// Checks every family's parameters plus `gamma0` and `s_max`.
    pub fn check(&self) -> Result<()> {
        let mut rates: Vec<(String, &Rate1D)> = vec![
            ("beta".into(), &self.beta),
            ("mu.base".into(), &self.mu.base),
            ("gamma.base".into(), &self.gamma.base),
            ("c".into(), &self.c),
        ];
        for (i, t) in self.alpha.terms.iter().enumerate() {
            rates.push((format!("alpha.terms.{i}.alpha1"), &t.alpha1));
            rates.push((format!("alpha.terms.{i}.alpha2"), &t.alpha2));
        }
        for (path, rate) in rates {
            rate.check().map_err(|m| config_error(format!("{path}.params"), m))?;
        }
        for (path, coeff) in [
            ("mu.feedback_coeff", self.mu.feedback_coeff),
            ("gamma.feedback_coeff", self.gamma.feedback_coeff),
        ] {
            if !coeff.is_finite() {
                return Err(config_error(path, "non-finite parameter"));
            }
        }
        if self.alpha.terms.is_empty() {
            return Err(config_error("alpha.terms", "at least one term is required"));
        }
        if !(self.gamma0.is_finite() && self.gamma0 > 0.0) {
            return Err(config_error("gamma0", format!("must be finite and > 0, got {}", self.gamma0)));
        }
        if !(self.s_max.is_finite() && self.s_max > 0.0) {
            return Err(config_error("s_max", format!("must be finite and > 0, got {}", self.s_max)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

/// Parses a JSON model document. Unknown keys are rejected and errors carry
/// the dotted path of the offending key.
pub fn parse_model_config(text: &str) -> Result<ModelSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let model: ModelSpec = serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let message = err.inner().to_string();
        // serde reports a missing key at its parent; name the key itself.
        let path = match message
            .strip_prefix("missing field `")
            .and_then(|rest| rest.split('`').next())
        {
            Some(field) if path == "." => field.to_string(),
            Some(field) => format!("{path}.{field}"),
            None => path,
        };
        config_error(path, message)
    })?;
    model.check()?;
    Ok(model)
}
