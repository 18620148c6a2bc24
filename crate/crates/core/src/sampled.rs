use std::sync::Arc;

use crate::grid::{Grid, GridFunction};
use crate::ingredients::ModelSpec;

/// Size-only ingredients sampled once at every grid node.
#[derive(Clone, Debug)]
pub(crate) struct NodeRates {
    pub beta: Vec<f64>,
    pub terms: Vec<TermSamples>,
}

#[derive(Clone, Debug)]
pub(crate) struct TermSamples {
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub alpha2_prime: Vec<f64>,
    /// `c·α₁`, the prey-side weight of the energy feedback.
    pub c_alpha1: Vec<f64>,
}

impl NodeRates {
    pub fn new(model: &ModelSpec, grid: &Grid) -> Self {
        let sample = |f: &dyn Fn(f64) -> f64| grid.nodes().iter().map(|&s| f(s)).collect::<Vec<_>>();
        let beta = sample(&|s| model.beta.value(s));
        let c = sample(&|s| model.c.value(s));
        let terms = model
            .alpha
            .terms
            .iter()
            .map(|t| {
                let alpha1 = sample(&|s| t.alpha1.value(s));
                let c_alpha1 = alpha1.iter().zip(&c).map(|(a, c)| a * c).collect();
                TermSamples {
                    alpha2: sample(&|s| t.alpha2.value(s)),
                    alpha2_prime: sample(&|s| t.alpha2.deriv(s)),
                    alpha1,
                    c_alpha1,
                }
            })
            .collect();
        NodeRates { beta, terms }
    }
}

pub(crate) fn weighted_sum(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    grid.weights()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * x * y)
        .sum()
}

pub(crate) fn gf(grid: &Arc<Grid>, values: Vec<f64>) -> GridFunction {
    GridFunction::from_vec(grid.clone(), values)
}
