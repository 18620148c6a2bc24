//! Numerical toolkit for a size-structured cannibalism model with
//! infinite-dimensional environmental feedback.
//!
//! The crate is organized bottom-up:
//!
//! * [`ingredients`]: parametric vital rates, attack kernel, model config.
//! * [`grid`]: truncated size grid, trapezoid quadrature, differentiation.
//! * [`steady`]: stationary solutions and the net reproduction functional.
//! * [`linearization`]: linearized operator data, dissipativity margin,
//!   positivity hypotheses.
//! * [`spectral`]: characteristic determinant `K(λ)`, the boundary
//!   characteristic function `L(λ)`, real root scans, resolvent of `A+B`.
//! * [`dynamics`]: upwind simulation of the nonlinear and linearized PDEs.
//!
//! Data-parallel loops go through [`par`], which falls back to sequential
//! iteration when the `parallel` feature is disabled.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod grid;
pub mod ingredients;
pub mod linearization;
pub mod par;
pub mod report;
mod sampled;
pub mod spectral;
pub mod steady;

pub use error::{Error, Result};
pub use grid::{Grid, GridFunction, Spacing};
pub use ingredients::{AttackKernel, Feedback, ModelSpec, Rate1D, Rate2D, RateFamily};
pub use linearization::{Linearization, StabilityVerdict};
pub use steady::SteadyState;
