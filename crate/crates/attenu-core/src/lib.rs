//! Exact verification toolkit for confounding-bias attenuation when a
//! discrete confounder is observed only through a noisy, nondifferential
//! proxy.
//!
//! The causal setup is a point-treatment model with a latent ordinal
//! confounder `U`, a proxy `C` whose measurement error does not depend on
//! treatment or outcome, a binary treatment `A`, and an outcome `Y`. On a
//! fully specified discrete model ([`ModelSpec`]) every population quantity
//! is a finite sum, so claims about adjustment bias can be verified exactly
//! rather than by simulation:
//!
//! * [`model`] holds the model types and the Bayes machinery for derived
//!   conditionals.
//! * [`dependence`] decides positive regression dependence, the
//!   monotone-likelihood-ratio property, and diagonal taper for measurement
//!   kernels, with numeric witnesses on failure.
//! * [`estimands`] computes unadjusted, proxy-adjusted, and oracle-adjusted
//!   means per arm, plus their contrasts on difference, ratio, and
//!   odds-ratio scales.
//! * [`attenuation`] renders the verdict: whether proxy adjustment moved
//!   the effect estimate strictly between the unadjusted value and the
//!   truth, and which assumption failed when it did not.
//! * [`families`] builds measurement kernels from parametric families and
//!   samples random specs for sweeps and counterexample hunts.
//! * [`fixtures`] bundles the worked 3x3 reference kernels used by the
//!   reproduction command and the test suite.

pub mod attenuation;
pub mod dependence;
pub mod estimands;
pub mod families;
pub mod fixtures;
pub mod model;

mod error;

pub use error::Error;
pub use model::{ModelSpec, ValidationReport};

/// Shared default tolerance for ordering and inequality comparisons.
///
/// All checkers accept an explicit tolerance so callers can tighten or relax
/// it; this is the value used when there is no reason to deviate.
pub const DEFAULT_TOL: f64 = 1e-12;
