//! Attenuation verdicts: does proxy adjustment land between no adjustment
//! and the truth?
//!
//! For monotone models (outcome regressions sharing a direction in `u`,
//! monotone propensity, regression-dependent measurement) the three means
//! per arm form a chain: adjusting for the proxy removes part of the
//! confounding bias and never overshoots. [`verify_attenuation`] checks that
//! chain numerically, orienting the inequalities from the detected signs:
//! outcome and propensity trends pointing the same way give the stated
//! chain, opposite ways flip every inequality, and a non-monotone ingredient
//! makes the chain inapplicable.
//!
//! The scale-level *sandwich* is the direction-agnostic operationalization:
//! the adjusted effect must lie in the closed interval spanned by the
//! unadjusted and true effects. The chain implies the sandwich on every
//! scale whose domain constraints hold, but the sandwich is also evaluated
//! on its own so that non-monotone models still get a verdict.

use serde::{Deserialize, Serialize};

use crate::dependence::check_prd;
use crate::estimands::{
    compute_att, compute_estimands, effects, EffectTriple, EstimandReport, Scale,
};
use crate::families::{sample_spec, GeneratorConfig};
use crate::model::{
    classify_monotone, classify_monotone_partial, marginal_c, outcome_given_ac,
    posterior_u_given_ac, posterior_u_given_c, propensity_given_c, Arm, ModelSpec, MonotoneClass,
    Pmf,
};
use crate::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Orientation of the attenuation chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainDirection {
    /// Treated means decrease toward the truth, control means increase.
    AsStated,
    /// Outcome and propensity trends oppose; every inequality flips.
    Flipped,
    /// Some ingredient is non-monotone; only the sandwich is evaluated.
    Inapplicable,
}

/// One checked inequality: `holds` iff `slack >= -tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub slack: f64,
    pub holds: bool,
}

impl Inequality {
    fn at(slack: f64, tol: f64) -> Self {
        Self {
            slack,
            holds: slack >= -tol,
        }
    }
}

/// Full verdict for one model on one scale.
///
/// `unadj_vs_adj` and `adj_vs_true` are the two halves of the chain per arm
/// (`None` when the chain is inapplicable); `sandwich` is the pair of
/// interval bounds on the chosen scale: adjusted effect above the lower, and
/// below the upper, of the unadjusted and true effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationVerdict {
    pub scale: Scale,
    pub chain_direction: ChainDirection,
    pub unadj_vs_adj: [Option<Inequality>; 2],
    pub adj_vs_true: [Option<Inequality>; 2],
    pub chain_holds: bool,
    pub sandwich: [Inequality; 2],
    pub sandwich_holds: bool,
    pub effects: EffectTriple,
}

fn combine_signs(a: Option<i8>, b: Option<i8>) -> Option<i8> {
    match (a?, b?) {
        (0, s) | (s, 0) => Some(s),
        (x, y) if x == y => Some(x),
        _ => None,
    }
}

/// Chain for the triple (unadj, adj, true) in one arm, oriented by
/// `toward_truth`: `+1` when the means should decrease toward the truth
/// (treated arm, stated direction), `-1` when they should increase.
fn arm_chain(unadj: f64, adj: f64, truth: f64, toward_truth: f64, tol: f64) -> (Inequality, Inequality) {
    (
        Inequality::at(toward_truth * (unadj - adj), tol),
        Inequality::at(toward_truth * (adj - truth), tol),
    )
}

fn build_verdict(
    report: &EstimandReport,
    m_sign: Option<i8>,
    e_sign: Option<i8>,
    scale: Scale,
    tol: f64,
) -> Result<AttenuationVerdict, Error> {
    let chain_direction = match (m_sign, e_sign) {
        (Some(m), Some(e)) => {
            if i32::from(m) * i32::from(e) >= 0 {
                ChainDirection::AsStated
            } else {
                ChainDirection::Flipped
            }
        }
        _ => ChainDirection::Inapplicable,
    };

    let mut unadj_vs_adj = [None, None];
    let mut adj_vs_true = [None, None];
    if chain_direction != ChainDirection::Inapplicable {
        let orient = if chain_direction == ChainDirection::AsStated {
            1.0
        } else {
            -1.0
        };
        for arm in Arm::BOTH {
            let a = arm.index();
            // stated chain: treated means fall toward the truth, control rise
            let toward_truth = if arm == Arm::Treated { orient } else { -orient };
            let (first, second) = arm_chain(
                report.mu_unadj[a],
                report.mu_adj[a],
                report.mu_true[a],
                toward_truth,
                tol,
            );
            unadj_vs_adj[a] = Some(first);
            adj_vs_true[a] = Some(second);
        }
    }
    let chain_holds = chain_direction != ChainDirection::Inapplicable
        && unadj_vs_adj
            .iter()
            .chain(adj_vs_true.iter())
            .all(|i| i.map(|i| i.holds).unwrap_or(false));

    let eff = effects(report, scale)?;
    let lo = eff.effect_unadj.min(eff.effect_true);
    let hi = eff.effect_unadj.max(eff.effect_true);
    let sandwich = [
        Inequality::at(eff.effect_adj - lo, tol),
        Inequality::at(hi - eff.effect_adj, tol),
    ];
    let sandwich_holds = sandwich.iter().all(|i| i.holds);

    Ok(AttenuationVerdict {
        scale,
        chain_direction,
        unadj_vs_adj,
        adj_vs_true,
        chain_holds,
        sandwich,
        sandwich_holds,
        effects: eff,
    })
}

/// Verifies the attenuation chain and the effect sandwich for one model.
pub fn verify_attenuation(
    spec: &ModelSpec,
    scale: Scale,
    tol: f64,
) -> Result<AttenuationVerdict, Error> {
    let report = compute_estimands(spec)?;
    let m_sign = combine_signs(
        classify_monotone(&spec.m0, tol).sign(),
        classify_monotone(&spec.m1, tol).sign(),
    );
    let e_sign = classify_monotone(&spec.propensity, tol).sign();
    build_verdict(&report, m_sign, e_sign, scale, tol)
}

/// Treated-group analogue: checks `y0_unadj <= y0_adj <= y0_true` (or the
/// flip per detected signs) and the sandwich of the treated-group effect.
///
/// The verdict reuses the two-arm layout with the treated side degenerate:
/// all three treated entries equal `E(Y | A = 1)`, so its inequalities carry
/// zero slack by construction.
pub fn verify_att_attenuation(spec: &ModelSpec, tol: f64) -> Result<AttenuationVerdict, Error> {
    let att = compute_att(spec)?;
    let ate = compute_estimands(spec)?;
    let treated_mean = ate.mu_unadj[1];
    let report = EstimandReport {
        mu_unadj: [att.y0_unadj, treated_mean],
        mu_adj: [att.y0_adj, treated_mean],
        mu_true: [att.y0_true, treated_mean],
        p_a1: ate.p_a1,
    };
    // only the control regression enters the treated-group chain
    let m_sign = classify_monotone(&spec.m0, tol).sign();
    let e_sign = classify_monotone(&spec.propensity, tol).sign();
    build_verdict(&report, m_sign, e_sign, Scale::Difference, tol)
}

// ── observable implications ──────────────────────────────────────────────────

/// The observable ingredients of the testable implications: the proxy
/// marginal, the propensity by proxy level, and the outcome regressions by
/// proxy level. `None` marks unreachable proxy levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub f_c: Pmf,
    pub propensity_given_c: Vec<Option<f64>>,
    pub outcome_given_c: [Vec<Option<f64>>; 2],
}

impl Observables {
    /// Derives the observables a study of `(C, A, Y)` could estimate.
    pub fn from_spec(spec: &ModelSpec) -> Result<Self, Error> {
        Ok(Self {
            f_c: marginal_c(spec)?,
            propensity_given_c: propensity_given_c(spec)?,
            outcome_given_c: [
                outcome_given_ac(spec, Arm::Control)?,
                outcome_given_ac(spec, Arm::Treated)?,
            ],
        })
    }

    fn check_shape(&self) -> Result<(), Error> {
        let k = self.f_c.len();
        for (len, context) in [
            (self.propensity_given_c.len(), "propensity_given_c"),
            (self.outcome_given_c[0].len(), "outcome_given_c[0]"),
            (self.outcome_given_c[1].len(), "outcome_given_c[1]"),
        ] {
            if len != k {
                return Err(Error::DimensionMismatch {
                    context,
                    got: len,
                    expected: k,
                });
            }
        }
        for c in 0..k {
            let reachable = self.f_c.get(c) > 0.0;
            let defined = self.propensity_given_c[c].is_some()
                && self.outcome_given_c[0][c].is_some()
                && self.outcome_given_c[1][c].is_some();
            if reachable && !defined {
                return Err(Error::InvalidConfig(format!(
                    "observables undefined at reachable proxy level {}",
                    c + 1
                )));
            }
        }
        Ok(())
    }
}

/// Monotone classes of the observables plus the two mean orderings, and
/// whether everything fits a single sign convention.
///
/// `ordering_treated` is the slack of `mu_unadj[1] - mu_adj[1] >= 0` and
/// `ordering_control` of `mu_adj[0] - mu_unadj[0] >= 0`, the orientations
/// implied by the stated (non-decreasing) convention; under the opposite
/// convention both orderings flip, which `consistent` accounts for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicationsReport {
    pub propensity_class: MonotoneClass,
    pub outcome_class: [MonotoneClass; 2],
    pub ordering_treated: Inequality,
    pub ordering_control: Inequality,
    pub consistent: bool,
}

/// Evaluates the model's observable implications from observables alone.
///
/// Everything here is estimable without ever seeing `U`, which is what makes
/// a failed report a model refutation rather than a diagnostic.
pub fn testable_implications(obs: &Observables, tol: f64) -> Result<ImplicationsReport, Error> {
    obs.check_shape()?;
    let k = obs.f_c.len();
    let p_a1: f64 = (0..k)
        .map(|c| obs.propensity_given_c[c].unwrap_or(0.0) * obs.f_c.get(c))
        .sum();
    if p_a1 <= 0.0 || p_a1 >= 1.0 {
        return Err(Error::InvalidConfig(format!(
            "degenerate treatment share P(A=1) = {p_a1}"
        )));
    }

    let mut mu_unadj = [0.0; 2];
    let mut mu_adj = [0.0; 2];
    for arm in Arm::BOTH {
        let a = arm.index();
        let p_arm = if arm == Arm::Treated { p_a1 } else { 1.0 - p_a1 };
        for c in 0..k {
            let (Some(y), Some(p)) = (obs.outcome_given_c[a][c], obs.propensity_given_c[c]) else {
                continue; // unreachable level, zero weight
            };
            let f = obs.f_c.get(c);
            mu_adj[a] += y * f;
            mu_unadj[a] += y * arm.weight(p) * f / p_arm;
        }
    }

    let propensity_class = classify_monotone_partial(&obs.propensity_given_c, tol);
    let outcome_class = [
        classify_monotone_partial(&obs.outcome_given_c[0], tol),
        classify_monotone_partial(&obs.outcome_given_c[1], tol),
    ];
    let ordering_treated = Inequality::at(mu_unadj[1] - mu_adj[1], tol);
    let ordering_control = Inequality::at(mu_adj[0] - mu_unadj[0], tol);

    let m_sign = combine_signs(
        outcome_class[0].direction.sign(),
        outcome_class[1].direction.sign(),
    );
    let e_sign = propensity_class.direction.sign();
    let stated = ordering_treated.holds && ordering_control.holds;
    let flipped = -ordering_treated.slack >= -tol && -ordering_control.slack >= -tol;
    let consistent = match (m_sign, e_sign) {
        (Some(m), Some(e)) => {
            let product = i32::from(m) * i32::from(e);
            if product > 0 {
                stated
            } else if product < 0 {
                flipped
            } else {
                stated || flipped
            }
        }
        _ => false,
    };

    Ok(ImplicationsReport {
        propensity_class,
        outcome_class,
        ordering_treated,
        ordering_control,
        consistent,
    })
}

// ── counterexample hunting ───────────────────────────────────────────────────

/// The four assumptions a sandwich violation can be pinned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssumptionId {
    /// Outcome regressions do not share a monotone direction in `u`.
    OutcomeMonotone,
    /// Propensity is not monotone in `u`.
    PropensityMonotone,
    /// Confounder not regression dependent on the proxy (either sign).
    PrdMarginal,
    /// Conditional regression dependence within arms fails (either sign).
    PrdGivenArm,
}

/// One sandwich violation with its diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleHit {
    pub trial: u64,
    pub spec: ModelSpec,
    pub verdict: AttenuationVerdict,
    pub failed_assumptions: Vec<AssumptionId>,
}

/// Names every assumption that fails for this model.
///
/// Dependence assumptions accept either the positive or the negative
/// orientation, but coherently: one sign must serve both the marginal and
/// the conditional checks, because relabeling the proxy order flips them
/// together. The orientation satisfying more checks is the one reported
/// against. An empty result means the model is inside the theorem's
/// hypotheses, which forces the sandwich to hold.
pub fn diagnose_assumptions(spec: &ModelSpec, tol: f64) -> Result<Vec<AssumptionId>, Error> {
    let m_sign = combine_signs(
        classify_monotone(&spec.m0, tol).sign(),
        classify_monotone(&spec.m1, tol).sign(),
    );
    let e_sign = classify_monotone(&spec.propensity, tol).sign();

    let posterior = posterior_u_given_c(spec)?;
    let by_arm = [
        posterior_u_given_ac(spec, Arm::Control)?,
        posterior_u_given_ac(spec, Arm::Treated)?,
    ];
    let positive = (
        check_prd(&posterior, tol).holds(),
        by_arm.iter().all(|p| check_prd(p, tol).holds()),
    );
    let negative = (
        check_prd(&posterior.row_reversed(), tol).holds(),
        by_arm
            .iter()
            .all(|p| check_prd(&p.row_reversed(), tol).holds()),
    );
    let count = |(i, ii): (bool, bool)| usize::from(!i) + usize::from(!ii);
    let (marginal_ok, arms_ok) = if count(positive) <= count(negative) {
        positive
    } else {
        negative
    };

    let mut failed = Vec::new();
    if m_sign.is_none() {
        failed.push(AssumptionId::OutcomeMonotone);
    }
    if e_sign.is_none() {
        failed.push(AssumptionId::PropensityMonotone);
    }
    if !marginal_ok {
        failed.push(AssumptionId::PrdMarginal);
    }
    if !arms_ok {
        failed.push(AssumptionId::PrdGivenArm);
    }
    Ok(failed)
}

/// Samples `trials` models and returns every sandwich violation, diagnosed.
///
/// Trials are independent and deterministic in `(seed, trial_index)`, so the
/// result does not depend on execution order or thread count. Generators
/// that enforce the assumptions by construction should therefore return an
/// empty list; unconstrained generators are expected to find violations.
pub fn hunt_counterexamples(
    config: &GeneratorConfig,
    trials: u64,
    seed: u64,
    scale: Scale,
    tol: f64,
) -> Result<Vec<CounterexampleHit>, Error> {
    let run = |trial: u64| -> Result<Option<CounterexampleHit>, Error> {
        let sample = sample_spec(config, seed, trial)?;
        let verdict = verify_attenuation(&sample.spec, scale, tol)?;
        if verdict.sandwich_holds {
            return Ok(None);
        }
        let failed_assumptions = diagnose_assumptions(&sample.spec, tol)?;
        Ok(Some(CounterexampleHit {
            trial,
            spec: sample.spec,
            verdict,
            failed_assumptions,
        }))
    };

    #[cfg(feature = "parallel")]
    let outcomes: Result<Vec<_>, Error> = (0..trials).into_par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let outcomes: Result<Vec<_>, Error> = (0..trials).map(run).collect();

    Ok(outcomes?.into_iter().flatten().collect())
}
