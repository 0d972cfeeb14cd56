//! Population estimands and effect contrasts.
//!
//! For each arm three means are computed exactly:
//!
//! * `mu_unadj[a] = E(Y | A = a)`: no adjustment at all.
//! * `mu_adj[a] = sum_c E(Y | A = a, C = c) f(c)`: standardization over the
//!   proxy, i.e. what adjustment for the mismeasured confounder delivers.
//! * `mu_true[a] = sum_u m_a(u) pi(u)`: the counterfactual mean `E[Y(a)]`,
//!   reachable only with the latent confounder itself.
//!
//! Proxy levels with `f(c) = 0` contribute zero weight to adjusted sums and
//! are skipped, matching their undefined conditional means.
//!
//! The treated-group analogues replace the outer weights with `f(. | A = 1)`
//! and target `E[Y(0) | A = 1]`; see [`compute_att`].

use serde::{Deserialize, Serialize};

use crate::model::{marginal_c, outcome_given_ac, Arm, ModelSpec, Pmf};
use crate::Error;

/// Contrast scale for two-arm comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Difference,
    Ratio,
    OddsRatio,
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scale::Difference => "difference",
            Scale::Ratio => "ratio",
            Scale::OddsRatio => "odds-ratio",
        })
    }
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "difference" => Ok(Scale::Difference),
            "ratio" => Ok(Scale::Ratio),
            "odds-ratio" => Ok(Scale::OddsRatio),
            other => Err(Error::InvalidConfig(format!(
                "unknown scale {other:?}; expected difference, ratio, or odds-ratio"
            ))),
        }
    }
}

/// The six arm means plus the treated fraction. Arrays index by arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimandReport {
    pub mu_unadj: [f64; 2],
    pub mu_adj: [f64; 2],
    pub mu_true: [f64; 2],
    pub p_a1: f64,
}

/// One contrast per adjustment level, on a fixed scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectTriple {
    pub scale: Scale,
    pub effect_unadj: f64,
    pub effect_adj: f64,
    pub effect_true: f64,
}

/// Treated-group control means: unadjusted, proxy-adjusted, oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttReport {
    pub y0_unadj: f64,
    pub y0_adj: f64,
    pub y0_true: f64,
}

/// Confounder distribution within one arm, `f(u | A = a)`.
pub fn u_given_a(spec: &ModelSpec, arm: Arm) -> Result<Pmf, Error> {
    spec.require_valid()?;
    let weights: Vec<f64> = (0..spec.k_u())
        .map(|u| spec.pi_u.get(u) * arm.weight(spec.propensity[u]))
        .collect();
    let total: f64 = weights.iter().sum();
    // positivity bounds the arm probability below by epsilon
    Ok(Pmf::new_unchecked(weights.iter().map(|w| w / total).collect()))
}

/// Proxy distribution within one arm, `f(c | A = a)`.
pub fn c_given_a(spec: &ModelSpec, arm: Arm) -> Result<Pmf, Error> {
    spec.require_valid()?;
    let k = &spec.c_given_u;
    let weights: Vec<f64> = (0..spec.k_c())
        .map(|c| {
            (0..spec.k_u())
                .map(|u| spec.pi_u.get(u) * k.get(c, u) * arm.weight(spec.propensity[u]))
                .sum()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(Pmf::new_unchecked(weights.iter().map(|w| w / total).collect()))
}

/// Computes all six means and the treated fraction.
pub fn compute_estimands(spec: &ModelSpec) -> Result<EstimandReport, Error> {
    spec.require_valid()?;
    let fc = marginal_c(spec)?;
    let p_a1: f64 = (0..spec.k_u())
        .map(|u| spec.pi_u.get(u) * spec.propensity[u])
        .sum();

    let mut mu_unadj = [0.0; 2];
    let mut mu_adj = [0.0; 2];
    let mut mu_true = [0.0; 2];
    for arm in Arm::BOTH {
        let m = spec.outcome(arm);
        let f_u_a = u_given_a(spec, arm)?;
        mu_unadj[arm.index()] = dot(m, f_u_a.probs());
        let e_y_ac = outcome_given_ac(spec, arm)?;
        mu_adj[arm.index()] = e_y_ac
            .iter()
            .enumerate()
            .filter_map(|(c, v)| v.map(|y| y * fc.get(c)))
            .sum();
        mu_true[arm.index()] = dot(m, spec.pi_u.probs());
    }
    Ok(EstimandReport {
        mu_unadj,
        mu_adj,
        mu_true,
        p_a1,
    })
}

/// Contrasts the report's means on the requested scale.
///
/// Fails with [`Error::ScaleDomain`] naming the offending mean if any of the
/// six means leaves the scale's domain: strictly positive for `ratio`,
/// strictly inside `(0, 1)` for `odds-ratio`.
pub fn effects(report: &EstimandReport, scale: Scale) -> Result<EffectTriple, Error> {
    let pairs = [
        ("mu_unadj", report.mu_unadj),
        ("mu_adj", report.mu_adj),
        ("mu_true", report.mu_true),
    ];
    for (name, [m0, m1]) in pairs {
        for (a, value) in [(0usize, m0), (1usize, m1)] {
            let ok = match scale {
                Scale::Difference => value.is_finite(),
                Scale::Ratio => value > 0.0,
                Scale::OddsRatio => value > 0.0 && value < 1.0,
            };
            if !ok {
                return Err(Error::ScaleDomain {
                    scale,
                    quantity: format!("{name}[{a}]"),
                    value,
                });
            }
        }
    }
    let contrast = |pair: [f64; 2]| match scale {
        Scale::Difference => pair[1] - pair[0],
        Scale::Ratio => pair[1] / pair[0],
        Scale::OddsRatio => (pair[1] / (1.0 - pair[1])) / (pair[0] / (1.0 - pair[0])),
    };
    Ok(EffectTriple {
        scale,
        effect_unadj: contrast(report.mu_unadj),
        effect_adj: contrast(report.mu_adj),
        effect_true: contrast(report.mu_true),
    })
}

/// Treated-group counterfactual control means.
///
/// `y0_unadj = E(Y | A = 0)`, `y0_adj` standardizes the observable control
/// regression over `f(c | A = 1)`, and `y0_true = E[Y(0) | A = 1]`. Proxy
/// levels with `f(c) = 0` also have `f(c | A = 1) = 0` and drop out.
pub fn compute_att(spec: &ModelSpec) -> Result<AttReport, Error> {
    spec.require_valid()?;
    let y0_unadj = dot(&spec.m0, u_given_a(spec, Arm::Control)?.probs());
    let fc_a1 = c_given_a(spec, Arm::Treated)?;
    let e_y0_c = outcome_given_ac(spec, Arm::Control)?;
    let y0_adj = e_y0_c
        .iter()
        .enumerate()
        .filter_map(|(c, v)| v.map(|y| y * fc_a1.get(c)))
        .sum();
    let y0_true = dot(&spec.m0, u_given_a(spec, Arm::Treated)?.probs());
    Ok(AttReport {
        y0_unadj,
        y0_adj,
        y0_true,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
