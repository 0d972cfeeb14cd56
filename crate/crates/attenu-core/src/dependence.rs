//! Stochastic dependence orderings for measurement kernels.
//!
//! Three nested notions are decided exactly on finite kernels, strongest
//! first:
//!
//! * **MLR / TP2**: every 2x2 minor taken with rows `c < c'` and columns
//!   `u < u'` satisfies `f(c'|u') f(c|u) >= f(c|u') f(c'|u)`. Stated in
//!   product form so kernels with structural zeros are handled exactly,
//!   with no division.
//! * **PRD** (positive regression dependence, Lehmann's sense): the upper
//!   tail `P(child >= x | parent = z)` is non-decreasing in `z` for every
//!   threshold `x`.
//! * **Taper**: on square kernels, probability decays weakly moving away
//!   from the diagonal along every row and every column. The horizontal-only
//!   variant keeps just the along-row clauses, which already force PRD of
//!   the child on the parent.
//!
//! Each checker returns a tri-state [`Check`]: `Holds`, `Fails` with a
//! numeric [`Witness`], or `Undefined` when the kernel has columns that
//! condition on zero-probability events (possible after Bayes inversion).

use serde::{Deserialize, Serialize};

use crate::model::{posterior_u_given_ac, posterior_u_given_c, Arm, CondMatrix, ModelSpec, Pmf};
use crate::Error;

/// Outcome of a dependence check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "witness")]
pub enum Check {
    Holds,
    Fails(Witness),
    Undefined,
}

impl Check {
    pub fn holds(&self) -> bool {
        matches!(self, Check::Holds)
    }

    pub fn fails(&self) -> bool {
        matches!(self, Check::Fails(_))
    }

    pub fn is_undefined(&self) -> bool {
        matches!(self, Check::Undefined)
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Check::Fails(w) => Some(w),
            _ => None,
        }
    }
}

/// The first counterexample found, rendered numerically.
///
/// `indices` are 1-based levels in the order named by `relation`; `lhs` and
/// `rhs` are the two sides of the violated inequality `lhs >= rhs` (so a
/// witness always has `lhs < rhs - tol`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub indices: Vec<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: String,
}

/// Which taper clauses to enforce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaperMode {
    /// Row and column decay away from the diagonal.
    Full,
    /// Row decay only: `p(i, j) <= p(i, k)` for `j <= k <= i` and
    /// `p(i, j) >= p(i, k)` for `i <= j <= k`.
    HorizontalOnly,
}

/// Positive regression dependence of the child on the parent.
///
/// For every threshold `x >= 2`, the tail mass `P(child >= x | parent = z)`
/// must be non-decreasing across adjacent parent levels. The `x = 1` tail is
/// identically one and is skipped.
pub fn check_prd(kernel: &CondMatrix, tol: f64) -> Check {
    if kernel.has_undefined_cols() {
        return Check::Undefined;
    }
    let (n_rows, n_cols) = (kernel.n_rows(), kernel.n_cols());
    // tails[z] = P(child >= x | parent = z), maintained while x walks down
    let mut tails = vec![0.0f64; n_cols];
    let mut tail_at = vec![vec![0.0f64; n_cols]; n_rows + 1];
    for x in (0..n_rows).rev() {
        for z in 0..n_cols {
            tails[z] += kernel.get(x, z);
        }
        tail_at[x] = tails.clone();
    }
    for x in 1..n_rows {
        let t = &tail_at[x];
        for z in 0..n_cols - 1 {
            if t[z + 1] < t[z] - tol {
                return Check::Fails(Witness {
                    indices: vec![x + 1, z + 1, z + 2],
                    lhs: t[z + 1],
                    rhs: t[z],
                    relation: format!(
                        "P(child >= {} | parent = {}) >= P(child >= {} | parent = {})",
                        x + 1,
                        z + 2,
                        x + 1,
                        z + 1
                    ),
                });
            }
        }
    }
    Check::Holds
}

/// Monotone likelihood ratio (TP2) in product form.
///
/// Checks `f(c'|u') f(c|u) >= f(c|u') f(c'|u)` over **all** index pairs
/// `c < c'`, `u < u'`, not just adjacent ones: with zero entries the usual
/// reduction to adjacent pairs is invalid.
pub fn check_mlr(kernel: &CondMatrix, tol: f64) -> Check {
    if kernel.has_undefined_cols() {
        return Check::Undefined;
    }
    let (n_rows, n_cols) = (kernel.n_rows(), kernel.n_cols());
    for c in 0..n_rows {
        for c2 in c + 1..n_rows {
            for u in 0..n_cols {
                for u2 in u + 1..n_cols {
                    let lhs = kernel.get(c2, u2) * kernel.get(c, u);
                    let rhs = kernel.get(c, u2) * kernel.get(c2, u);
                    if lhs < rhs - tol {
                        return Check::Fails(Witness {
                            indices: vec![c + 1, c2 + 1, u + 1, u2 + 1],
                            lhs,
                            rhs,
                            relation: format!(
                                "f({}|{}) f({}|{}) >= f({}|{}) f({}|{})",
                                c2 + 1,
                                u2 + 1,
                                c + 1,
                                u + 1,
                                c + 1,
                                u2 + 1,
                                c2 + 1,
                                u + 1
                            ),
                        });
                    }
                }
            }
        }
    }
    Check::Holds
}

/// Diagonal taper on a square kernel.
///
/// With `p(i, j) = P(child = i | parent = j)`, requires for all triples:
/// when `j <= k <= i`, `p(i, j) <= p(i, k)` and `p(j, i) <= p(k, i)`; when
/// `i <= j <= k`, `p(i, j) >= p(i, k)` and `p(j, i) >= p(k, i)`.
/// [`TaperMode::HorizontalOnly`] drops the `p(., i)` column clauses.
///
/// Errors on non-square kernels; the notion needs matching level sets.
pub fn check_tapered(kernel: &CondMatrix, mode: TaperMode, tol: f64) -> Result<Check, Error> {
    if !kernel.is_square() {
        return Err(Error::NonSquareKernel {
            rows: kernel.n_rows(),
            cols: kernel.n_cols(),
        });
    }
    if kernel.has_undefined_cols() {
        return Ok(Check::Undefined);
    }
    let n = kernel.n_rows();
    let vertical = mode == TaperMode::Full;
    let fail = |indices: Vec<usize>, lhs: f64, rhs: f64, relation: String| {
        Ok(Check::Fails(Witness {
            indices,
            lhs,
            rhs,
            relation,
        }))
    };
    for i in 0..n {
        // below or on the diagonal: mass grows toward the diagonal
        for j in 0..=i {
            for k in j..=i {
                let (a, b) = (kernel.get(i, j), kernel.get(i, k));
                if b < a - tol {
                    return fail(
                        vec![i + 1, j + 1, k + 1],
                        b,
                        a,
                        format!("p({},{}) <= p({},{}) for j <= k <= i", i + 1, j + 1, i + 1, k + 1),
                    );
                }
                if vertical {
                    let (a, b) = (kernel.get(j, i), kernel.get(k, i));
                    if b < a - tol {
                        return fail(
                            vec![i + 1, j + 1, k + 1],
                            b,
                            a,
                            format!("p({},{}) <= p({},{}) for j <= k <= i", j + 1, i + 1, k + 1, i + 1),
                        );
                    }
                }
            }
        }
        // past the diagonal: mass decays away from it
        for j in i..n {
            for k in j..n {
                let (a, b) = (kernel.get(i, j), kernel.get(i, k));
                if b > a + tol {
                    return fail(
                        vec![i + 1, j + 1, k + 1],
                        a,
                        b,
                        format!("p({},{}) >= p({},{}) for i <= j <= k", i + 1, j + 1, i + 1, k + 1),
                    );
                }
                if vertical {
                    let (a, b) = (kernel.get(j, i), kernel.get(k, i));
                    if b > a + tol {
                        return fail(
                            vec![i + 1, j + 1, k + 1],
                            a,
                            b,
                            format!("p({},{}) >= p({},{}) for i <= j <= k", j + 1, i + 1, k + 1, i + 1),
                        );
                    }
                }
            }
        }
    }
    Ok(Check::Holds)
}

// ── profiles over a full model ───────────────────────────────────────────────

/// Every dependence check relevant to one model, in one pass.
///
/// Taper entries are `Undefined` when the measurement kernel is not square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceProfile {
    /// PRD of the proxy on the confounder (the measurement kernel itself).
    pub prd_forward: Check,
    /// PRD of the confounder on the proxy (Bayes-inverted kernel).
    pub prd_reverse: Check,
    /// PRD of the confounder on the proxy within each arm, indexed by arm.
    pub prd_reverse_given: [Check; 2],
    /// MLR of the measurement kernel.
    pub mlr: Check,
    pub taper_full: Check,
    pub taper_horizontal: Check,
}

impl DependenceProfile {
    /// Human-readable region of the PRD / Tapered / MLR Venn diagram the
    /// measurement kernel falls into, e.g. `"PRD, not Tapered, and not MLR"`.
    pub fn venn_region(&self) -> String {
        let part = |check: &Check, name: &str| match check {
            Check::Holds => name.to_string(),
            Check::Fails(_) => format!("not {name}"),
            Check::Undefined => format!("{name} undefined"),
        };
        format!(
            "{}, {}, and {}",
            part(&self.prd_forward, "PRD"),
            part(&self.taper_full, "Tapered"),
            part(&self.mlr, "MLR")
        )
    }
}

/// Runs all checks for one model.
pub fn profile(spec: &ModelSpec, tol: f64) -> Result<DependenceProfile, Error> {
    spec.require_valid()?;
    let kernel = &spec.c_given_u;
    let posterior = posterior_u_given_c(spec)?;
    let prd_reverse_given = [
        check_prd(&posterior_u_given_ac(spec, Arm::Control)?, tol),
        check_prd(&posterior_u_given_ac(spec, Arm::Treated)?, tol),
    ];
    let taper = |mode| match check_tapered(kernel, mode, tol) {
        Ok(check) => check,
        Err(_) => Check::Undefined,
    };
    Ok(DependenceProfile {
        prd_forward: check_prd(kernel, tol),
        prd_reverse: check_prd(&posterior, tol),
        prd_reverse_given,
        mlr: check_mlr(kernel, tol),
        taper_full: taper(TaperMode::Full),
        taper_horizontal: taper(TaperMode::HorizontalOnly),
    })
}

/// Profiles a bare kernel by wrapping it in a neutral model: the given prior
/// (uniform when absent), constant propensity, increasing outcome levels.
///
/// The wrap affects only the arm-conditional posteriors, and with constant
/// propensity those equal the marginal posterior, so this reports the
/// kernel's own structure.
pub fn profile_kernel(
    kernel: &CondMatrix,
    prior: Option<&Pmf>,
    tol: f64,
) -> Result<DependenceProfile, Error> {
    let k_u = kernel.n_cols();
    let pi_u = match prior {
        Some(p) => p.clone(),
        None => Pmf::new_unchecked(vec![1.0 / k_u as f64; k_u]),
    };
    let spec = ModelSpec {
        pi_u,
        c_given_u: kernel.clone(),
        propensity: vec![0.5; k_u],
        m1: (1..=k_u).map(|u| u as f64).collect(),
        m0: (0..k_u).map(|u| u as f64).collect(),
        epsilon: 0.5,
    };
    profile(&spec, tol)
}

// ── implications between the notions ─────────────────────────────────────────

/// One verified implication: vacuously true when the premise fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicationCheck {
    pub name: &'static str,
    pub premise_holds: bool,
    pub conclusion_holds: bool,
    pub passed: bool,
}

impl ImplicationCheck {
    fn new(name: &'static str, premise_holds: bool, conclusion_holds: bool) -> Self {
        Self {
            name,
            premise_holds,
            conclusion_holds,
            passed: !premise_holds || conclusion_holds,
        }
    }
}

/// Evaluates the cross-notion implications that hold as theorems on every
/// model. A failed row is an implementation bug, never a property of the
/// model, which is what makes this a useful self-check inside sweeps.
///
/// * MLR of the kernel forces PRD in both directions, survives Bayes
///   inversion when every proxy level is reachable, and forces PRD of the
///   confounder on the proxy within each arm.
/// * With a binary confounder, marginal PRD of `U` on `C` already lifts to
///   both arms.
/// * Horizontal taper forces PRD of the proxy on the confounder.
pub fn verify_implications(spec: &ModelSpec, tol: f64) -> Result<Vec<ImplicationCheck>, Error> {
    let prof = profile(spec, tol)?;
    let posterior = posterior_u_given_c(spec)?;
    let mlr_reverse = check_mlr(&posterior, tol);
    let given_both = prof.prd_reverse_given[0].holds() && prof.prd_reverse_given[1].holds();
    let mlr = prof.mlr.holds();

    Ok(vec![
        ImplicationCheck::new("mlr_implies_prd_forward", mlr, prof.prd_forward.holds()),
        ImplicationCheck::new("mlr_implies_prd_reverse", mlr, prof.prd_reverse.holds()),
        ImplicationCheck::new(
            "mlr_survives_bayes_inversion",
            mlr && !posterior.has_undefined_cols(),
            mlr_reverse.holds(),
        ),
        ImplicationCheck::new("mlr_implies_prd_reverse_given_arm", mlr, given_both),
        ImplicationCheck::new(
            "binary_confounder_prd_lifts_to_arms",
            spec.k_u() == 2 && prof.prd_reverse.holds(),
            given_both,
        ),
        ImplicationCheck::new(
            "horizontal_taper_implies_prd_forward",
            prof.taper_horizontal.holds(),
            prof.prd_forward.holds(),
        ),
    ])
}
