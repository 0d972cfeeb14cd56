//! Embedded reference kernels with known classifications and posteriors.
//!
//! Seven 3x3 matrices (the sixth classification has two variants) covering
//! every region of the PRD / Tapered / MLR Venn diagram that a measurement
//! kernel can occupy, plus two with printed Bayes inversions. They anchor
//! the checkers: classifications and posterior tables are stored alongside
//! the matrices, and [`verify_reference_kernels`] re-derives everything and
//! diffs it against the stored values, so the suite (and the `repro`
//! command) can detect any drift in the checker or posterior code paths.

use serde::Serialize;

use crate::dependence::{check_mlr, check_prd, check_tapered, Check, TaperMode};
use crate::model::{posterior_u_given_c, CondMatrix, ModelSpec, Pmf};
use crate::Error;

/// One reference matrix, its stored classification flags, and, where the
/// source prints them, the prior and the posterior it induces.
///
/// `posterior_prd` / `posterior_taper` record whether the classification
/// survives Bayes inversion; `None` where the source draws no conclusion.
#[derive(Debug, Clone)]
pub struct ReferenceKernel {
    pub id: &'static str,
    pub kernel: CondMatrix,
    pub prior: Option<Pmf>,
    /// Posterior P(U = u | C = c), rows u, columns c, printed at 7 decimals.
    pub golden_posterior: Option<Vec<Vec<f64>>>,
    pub prd: bool,
    pub taper: bool,
    pub mlr: bool,
    pub posterior_prd: Option<bool>,
    pub posterior_taper: Option<bool>,
}

impl ReferenceKernel {
    /// Classification the stored flags describe, in the same phrasing the
    /// dependence profile uses.
    pub fn expected_region(&self) -> String {
        let part = |flag: bool, name: &str| {
            if flag {
                name.to_string()
            } else {
                format!("not {name}")
            }
        };
        format!(
            "{}, {}, and {}",
            part(self.prd, "PRD"),
            part(self.taper, "Tapered"),
            part(self.mlr, "MLR")
        )
    }

    /// Wraps the kernel in a neutral model (constant propensity, increasing
    /// outcome levels) so posterior operations can run on it.
    pub fn spec(&self) -> Option<ModelSpec> {
        let prior = self.prior.clone()?;
        let k_u = self.kernel.n_cols();
        Some(ModelSpec {
            pi_u: prior,
            c_given_u: self.kernel.clone(),
            propensity: vec![0.5; k_u],
            m1: (0..k_u).map(|u| (u + 1) as f64).collect(),
            m0: (0..k_u).map(|u| u as f64).collect(),
            epsilon: 0.5,
        })
    }
}

fn kernel(rows: &[&[f64]]) -> CondMatrix {
    CondMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).expect("reference matrix")
}

/// The full catalog.
pub fn reference_kernels() -> Vec<ReferenceKernel> {
    vec![
        ReferenceKernel {
            id: "f1",
            kernel: kernel(&[
                &[0.4, 0.3, 0.30],
                &[0.5, 0.5, 0.25],
                &[0.1, 0.2, 0.45],
            ]),
            prior: Some(Pmf::new_unchecked(vec![0.2, 0.5, 0.3])),
            golden_posterior: Some(vec![
                vec![0.25, 0.2352941, 0.07843137],
                vec![0.46875, 0.5882353, 0.39215686],
                vec![0.28125, 0.1764706, 0.52941176],
            ]),
            prd: true,
            taper: false,
            mlr: false,
            posterior_prd: Some(false),
            posterior_taper: None,
        },
        ReferenceKernel {
            id: "f2",
            kernel: kernel(&[
                &[0.39, 0.32, 0.3],
                &[0.31, 0.37, 0.31],
                &[0.3, 0.31, 0.39],
            ]),
            prior: Some(Pmf::new_unchecked(vec![0.25, 0.4, 0.35])),
            golden_posterior: Some(vec![
                vec![0.2950076, 0.2320359, 0.2235469],
                vec![0.3872920, 0.4431138, 0.3695976],
                vec![0.3177005, 0.3248503, 0.4068554],
            ]),
            prd: true,
            taper: true,
            mlr: false,
            posterior_prd: Some(true),
            posterior_taper: Some(false),
        },
        ReferenceKernel {
            id: "f3",
            kernel: kernel(&[
                &[0.7, 0.25, 0.05],
                &[0.25, 0.5, 0.25],
                &[0.05, 0.25, 0.7],
            ]),
            prior: None,
            golden_posterior: None,
            prd: true,
            taper: true,
            mlr: true,
            posterior_prd: None,
            posterior_taper: None,
        },
        ReferenceKernel {
            id: "f4",
            kernel: kernel(&[
                &[1.0 / 4.0, 1.0 / 6.0, 1.0 / 7.0],
                &[1.0 / 4.0, 1.0 / 3.0, 1.0 / 7.0],
                &[1.0 / 2.0, 1.0 / 2.0, 5.0 / 7.0],
            ]),
            prior: None,
            golden_posterior: None,
            prd: true,
            taper: false,
            mlr: false,
            posterior_prd: None,
            posterior_taper: None,
        },
        ReferenceKernel {
            id: "f5",
            kernel: kernel(&[
                &[0.5, 0.25, 0.25],
                &[0.25, 0.5, 0.25],
                &[0.25, 0.25, 0.5],
            ]),
            prior: None,
            golden_posterior: None,
            prd: true,
            taper: true,
            mlr: false,
            posterior_prd: None,
            posterior_taper: None,
        },
        ReferenceKernel {
            id: "f6a",
            kernel: kernel(&[
                &[1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0],
                &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                &[1.0 / 2.0, 1.0 / 2.0, 1.0 / 2.0],
            ]),
            prior: None,
            golden_posterior: None,
            prd: true,
            taper: false,
            mlr: true,
            posterior_prd: None,
            posterior_taper: None,
        },
        ReferenceKernel {
            id: "f6b",
            kernel: kernel(&[
                &[1.0 / 3.0, 0.0, 0.0],
                &[1.0 / 6.0, 1.0 / 4.0, 1.0 / 4.0],
                &[1.0 / 2.0, 3.0 / 4.0, 3.0 / 4.0],
            ]),
            prior: None,
            golden_posterior: None,
            prd: true,
            taper: false,
            mlr: true,
            posterior_prd: None,
            posterior_taper: None,
        },
    ]
}

/// Outcome of re-deriving one reference kernel.
#[derive(Debug, Clone, Serialize)]
pub struct FixtureReport {
    pub id: &'static str,
    /// Region string computed by the checkers (not the stored one).
    pub region: String,
    pub classification_ok: bool,
    /// Largest absolute posterior deviation from the stored table, when a
    /// posterior is stored.
    pub max_posterior_diff: Option<f64>,
    pub posterior_flags_ok: bool,
    pub ok: bool,
}

/// Re-derives every stored classification and posterior and reports the
/// deviations. `check_tol` feeds the dependence checkers; `posterior_tol`
/// bounds the allowed deviation from the stored posterior tables (they are
/// printed at 7 decimals, so 1e-6 is the natural bound).
pub fn verify_reference_kernels(
    check_tol: f64,
    posterior_tol: f64,
) -> Result<Vec<FixtureReport>, Error> {
    let holds = |c: &Check| c.holds();
    reference_kernels()
        .into_iter()
        .map(|fixture| {
            let prd = check_prd(&fixture.kernel, check_tol);
            let taper = check_tapered(&fixture.kernel, TaperMode::Full, check_tol)?;
            let mlr = check_mlr(&fixture.kernel, check_tol);
            let region = format!(
                "{}, {}, and {}",
                if holds(&prd) { "PRD" } else { "not PRD" },
                if holds(&taper) { "Tapered" } else { "not Tapered" },
                if holds(&mlr) { "MLR" } else { "not MLR" },
            );
            let classification_ok = holds(&prd) == fixture.prd
                && holds(&taper) == fixture.taper
                && holds(&mlr) == fixture.mlr;

            let mut max_posterior_diff = None;
            let mut posterior_flags_ok = true;
            if let Some(spec) = fixture.spec() {
                let posterior = posterior_u_given_c(&spec)?;
                if let Some(golden) = &fixture.golden_posterior {
                    let mut max_diff: f64 = 0.0;
                    for (u, row) in golden.iter().enumerate() {
                        for (c, &want) in row.iter().enumerate() {
                            max_diff = max_diff.max((posterior.get(u, c) - want).abs());
                        }
                    }
                    max_posterior_diff = Some(max_diff);
                }
                if let Some(want) = fixture.posterior_prd {
                    posterior_flags_ok &= check_prd(&posterior, check_tol).holds() == want;
                }
                if let Some(want) = fixture.posterior_taper {
                    let got = check_tapered(&posterior, TaperMode::Full, check_tol)?;
                    posterior_flags_ok &= got.holds() == want;
                }
            }
            let ok = classification_ok
                && posterior_flags_ok
                && max_posterior_diff.map_or(true, |d| d <= posterior_tol);
            Ok(FixtureReport {
                id: fixture.id,
                region,
                classification_ok,
                max_posterior_diff,
                posterior_flags_ok,
                ok,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::DEFAULT_TOL;

    #[test]
    fn catalog_covers_every_region_variant() {
        let ids: Vec<&str> = reference_kernels().iter().map(|f| f.id).collect();
        assert_eq!(ids, ["f1", "f2", "f3", "f4", "f5", "f6a", "f6b"]);
    }

    #[test]
    fn stored_classifications_match_the_checkers() {
        for fixture in reference_kernels() {
            assert_eq!(
                check_prd(&fixture.kernel, DEFAULT_TOL).holds(),
                fixture.prd,
                "{} prd",
                fixture.id
            );
            assert_eq!(
                check_tapered(&fixture.kernel, TaperMode::Full, DEFAULT_TOL)
                    .unwrap()
                    .holds(),
                fixture.taper,
                "{} taper",
                fixture.id
            );
            assert_eq!(
                check_mlr(&fixture.kernel, DEFAULT_TOL).holds(),
                fixture.mlr,
                "{} mlr",
                fixture.id
            );
        }
    }

    #[test]
    fn stored_posteriors_are_reproduced_to_seven_decimals() {
        for fixture in reference_kernels() {
            let Some(golden) = &fixture.golden_posterior else {
                continue;
            };
            let posterior = posterior_u_given_c(&fixture.spec().unwrap()).unwrap();
            for (u, row) in golden.iter().enumerate() {
                for (c, &want) in row.iter().enumerate() {
                    let got = posterior.get(u, c);
                    assert!(
                        (got - want).abs() <= 1e-6,
                        "{} posterior ({}, {}): got {got}, want {want}",
                        fixture.id,
                        u + 1,
                        c + 1
                    );
                }
            }
        }
    }

    #[test]
    fn first_posterior_loses_the_ordering_with_the_printed_witness() {
        let fixtures = reference_kernels();
        let f1 = &fixtures[0];
        let posterior = posterior_u_given_c(&f1.spec().unwrap()).unwrap();
        let check = check_prd(&posterior, DEFAULT_TOL);
        let witness = check.witness().expect("posterior ordering should fail");
        // the top-level tail drops between the first two proxy levels
        assert_eq!(witness.indices, vec![3, 1, 2]);
        assert!((witness.rhs - 0.28125).abs() <= 1e-9);
        assert!((witness.lhs - 0.1764706).abs() <= 1e-6);
    }

    #[test]
    fn second_posterior_keeps_ordering_but_loses_the_taper() {
        let fixtures = reference_kernels();
        let f2 = &fixtures[1];
        let posterior = posterior_u_given_c(&f2.spec().unwrap()).unwrap();
        assert!(check_prd(&posterior, DEFAULT_TOL).holds());
        let full = check_tapered(&posterior, TaperMode::Full, DEFAULT_TOL).unwrap();
        assert!(full.fails());
        // only a vertical clause breaks; the row-wise shape is intact
        let horizontal = check_tapered(&posterior, TaperMode::HorizontalOnly, DEFAULT_TOL).unwrap();
        assert!(horizontal.holds());
    }

    #[test]
    fn verification_report_is_all_green() {
        let reports = verify_reference_kernels(DEFAULT_TOL, 1e-6).unwrap();
        assert_eq!(reports.len(), 7);
        for report in &reports {
            assert!(report.ok, "{}: {report:?}", report.id);
        }
        assert_eq!(reports[2].region, "PRD, Tapered, and MLR");
        assert_eq!(reports[3].region, "PRD, not Tapered, and not MLR");
        assert_eq!(reports[4].region, "PRD, Tapered, and not MLR");
        assert_eq!(reports[5].region, "PRD, not Tapered, and MLR");
        assert!(reports[0].max_posterior_diff.unwrap() <= 1e-6);
        assert!(reports[1].max_posterior_diff.unwrap() <= 1e-6);
    }

    #[test]
    fn expected_region_strings_match_profile_phrasing() {
        let fixtures = reference_kernels();
        assert_eq!(fixtures[2].expected_region(), "PRD, Tapered, and MLR");
        assert_eq!(
            fixtures[0].expected_region(),
            "PRD, not Tapered, and not MLR"
        );
    }
}
