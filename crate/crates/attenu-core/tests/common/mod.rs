//! Brute-force joint-table oracle.
//!
//! Everything here is computed by materializing the full joint
//! P(U = u, C = c, A = a) as a table and summing over it directly, with no
//! shared code paths with the library: conditional means come from explicit
//! numerator/denominator sums, never from the library's posterior or
//! estimand operations. Comparing library outputs against these tables is
//! the equivalence gate for the estimand and posterior code.

// shared across test targets; not every target touches every accessor
#![allow(dead_code)]

use attenu_core::model::ModelSpec;

/// Full joint table and the row/column sums the oracle needs.
pub struct JointOracle {
    k_u: usize,
    k_c: usize,
    /// joint[u][c][a]
    joint: Vec<Vec<[f64; 2]>>,
    m: [Vec<f64>; 2],
    pi: Vec<f64>,
}

impl JointOracle {
    pub fn new(spec: &ModelSpec) -> Self {
        let (k_u, k_c) = (spec.k_u(), spec.k_c());
        let mut joint = vec![vec![[0.0; 2]; k_c]; k_u];
        for u in 0..k_u {
            for c in 0..k_c {
                let base = spec.pi_u.get(u) * spec.c_given_u.get(c, u);
                joint[u][c][0] = base * (1.0 - spec.propensity[u]);
                joint[u][c][1] = base * spec.propensity[u];
            }
        }
        Self {
            k_u,
            k_c,
            joint,
            m: [spec.m0.clone(), spec.m1.clone()],
            pi: spec.pi_u.probs().to_vec(),
        }
    }

    pub fn p_a(&self, a: usize) -> f64 {
        let mut total = 0.0;
        for u in 0..self.k_u {
            for c in 0..self.k_c {
                total += self.joint[u][c][a];
            }
        }
        total
    }

    pub fn marginal_c(&self) -> Vec<f64> {
        (0..self.k_c)
            .map(|c| {
                let mut total = 0.0;
                for u in 0..self.k_u {
                    total += self.joint[u][c][0] + self.joint[u][c][1];
                }
                total
            })
            .collect()
    }

    /// P(U = u | C = c); None column when the proxy level is unreachable.
    pub fn posterior_u_given_c(&self) -> Vec<Option<Vec<f64>>> {
        let f_c = self.marginal_c();
        (0..self.k_c)
            .map(|c| {
                if f_c[c] <= 0.0 {
                    return None;
                }
                Some(
                    (0..self.k_u)
                        .map(|u| (self.joint[u][c][0] + self.joint[u][c][1]) / f_c[c])
                        .collect(),
                )
            })
            .collect()
    }

    /// P(U = u | A = a, C = c) per column.
    pub fn posterior_u_given_ac(&self, a: usize) -> Vec<Option<Vec<f64>>> {
        (0..self.k_c)
            .map(|c| {
                let denom: f64 = (0..self.k_u).map(|u| self.joint[u][c][a]).sum();
                if denom <= 0.0 {
                    return None;
                }
                Some((0..self.k_u).map(|u| self.joint[u][c][a] / denom).collect())
            })
            .collect()
    }

    pub fn propensity_given_c(&self) -> Vec<Option<f64>> {
        let f_c = self.marginal_c();
        (0..self.k_c)
            .map(|c| {
                if f_c[c] <= 0.0 {
                    return None;
                }
                let treated: f64 = (0..self.k_u).map(|u| self.joint[u][c][1]).sum();
                Some(treated / f_c[c])
            })
            .collect()
    }

    pub fn outcome_given_ac(&self, a: usize) -> Vec<Option<f64>> {
        (0..self.k_c)
            .map(|c| {
                let mut num = 0.0;
                let mut den = 0.0;
                for u in 0..self.k_u {
                    num += self.m[a][u] * self.joint[u][c][a];
                    den += self.joint[u][c][a];
                }
                if den <= 0.0 {
                    None
                } else {
                    Some(num / den)
                }
            })
            .collect()
    }

    pub fn mu_unadj(&self, a: usize) -> f64 {
        let mut num = 0.0;
        for u in 0..self.k_u {
            for c in 0..self.k_c {
                num += self.m[a][u] * self.joint[u][c][a];
            }
        }
        num / self.p_a(a)
    }

    pub fn mu_adj(&self, a: usize) -> f64 {
        let f_c = self.marginal_c();
        let outcome = self.outcome_given_ac(a);
        (0..self.k_c)
            .filter_map(|c| outcome[c].map(|y| y * f_c[c]))
            .sum()
    }

    pub fn mu_true(&self, a: usize) -> f64 {
        (0..self.k_u).map(|u| self.m[a][u] * self.pi[u]).sum()
    }

    /// f(u | A = a).
    pub fn u_given_a(&self, a: usize) -> Vec<f64> {
        let p_a = self.p_a(a);
        (0..self.k_u)
            .map(|u| {
                let row: f64 = (0..self.k_c).map(|c| self.joint[u][c][a]).sum();
                row / p_a
            })
            .collect()
    }

    /// f(c | A = a).
    pub fn c_given_a(&self, a: usize) -> Vec<f64> {
        let p_a = self.p_a(a);
        (0..self.k_c)
            .map(|c| {
                let col: f64 = (0..self.k_u).map(|u| self.joint[u][c][a]).sum();
                col / p_a
            })
            .collect()
    }

    /// Treated-group control mean standardized over f(c | A = 1),
    /// skipping proxy levels the control arm never reaches.
    pub fn att_y0_adj(&self) -> f64 {
        let c_given_treated = self.c_given_a(1);
        let outcome = self.outcome_given_ac(0);
        (0..self.k_c)
            .filter_map(|c| outcome[c].map(|y| y * c_given_treated[c]))
            .sum()
    }

    pub fn att_y0_true(&self) -> f64 {
        let u_given_treated = self.u_given_a(1);
        (0..self.k_u)
            .map(|u| self.m[0][u] * u_given_treated[u])
            .sum()
    }
}

pub fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!(
        (got - want).abs() <= tol,
        "{what}: got {got}, want {want}, diff {}",
        (got - want).abs()
    );
}

pub fn assert_close_opt(got: Option<f64>, want: Option<f64>, tol: f64, what: &str) {
    match (got, want) {
        (None, None) => {}
        (Some(g), Some(w)) => assert_close(g, w, tol, what),
        _ => panic!("{what}: definedness mismatch, got {got:?}, want {want:?}"),
    }
}
