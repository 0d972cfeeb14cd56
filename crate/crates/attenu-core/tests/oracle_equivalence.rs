//! Equivalence of every estimand and posterior operation against the
//! brute-force joint-table oracle, over randomized models and a frozen
//! reference model whose values were computed independently.

mod common;

use attenu_core::estimands::{compute_att, compute_estimands, c_given_a, u_given_a};
use attenu_core::families::{sample_spec, GeneratorConfig, GeneratorKind};
use attenu_core::model::{
    marginal_c, outcome_given_ac, posterior_u_given_ac, posterior_u_given_c, propensity_given_c,
    Arm, CondMatrix, ModelSpec, Pmf,
};

use common::{assert_close, assert_close_opt, JointOracle};

const TOL: f64 = 1e-9;

fn check_against_oracle(spec: &ModelSpec, label: &str) {
    let oracle = JointOracle::new(spec);
    let (k_u, k_c) = (spec.k_u(), spec.k_c());

    let f_c = marginal_c(spec).unwrap();
    let want_f_c = oracle.marginal_c();
    for c in 0..k_c {
        assert_close(f_c.get(c), want_f_c[c], TOL, &format!("{label}: f_c[{c}]"));
    }

    let posterior = posterior_u_given_c(spec).unwrap();
    let want_posterior = oracle.posterior_u_given_c();
    for c in 0..k_c {
        match &want_posterior[c] {
            None => assert!(
                !posterior.col_is_defined(c),
                "{label}: column {c} should be undefined"
            ),
            Some(col) => {
                assert!(posterior.col_is_defined(c));
                for u in 0..k_u {
                    assert_close(
                        posterior.get(u, c),
                        col[u],
                        TOL,
                        &format!("{label}: P(U={u}|C={c})"),
                    );
                }
            }
        }
    }

    for arm in Arm::BOTH {
        let a = arm.index();
        let by_arm = posterior_u_given_ac(spec, arm).unwrap();
        let want = oracle.posterior_u_given_ac(a);
        for c in 0..k_c {
            match &want[c] {
                None => assert!(!by_arm.col_is_defined(c)),
                Some(col) => {
                    for u in 0..k_u {
                        assert_close(
                            by_arm.get(u, c),
                            col[u],
                            TOL,
                            &format!("{label}: P(U={u}|A={a},C={c})"),
                        );
                    }
                }
            }
        }

        let outcome = outcome_given_ac(spec, arm).unwrap();
        let want = oracle.outcome_given_ac(a);
        for c in 0..k_c {
            assert_close_opt(
                outcome[c],
                want[c],
                TOL,
                &format!("{label}: E(Y|A={a},C={c})"),
            );
        }

        let weights = u_given_a(spec, arm).unwrap();
        let want = oracle.u_given_a(a);
        for u in 0..k_u {
            assert_close(
                weights.get(u),
                want[u],
                TOL,
                &format!("{label}: f(U={u}|A={a})"),
            );
        }

        let weights = c_given_a(spec, arm).unwrap();
        let want = oracle.c_given_a(a);
        for c in 0..k_c {
            assert_close(
                weights.get(c),
                want[c],
                TOL,
                &format!("{label}: f(C={c}|A={a})"),
            );
        }
    }

    let prop = propensity_given_c(spec).unwrap();
    let want = oracle.propensity_given_c();
    for c in 0..k_c {
        assert_close_opt(prop[c], want[c], TOL, &format!("{label}: P(A=1|C={c})"));
    }

    let report = compute_estimands(spec).unwrap();
    assert_close(report.p_a1, oracle.p_a(1), TOL, &format!("{label}: P(A=1)"));
    for a in 0..2 {
        assert_close(
            report.mu_unadj[a],
            oracle.mu_unadj(a),
            TOL,
            &format!("{label}: mu_unadj[{a}]"),
        );
        assert_close(
            report.mu_adj[a],
            oracle.mu_adj(a),
            TOL,
            &format!("{label}: mu_adj[{a}]"),
        );
        assert_close(
            report.mu_true[a],
            oracle.mu_true(a),
            TOL,
            &format!("{label}: mu_true[{a}]"),
        );
    }

    let att = compute_att(spec).unwrap();
    assert_close(
        att.y0_unadj,
        oracle.mu_unadj(0),
        TOL,
        &format!("{label}: y0_unadj"),
    );
    assert_close(
        att.y0_adj,
        oracle.att_y0_adj(),
        TOL,
        &format!("{label}: y0_adj"),
    );
    assert_close(
        att.y0_true,
        oracle.att_y0_true(),
        TOL,
        &format!("{label}: y0_true"),
    );
}

#[test]
fn randomized_models_agree_with_the_joint_table() {
    let config = GeneratorConfig {
        kind: GeneratorKind::Unconstrained,
        k_u: (2, 5),
        k_c: (2, 5),
    };
    for trial in 0..1000 {
        let sample = sample_spec(&config, 2024, trial).unwrap();
        check_against_oracle(&sample.spec, &format!("trial {trial}"));
    }
}

#[test]
fn constrained_models_agree_with_the_joint_table() {
    let config = GeneratorConfig::new(GeneratorKind::ExpFamily);
    for trial in 0..200 {
        let sample = sample_spec(&config, 7, trial).unwrap();
        check_against_oracle(&sample.spec, &format!("expfamily trial {trial}"));
    }
}

fn reference_spec() -> ModelSpec {
    ModelSpec {
        pi_u: Pmf::new(vec![0.2, 0.5, 0.3]).unwrap(),
        c_given_u: CondMatrix::new(vec![
            vec![0.4, 0.3, 0.30],
            vec![0.5, 0.5, 0.25],
            vec![0.1, 0.2, 0.45],
        ])
        .unwrap(),
        propensity: vec![0.2, 0.5, 0.8],
        m1: vec![1.0, 2.0, 3.0],
        m0: vec![0.0, 1.0, 2.0],
        epsilon: 0.1,
    }
}

/// Frozen values computed with an independent implementation (explicit joint
/// enumeration in another language) before this library existed.
#[test]
fn reference_model_matches_independently_frozen_values() {
    let spec = reference_spec();

    let f_c = marginal_c(&spec).unwrap();
    for (c, want) in [0.32, 0.425, 0.255].into_iter().enumerate() {
        assert_close(f_c.get(c), want, TOL, &format!("frozen f_c[{c}]"));
    }

    let want_a0 = [
        [0.4076433121019109, 0.3636363636363637, 0.1720430107526882],
        [0.47770700636942676, 0.5681818181818182, 0.5376344086021506],
        [0.1146496815286624, 0.06818181818181816, 0.29032258064516125],
    ];
    let want_a1 = [
        [0.09815950920245402, 0.09756097560975611, 0.02469135802469136],
        [0.46012269938650313, 0.6097560975609756, 0.3086419753086419],
        [0.44171779141104295, 0.2926829268292683, 0.6666666666666666],
    ];
    for (arm, want) in [(Arm::Control, want_a0), (Arm::Treated, want_a1)] {
        let got = posterior_u_given_ac(&spec, arm).unwrap();
        for u in 0..3 {
            for c in 0..3 {
                assert_close(
                    got.get(u, c),
                    want[u][c],
                    TOL,
                    &format!("frozen P(U|A={},C)", arm.index()),
                );
            }
        }
    }

    let prop = propensity_given_c(&spec).unwrap();
    for (c, want) in [0.5093749999999999, 0.4823529411764706, 0.6352941176470589]
        .into_iter()
        .enumerate()
    {
        assert_close(prop[c].unwrap(), want, TOL, &format!("frozen e(c={c})"));
    }

    check_against_oracle(&spec, "frozen reference");
}

/// A proxy level no confounder level emits: the library must mark it
/// undefined everywhere the oracle produces no value, and adjusted means
/// must agree after both skip it.
#[test]
fn unreachable_proxy_levels_stay_equivalent() {
    let spec = ModelSpec {
        pi_u: Pmf::new(vec![0.3, 0.4, 0.3]).unwrap(),
        c_given_u: CondMatrix::new(vec![
            vec![0.5, 0.6, 0.4],
            vec![0.5, 0.4, 0.6],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap(),
        propensity: vec![0.2, 0.5, 0.7],
        m1: vec![1.0, 2.0, 3.0],
        m0: vec![0.0, 1.0, 2.0],
        epsilon: 0.1,
    };
    let posterior = posterior_u_given_c(&spec).unwrap();
    assert_eq!(posterior.undefined_cols(), &[2]);
    check_against_oracle(&spec, "unreachable level");
}
