//! End-to-end tests driving the compiled binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use attenu_core::attenuation::verify_attenuation;
use attenu_core::estimands::Scale;
use attenu_core::model::{classify_monotone, Direction};
use attenu_core::{ModelSpec, DEFAULT_TOL};

fn attenu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attenu"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(output: &Output) -> serde_json::Value {
    serde_json::from_slice(&output.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&output.stdout)
        )
    })
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

const ORDERED_MODEL: &str = r#"{
  "pi_u": [0.3, 0.4, 0.3],
  "c_given_u": [[0.7, 0.25, 0.05], [0.25, 0.5, 0.25], [0.05, 0.25, 0.7]],
  "propensity": [0.3, 0.55, 0.75],
  "m1": [1.5, 2.0, 3.0],
  "m0": [0.5, 1.0, 1.8],
  "epsilon": 0.2
}"#;

#[test]
fn check_classifies_the_equicorrelated_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kernel.csv");
    write(&path, "0.5,0.25,0.25\n0.25,0.5,0.25\n0.25,0.25,0.5\n");
    let out = attenu(&["check", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("PRD, Tapered, and not MLR"),
        "unexpected region line: {stderr}"
    );
    let profile = stdout_json(&out);
    assert_eq!(profile["prd_forward"]["status"], "Holds");
    assert_eq!(profile["taper_full"]["status"], "Holds");
    assert_eq!(profile["mlr"]["status"], "Fails");
}

#[test]
fn check_classifies_the_graded_kernel_as_mlr_not_tapered() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kernel.csv");
    // columns step 1/6 -> 1/3 -> 1/2: likelihood-ratio ordered but the
    // diagonal never dominates
    write(
        &path,
        "0.16666666666666666,0.16666666666666666,0.16666666666666666\n\
         0.3333333333333333,0.3333333333333333,0.3333333333333333\n\
         0.5,0.5,0.5\n",
    );
    let out = attenu(&["check", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("PRD, not Tapered, and MLR"));
}

#[test]
fn check_accepts_identity_kernel_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kernel.csv");
    write(&path, "1,0,0\n0,1,0\n0,0,1\n");
    let out = attenu(&["check", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("PRD, Tapered, and MLR"));
}

#[test]
fn check_takes_an_explicit_prior() {
    let dir = tempfile::tempdir().unwrap();
    let kernel = dir.path().join("kernel.csv");
    let prior = dir.path().join("prior.json");
    write(&kernel, "0.4,0.3,0.30\n0.5,0.5,0.25\n0.1,0.2,0.45\n");
    write(&prior, "[0.2, 0.5, 0.3]");
    let out = attenu(&["check", kernel.to_str().unwrap(), prior.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    // this kernel is forward-PRD but its posterior is not
    let profile = stdout_json(&out);
    assert_eq!(profile["prd_forward"]["status"], "Holds");
    assert_eq!(profile["prd_reverse"]["status"], "Fails");
}

#[test]
fn check_exit_codes_distinguish_malformed_from_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let ragged = dir.path().join("ragged.csv");
    write(&ragged, "0.5,0.5\n0.5\n");
    assert_eq!(exit_code(&attenu(&["check", ragged.to_str().unwrap()])), 2);

    let words = dir.path().join("words.csv");
    write(&words, "0.5,abc\n0.5,0.5\n");
    assert_eq!(exit_code(&attenu(&["check", words.to_str().unwrap()])), 2);

    let nonstoch = dir.path().join("nonstoch.csv");
    write(&nonstoch, "0.9,0.3\n0.3,0.7\n");
    let out = attenu(&["check", nonstoch.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 3);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("column 1"),
        "validation message should name the column"
    );

    assert_eq!(exit_code(&attenu(&["check", "/nonexistent/x.csv"])), 2);
}

#[test]
fn verify_accepts_an_ordered_model_on_every_scale() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    write(&path, ORDERED_MODEL);
    for scale in ["difference", "ratio"] {
        let out = attenu(&["verify", path.to_str().unwrap(), "--scale", scale]);
        assert_eq!(exit_code(&out), 0, "scale {scale}");
        let report = stdout_json(&out);
        assert_eq!(report["verdict"]["sandwich_holds"], true);
        assert_eq!(report["verdict"]["chain_direction"], "AsStated");
    }
    // means exceed one, so the odds-ratio contrast has no domain
    let out = attenu(&["verify", path.to_str().unwrap(), "--scale", "odds-ratio"]);
    assert_eq!(exit_code(&out), 4);
}

#[test]
fn verify_flags_a_violating_model_with_exit_one() {
    // draw a model with opposed propensity and outcome trends strong enough
    // to push the adjusted contrast outside the sandwich
    let dir = tempfile::tempdir().unwrap();
    let scan_out = dir.path().join("findings");
    let out = attenu(&[
        "scan",
        "--generator",
        "unconstrained",
        "--trials",
        "400",
        "--seed",
        "11",
        "--out",
        scan_out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let mut findings: Vec<_> = fs::read_dir(&scan_out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    findings.sort();
    assert!(!findings.is_empty(), "seeded scan should produce findings");

    let finding: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&findings[0]).unwrap()).unwrap();
    assert!(
        !finding["failed_assumptions"].as_array().unwrap().is_empty(),
        "finding carries its diagnosis"
    );

    // feeding the recorded model back into verify reproduces the violation
    let model_path = dir.path().join("hit.json");
    write(&model_path, &finding["spec"].to_string());
    let out = attenu(&["verify", model_path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    let report = stdout_json(&out);
    assert_eq!(report["verdict"]["sandwich_holds"], false);
    assert_eq!(&report["verdict"], &finding["verdict"], "verdicts round-trip");
}

#[test]
fn verify_identity_kernel_has_zero_adjustment_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    write(
        &path,
        r#"{
          "pi_u": [0.2, 0.5, 0.3],
          "c_given_u": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
          "propensity": [0.3, 0.5, 0.7],
          "m1": [1.0, 2.0, 3.0],
          "m0": [0.5, 1.0, 1.5],
          "epsilon": 0.3
        }"#,
    );
    let out = attenu(&["verify", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    let report = stdout_json(&out);
    for arm in 0..2 {
        let adj = report["estimands"]["mu_adj"][arm].as_f64().unwrap();
        let truth = report["estimands"]["mu_true"][arm].as_f64().unwrap();
        assert!(
            (adj - truth).abs() <= 1e-12,
            "perfect proxy must adjust exactly: arm {arm}, {adj} vs {truth}"
        );
    }
}

#[test]
fn verify_exit_codes_cover_parse_validate_domain() {
    let dir = tempfile::tempdir().unwrap();
    let garbled = dir.path().join("garbled.json");
    write(&garbled, "{ not json");
    assert_eq!(exit_code(&attenu(&["verify", garbled.to_str().unwrap()])), 2);

    let nonstoch = dir.path().join("nonstoch.json");
    write(
        &nonstoch,
        r#"{"pi_u":[0.5,0.5],"c_given_u":[[0.9,0.3],[0.3,0.7]],
            "propensity":[0.3,0.6],"m1":[1,2],"m0":[0.5,1],"epsilon":0.2}"#,
    );
    assert_eq!(exit_code(&attenu(&["verify", nonstoch.to_str().unwrap()])), 3);

    let no_positivity = dir.path().join("no_positivity.json");
    write(
        &no_positivity,
        r#"{"pi_u":[0.5,0.5],"c_given_u":[[0.7,0.3],[0.3,0.7]],
            "propensity":[0.05,0.6],"m1":[1,2],"m0":[0.5,1],"epsilon":0.2}"#,
    );
    assert_eq!(
        exit_code(&attenu(&["verify", no_positivity.to_str().unwrap()])),
        3
    );
}

#[test]
fn scan_summary_is_byte_identical_and_clean_for_ordered_models() {
    let args = ["scan", "--generator", "expfamily", "--trials", "64", "--seed", "7"];
    let first = attenu(&args);
    let second = attenu(&args);
    assert_eq!(exit_code(&first), 0);
    assert_eq!(first.stdout, second.stdout, "summaries must be byte-identical");

    let summary = stdout_json(&first);
    assert_eq!(summary["trials"], 64);
    assert_eq!(summary["assumption_satisfying"], 64);
    assert_eq!(summary["chain_failures"], 0);
    assert_eq!(summary["implication_failures"], 0);
}

#[test]
fn scan_single_trial_reports_one_trial() {
    let out = attenu(&["scan", "--generator", "rejection-mlr", "--trials", "1", "--seed", "3"]);
    assert_eq!(exit_code(&out), 0);
    let summary = stdout_json(&out);
    assert_eq!(summary["trials"], 1);
}

#[test]
fn scan_findings_reverify_as_violations() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("findings");
    let out = attenu(&[
        "scan",
        "--generator",
        "unconstrained",
        "--trials",
        "300",
        "--seed",
        "17",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let summary = stdout_json(&out);
    let failures = summary["chain_failures"].as_u64().unwrap();
    assert!(failures > 0, "unconstrained scan should hit violations");

    let entries: Vec<_> = fs::read_dir(&out_dir).unwrap().collect();
    assert_eq!(entries.len() as u64, failures, "one file per violation");
    for entry in entries {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        let finding: serde_json::Value = serde_json::from_str(&text).unwrap();
        let spec: ModelSpec = serde_json::from_value(finding["spec"].clone()).unwrap();
        let verdict = verify_attenuation(&spec, Scale::Difference, DEFAULT_TOL).unwrap();
        assert!(!verdict.sandwich_holds, "recorded finding must re-verify");
    }
}

#[test]
fn scan_rejects_zero_trials() {
    let out = attenu(&["scan", "--generator", "expfamily", "--trials", "0", "--seed", "1"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn repro_reference_kernels_all_match() {
    let out = attenu(&["repro", "--appendix-f"]);
    assert_eq!(exit_code(&out), 0);
    let reports = stdout_json(&out);
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 7);
    for report in reports {
        assert_eq!(report["ok"], true, "{report}");
    }
}

#[test]
fn repro_outcome_settings_print_slopes() {
    let out = attenu(&["repro", "--gabriel", "S4"]);
    assert_eq!(exit_code(&out), 0);
    let slopes = stdout_json(&out);
    assert_eq!(slopes["slope_a0"].as_f64().unwrap(), 1.0);
    assert!((slopes["slope_a1"].as_f64().unwrap() + 1.2).abs() <= 1e-12);
    assert_eq!(slopes["shared_direction"], false);

    let out = attenu(&["repro", "--gabriel", "s5"]);
    assert_eq!(exit_code(&out), 0);
    let slopes = stdout_json(&out);
    assert!((slopes["slope_a1"].as_f64().unwrap() + 0.8).abs() <= 1e-12);
}

fn csv_column(text: &str, header: &str, column: &str) -> Vec<f64> {
    let mut lines = text.lines();
    let head = lines.next().unwrap();
    assert_eq!(head, header);
    let idx = head.split(',').position(|h| h == column).unwrap();
    lines
        .map(|line| line.split(',').nth(idx).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn repro_gamma_mixture_curve_is_nonmonotone() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let out = attenu(&["repro", "--gabriel", "S6", "--out", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    let text = fs::read_to_string(&path).unwrap();
    let ps = csv_column(&text, "u,p", "p");
    assert!(ps.len() > 10);
    let class = classify_monotone(&ps, DEFAULT_TOL);
    assert_eq!(class.direction, Direction::NonMonotone);
}

#[test]
fn repro_stratified_curves_trend_oppositely() {
    let out = attenu(&["repro", "--gabriel", "S7"]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("u,x,p\n"));
    let mut strata: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let x: usize = fields[1].parse().unwrap();
        strata[x].push(fields[2].parse().unwrap());
    }
    assert_eq!(
        classify_monotone(&strata[0], DEFAULT_TOL).direction,
        Direction::NonDecreasing
    );
    assert_eq!(
        classify_monotone(&strata[1], DEFAULT_TOL).direction,
        Direction::NonIncreasing
    );
}

#[test]
fn repro_requires_exactly_one_target() {
    assert_eq!(exit_code(&attenu(&["repro"])), 2);
    assert_eq!(
        exit_code(&attenu(&["repro", "--gabriel", "S4", "--appendix-f"])),
        2
    );
}

#[test]
fn emitted_reports_round_trip_through_their_files() {
    // re-reading an emitted verify report and re-running produces the same
    // numbers, byte for byte
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    write(&model, ORDERED_MODEL);
    let first = dir.path().join("report1.json");
    let second = dir.path().join("report2.json");
    attenu(&["verify", model.to_str().unwrap(), "--out", first.to_str().unwrap()]);
    attenu(&["verify", model.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}
