//! Browser bindings: string-in, JSON-string-out wrappers around the kernel
//! classifier, the attenuation verdict, and the counterexample hunt.
//!
//! Every function returns an envelope `{"ok": true, ...}` or
//! `{"ok": false, "error": "..."}` so the page never deals with thrown
//! exceptions crossing the boundary.

use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

use attenu_core::attenuation::{hunt_counterexamples, verify_attenuation, AttenuationVerdict};
use attenu_core::dependence::{profile_kernel, DependenceProfile};
use attenu_core::estimands::{compute_estimands, EstimandReport, Scale};
use attenu_core::families::{GeneratorConfig, GeneratorKind};
use attenu_core::model::{CondMatrix, Pmf};
use attenu_core::{ModelSpec, DEFAULT_TOL};

/// Browser runs are interactive; keep a single hunt bounded.
const MAX_TRIALS: u32 = 50_000;
/// Findings shipped back for display; the counts cover the rest.
const MAX_FINDINGS: usize = 8;

fn envelope<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report types serialize")
}

fn err_json(message: impl std::fmt::Display) -> String {
    envelope(&serde_json::json!({ "ok": false, "error": message.to_string() }))
}

fn effective_tol(tol: f64) -> Result<f64, String> {
    if tol == 0.0 {
        Ok(DEFAULT_TOL)
    } else if tol.is_finite() && tol > 0.0 && tol <= 0.1 {
        Ok(tol)
    } else {
        Err(format!("tolerance must lie in (0, 0.1], got {tol}"))
    }
}

#[derive(Serialize)]
struct ClassifyOutput {
    ok: bool,
    region: String,
    profile: DependenceProfile,
}

/// Classifies a measurement kernel given as CSV (one row per proxy level),
/// with an optional prior as a JSON array (empty string for uniform).
/// Pass `tol = 0` for the default tolerance.
#[wasm_bindgen]
pub fn classify_kernel_csv(csv: &str, prior_json: &str, tol: f64) -> String {
    let run = || -> Result<String, String> {
        let tol = effective_tol(tol)?;
        let kernel = CondMatrix::from_csv(csv).map_err(|e| e.to_string())?;
        let prior = if prior_json.trim().is_empty() {
            None
        } else {
            let probs: Vec<f64> = serde_json::from_str(prior_json)
                .map_err(|e| format!("prior is not a JSON array of numbers: {e}"))?;
            Some(Pmf::new(probs).map_err(|e| e.to_string())?)
        };
        let profile = profile_kernel(&kernel, prior.as_ref(), tol).map_err(|e| e.to_string())?;
        Ok(envelope(&ClassifyOutput {
            ok: true,
            region: profile.venn_region(),
            profile,
        }))
    };
    run().unwrap_or_else(err_json)
}

#[derive(Serialize)]
struct VerdictOutput {
    ok: bool,
    scale: Scale,
    estimands: EstimandReport,
    verdict: AttenuationVerdict,
}

/// Verifies the attenuation sandwich for a full model given as JSON, on
/// `"difference"`, `"ratio"`, or `"odds-ratio"`. Pass `tol = 0` for the
/// default tolerance.
#[wasm_bindgen]
pub fn attenuation_report_json(model_json: &str, scale: &str, tol: f64) -> String {
    let run = || -> Result<String, String> {
        let tol = effective_tol(tol)?;
        let scale: Scale = scale.parse().map_err(|e: attenu_core::Error| e.to_string())?;
        let spec: ModelSpec =
            serde_json::from_str(model_json).map_err(|e| format!("model JSON: {e}"))?;
        spec.require_valid().map_err(|e| e.to_string())?;
        let estimands = compute_estimands(&spec).map_err(|e| e.to_string())?;
        let verdict = verify_attenuation(&spec, scale, tol).map_err(|e| e.to_string())?;
        Ok(envelope(&VerdictOutput {
            ok: true,
            scale,
            estimands,
            verdict,
        }))
    };
    run().unwrap_or_else(err_json)
}

#[derive(Serialize)]
struct HuntOutput {
    ok: bool,
    generator: String,
    trials: u32,
    violations: u64,
    /// First few violations, with their diagnoses; capped for display.
    findings: Vec<serde_json::Value>,
}

/// Sweeps seeded random models on the difference scale and reports sandwich
/// violations with their diagnosed assumption failures. Generators:
/// `"expfamily"`, `"rejection-mlr"`, `"rejection-taper"`, `"unconstrained"`.
#[wasm_bindgen]
pub fn hunt_counterexamples_json(generator: &str, trials: u32, seed: u32, tol: f64) -> String {
    let run = || -> Result<String, String> {
        let tol = effective_tol(tol)?;
        if trials == 0 || trials > MAX_TRIALS {
            return Err(format!("trials must lie in 1..={MAX_TRIALS}"));
        }
        let kind: GeneratorKind = generator.parse().map_err(|e: attenu_core::Error| e.to_string())?;
        let config = GeneratorConfig::new(kind);
        let hits = hunt_counterexamples(
            &config,
            trials as u64,
            seed as u64,
            Scale::Difference,
            tol,
        )
        .map_err(|e| e.to_string())?;
        let findings = hits
            .iter()
            .take(MAX_FINDINGS)
            .map(|hit| serde_json::to_value(hit).expect("hit serializes"))
            .collect();
        Ok(envelope(&HuntOutput {
            ok: true,
            generator: kind.to_string(),
            trials,
            violations: hits.len() as u64,
            findings,
        }))
    };
    run().unwrap_or_else(err_json)
}
