//! `attenu`: command-line front end for the attenuation verification toolkit.
//!
//! Machine-readable JSON goes to stdout (or `--out`); one-line human
//! summaries go to stderr. Exit codes are a function of the verdict alone:
//!
//! * 0: operation ran and the checked property holds
//! * 1: operation ran and the checked property is violated
//! * 2: input could not be parsed, or the run configuration is infeasible
//! * 3: input parsed but fails model validation
//! * 4: requested contrast scale is undefined for the model's means

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use attenu_core::attenuation::{
    diagnose_assumptions, verify_attenuation, AttenuationVerdict, CounterexampleHit,
};
use attenu_core::dependence::{profile_kernel, verify_implications};
use attenu_core::estimands::{compute_estimands, EstimandReport, Scale};
use attenu_core::families::{
    gabriel_outcome_slopes, gabriel_propensity_curve, sample_spec, GabrielConfig,
    GeneratorConfig, GeneratorKind,
};
use attenu_core::fixtures::verify_reference_kernels;
use attenu_core::model::{classify_monotone, CondMatrix, Pmf};
use attenu_core::{Error, ModelSpec, DEFAULT_TOL};

const EXIT_VIOLATION: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_INVALID: u8 = 3;
const EXIT_DOMAIN: u8 = 4;

#[derive(Parser)]
#[command(
    name = "attenu",
    version,
    about = "Verify bias-attenuation guarantees for noisy-proxy confounder adjustment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a measurement kernel: PRD, taper, and likelihood-ratio order
    Check(CheckArgs),
    /// Compute estimands for a model and verify the attenuation sandwich
    Verify(VerifyArgs),
    /// Sweep seeded random models, counting chain and implication failures
    Scan(ScanArgs),
    /// Reproduce reference kernels and published counterexample curves
    Repro(ReproArgs),
}

#[derive(Args)]
struct CheckArgs {
    /// Kernel CSV: one row per proxy level, columns are confounder levels
    matrix: PathBuf,
    /// Optional confounder prior as a JSON array (default: uniform)
    prior: Option<PathBuf>,
    /// Ordering tolerance
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Write the profile JSON here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Full model as JSON
    model: PathBuf,
    /// Contrast scale for the effect comparison
    #[arg(long, value_enum, default_value_t = ScaleArg::Difference)]
    scale: ScaleArg,
    /// Ordering tolerance
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Write the report JSON here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// Model generator to draw from
    #[arg(long)]
    generator: GeneratorKind,
    /// Number of seeded trials
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    /// Sweep seed; each trial derives its own stream from it
    #[arg(long)]
    seed: u64,
    /// Contrast scale for the sandwich check
    #[arg(long, value_enum, default_value_t = ScaleArg::Difference)]
    scale: ScaleArg,
    /// Ordering tolerance
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Directory for per-violation finding files
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("what").required(true))]
struct ReproArgs {
    /// Published setting to reproduce (S4, S5, S6, or S7)
    #[arg(long, group = "what")]
    gabriel: Option<GabrielConfig>,
    /// Re-derive the reference kernels and diff against stored values
    #[arg(long, group = "what")]
    appendix_f: bool,
    /// Ordering tolerance for the classification checks
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Write the curve CSV / report JSON here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

/// `Scale` with clap's value conventions (`difference`, `ratio`, `odds-ratio`).
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleArg {
    Difference,
    Ratio,
    OddsRatio,
}

impl From<ScaleArg> for Scale {
    fn from(value: ScaleArg) -> Self {
        match value {
            ScaleArg::Difference => Scale::Difference,
            ScaleArg::Ratio => Scale::Ratio,
            ScaleArg::OddsRatio => Scale::OddsRatio,
        }
    }
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match &error {
            Error::Csv { .. } | Error::RaggedMatrix { .. } => EXIT_PARSE,
            Error::InvalidConfig(_) | Error::RejectionBudget { .. } => EXIT_PARSE,
            Error::ScaleDomain { .. } => EXIT_DOMAIN,
            Error::InvalidModel(_) | Error::DimensionMismatch { .. } => EXIT_INVALID,
            Error::NonSquareKernel { .. } => EXIT_INVALID,
        };
        Failure::new(code, error.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(args) => cmd_check(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Scan(args) => cmd_scan(args),
        Command::Repro(args) => cmd_repro(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn read_input(path: &PathBuf) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::new(EXIT_PARSE, format!("cannot read {}: {e}", path.display())))
}

/// Prints to stdout, treating a closed pipe as a silent stop rather than a
/// panic so `attenu ... | head` behaves.
fn print_stdout(line: &str) -> Result<(), Failure> {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{line}") {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(Failure::new(EXIT_PARSE, format!("cannot write to stdout: {e}"))),
    }
}

/// Writes the machine payload to `--out` when given, stdout otherwise.
fn emit(payload: &str, out: &Option<PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, payload).map_err(|e| {
            Failure::new(EXIT_PARSE, format!("cannot write {}: {e}", path.display()))
        }),
        None => print_stdout(payload.trim_end_matches('\n')),
    }
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

fn cmd_check(args: CheckArgs) -> Result<u8, Failure> {
    // from_csv checks shape only; stochasticity failures surface from the
    // profile as validation errors, keeping malformed and invalid distinct
    let kernel = CondMatrix::from_csv(&read_input(&args.matrix)?)?;
    let prior = match &args.prior {
        Some(path) => {
            let text = read_input(path)?;
            let probs: Vec<f64> = serde_json::from_str(&text).map_err(|e| {
                Failure::new(EXIT_PARSE, format!("prior is not a JSON array of numbers: {e}"))
            })?;
            Some(Pmf::new(probs)?)
        }
        None => None,
    };

    let report = profile_kernel(&kernel, prior.as_ref(), args.tol)?;
    eprintln!("region: {}", report.venn_region());
    emit(&to_pretty(&report), &args.out)?;
    Ok(0)
}

#[derive(Serialize)]
struct VerifyOutput {
    scale: Scale,
    estimands: EstimandReport,
    verdict: AttenuationVerdict,
}

fn parse_model(text: &str) -> Result<ModelSpec, Failure> {
    let spec: ModelSpec = serde_json::from_str(text).map_err(|e| {
        // a syntactically fine document that fails the kernel's stochasticity
        // check surfaces as a data error: that is invalid, not malformed
        let code = match e.classify() {
            serde_json::error::Category::Data => EXIT_INVALID,
            _ => EXIT_PARSE,
        };
        Failure::new(code, format!("model JSON: {e}"))
    })?;
    spec.require_valid()?;
    Ok(spec)
}

fn cmd_verify(args: VerifyArgs) -> Result<u8, Failure> {
    let spec = parse_model(&read_input(&args.model)?)?;
    let scale = Scale::from(args.scale);
    let estimands = compute_estimands(&spec)?;
    let verdict = verify_attenuation(&spec, scale, args.tol)?;

    let held = verdict.sandwich_holds;
    eprintln!(
        "{scale} scale: chain {:?}, sandwich {}",
        verdict.chain_direction,
        if held { "holds" } else { "VIOLATED" }
    );
    let output = VerifyOutput {
        scale,
        estimands,
        verdict,
    };
    emit(&to_pretty(&output), &args.out)?;
    Ok(if held { 0 } else { EXIT_VIOLATION })
}

#[derive(Serialize)]
struct ScanSummary {
    trials: u64,
    assumption_satisfying: u64,
    chain_failures: u64,
    implication_failures: u64,
}

fn cmd_scan(args: ScanArgs) -> Result<u8, Failure> {
    let config = GeneratorConfig::new(args.generator);
    let scale = Scale::from(args.scale);
    let mut summary = ScanSummary {
        trials: args.trials,
        assumption_satisfying: 0,
        chain_failures: 0,
        implication_failures: 0,
    };
    let mut findings: Vec<CounterexampleHit> = Vec::new();

    for trial in 0..args.trials {
        let spec = sample_spec(&config, args.seed, trial)?.spec;
        let failed = diagnose_assumptions(&spec, args.tol)?;
        if failed.is_empty() {
            summary.assumption_satisfying += 1;
        }
        if verify_implications(&spec, args.tol)?.iter().any(|row| !row.passed) {
            summary.implication_failures += 1;
        }
        let verdict = verify_attenuation(&spec, scale, args.tol)?;
        if !verdict.sandwich_holds {
            summary.chain_failures += 1;
            findings.push(CounterexampleHit {
                trial,
                spec,
                verdict,
                failed_assumptions: failed,
            });
        }
    }

    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| {
            Failure::new(EXIT_PARSE, format!("cannot create {}: {e}", dir.display()))
        })?;
        for hit in &findings {
            let path = dir.join(format!("finding-{:05}.json", hit.trial));
            fs::write(&path, to_pretty(hit)).map_err(|e| {
                Failure::new(EXIT_PARSE, format!("cannot write {}: {e}", path.display()))
            })?;
        }
    }

    eprintln!(
        "{} trials: {} assumption-satisfying, {} sandwich violations, {} implication failures{}",
        summary.trials,
        summary.assumption_satisfying,
        summary.chain_failures,
        summary.implication_failures,
        match (&args.out, findings.len()) {
            (Some(dir), n) if n > 0 => format!("; {n} findings in {}", dir.display()),
            (None, n) if n > 0 => "; pass --out to save findings".to_string(),
            _ => String::new(),
        }
    );
    // the summary is the contract: one compact line, byte-identical per seed
    print_stdout(&serde_json::to_string(&summary).expect("summary serializes"))?;
    Ok(0)
}

fn cmd_repro(args: ReproArgs) -> Result<u8, Failure> {
    if args.appendix_f {
        let reports = verify_reference_kernels(args.tol, 1e-6)?;
        let mut all_ok = true;
        for report in &reports {
            all_ok &= report.ok;
            eprintln!(
                "{}: {} | posterior diff {} | {}",
                report.id,
                report.region,
                report
                    .max_posterior_diff
                    .map(|d| format!("{d:.2e}"))
                    .unwrap_or_else(|| "n/a".into()),
                if report.ok { "ok" } else { "MISMATCH" }
            );
        }
        emit(&to_pretty(&reports), &args.out)?;
        return Ok(if all_ok { 0 } else { EXIT_VIOLATION });
    }

    let config = args.gabriel.expect("clap group guarantees a choice");
    match config {
        GabrielConfig::S4 { .. } | GabrielConfig::S5 { .. } => {
            let slopes = gabriel_outcome_slopes(&config)?;
            eprintln!(
                "outcome slopes: control {}, treated {}; shared direction: {}",
                slopes.slope_a0, slopes.slope_a1, slopes.shared_direction
            );
            emit(&to_pretty(&slopes), &args.out)?;
        }
        GabrielConfig::S6 { .. } | GabrielConfig::S7 { .. } => {
            let curve = gabriel_propensity_curve(&config, &config.default_grid())?;
            let strata: Vec<Option<u8>> = if matches!(config, GabrielConfig::S6 { .. }) {
                vec![None]
            } else {
                vec![Some(0), Some(1)]
            };
            for x in strata {
                let class = classify_monotone(&curve.stratum(x), args.tol);
                match x {
                    Some(x) => eprintln!("stratum x={x}: {:?}", class.direction),
                    None => eprintln!("propensity curve: {:?}", class.direction),
                }
            }
            emit(&curve.to_csv(), &args.out)?;
        }
    }
    Ok(0)
}
