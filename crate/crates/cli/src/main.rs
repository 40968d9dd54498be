use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use steering_core::conversions::{self, BitSearchOptions};
use steering_core::io;
use steering_core::lhs::{is_lhs, DEFAULT_MEMBERSHIP_TOL};
use steering_core::monotones::{relative_entropy_of_steering, robustness, steerable_weight, DecompositionWitness, RelEntropyOptions};
use steering_core::par::{threads_from_env, with_threads};
use steering_core::suite::{self, FailureDump, FixtureKind, FixtureParams, SuiteConfig, SuiteKind};
use steering_core::{PureAssemblage, SteeringError};

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "steering", version, about = "EPR steering assemblages, SNIOs and monotones")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize an assemblage, SNIO, LHS model or strategy file.
    Inspect { file: PathBuf },
    /// Test LHS membership; exits 0 for members and 1 otherwise.
    IsLhs {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MEMBERSHIP_TOL)]
        tol: f64,
    },
    /// Evaluate steering monotones (weight and robustness when none is selected).
    Measure(MeasureArgs),
    /// Apply an SNIO to an assemblage.
    Apply {
        #[arg(long)]
        snio: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep only this branch (unnormalized).
        #[arg(long)]
        branch: Option<usize>,
    },
    /// Decide convertibility between pure orthogonal qubit assemblages; exits 0 when convertible.
    ConvertCheck {
        from: PathBuf,
        to: PathBuf,
        #[arg(long)]
        emit_witness: Option<PathBuf>,
    },
    /// Write a fixture assemblage.
    Gen(GenArgs),
    /// Search for single-branch SNIOs onto the pure orthogonal family.
    BitSearch {
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        thetas: Vec<f64>,
        #[arg(long, default_value_t = 64)]
        restarts: usize,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the property suites.
    Suite(SuiteArgs),
}

#[derive(Args)]
struct MeasureArgs {
    file: PathBuf,
    #[arg(long)]
    weight: bool,
    #[arg(long)]
    robustness: bool,
    #[arg(long)]
    rel_entropy: bool,
    /// Random restarts for the relative entropy.
    #[arg(long, default_value_t = 2)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write witnesses to `<prefix>.<measure>.json`.
    #[arg(long)]
    witness_prefix: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// singlet-xz, theta, random-lhs or random-steerable (theta when only --theta is given).
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    r: usize,
    #[arg(long, default_value_t = 2)]
    s: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SuiteArgs {
    /// JSON config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated suite names.
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for failing-instance dumps.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
    /// Re-run one failure dump instead of the suites.
    #[arg(long, conflicts_with_all = ["config", "seed", "trials", "only"])]
    replay: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match with_threads(threads_from_env(), || run(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                SteeringError::Solver { .. } | SteeringError::EigenNonConvergence { .. } => EXIT_SOLVER,
                _ => EXIT_USAGE,
            })
        }
    }
}

fn print(value: &Value) {
    println!("{}", io::to_canonical(value).trim_end());
}

fn parsed(text: &str) -> Value {
    serde_json::from_str(text).expect("codec output is valid JSON")
}

fn run(cli: Cli) -> steering_core::Result<u8> {
    match cli.command {
        Command::Inspect { file } => inspect(&file),
        Command::IsLhs { file, tol } => {
            let ass = io::load_assemblage(&file)?;
            let m = is_lhs(&ass, tol)?;
            print(&json!({ "is_member": m.is_member, "margin": m.margin, "tol": tol }));
            Ok(if m.is_member { 0 } else { EXIT_FAIL })
        }
        Command::Measure(args) => measure(&args),
        Command::Apply { snio, input, out, branch } => {
            let map = io::load_snio(&snio)?;
            let ass = io::load_assemblage(&input)?;
            let image = match branch {
                Some(omega) if omega >= map.n_branches() => {
                    return Err(SteeringError::Precondition(format!(
                        "branch {omega} out of range ({} branches)",
                        map.n_branches()
                    )))
                }
                Some(omega) => map.apply_branch(omega, &ass)?,
                None => map.apply(&ass)?,
            };
            io::write_file(&out, &io::assemblage_to_json(&image))?;
            print(&json!({ "out": out, "trace": image.trace() }));
            Ok(0)
        }
        Command::ConvertCheck { from, to, emit_witness } => {
            let a = PureAssemblage::from_assemblage(&io::load_assemblage(&from)?)?;
            let b = PureAssemblage::from_assemblage(&io::load_assemblage(&to)?)?;
            let v = conversions::can_convert(&a, &b)?;
            let mut report = json!({
                "convertible": v.convertible,
                "reason": v.reason,
                "source_profile": v.source_profile.values(),
                "target_profile": v.target_profile.values(),
                "witness_residual": v.witness_residual,
            });
            if let (Some(path), Some(w)) = (&emit_witness, &v.witness) {
                io::write_file(path, &io::snio_to_json(w))?;
                report["witness_file"] = json!(path);
            }
            print(&report);
            Ok(if v.convertible { 0 } else { EXIT_FAIL })
        }
        Command::Gen(args) => generate(&args),
        Command::BitSearch { candidate, thetas, restarts, iters, seed } => {
            let ass = io::load_assemblage(&candidate)?;
            let opts = BitSearchOptions { restarts, iters, seed, ..Default::default() };
            let entries = conversions::steering_bit_search(&ass, &thetas, &opts)?;
            print(&json!({ "exploratory": true, "entries": entries }));
            Ok(0)
        }
        Command::Suite(args) => run_suites(&args),
    }
}

fn inspect(file: &Path) -> steering_core::Result<u8> {
    let text = io::read_file(file)?;
    let raw: Value = serde_json::from_str(&text)?;
    let report = if raw.get("members").is_some() {
        let ass = io::assemblage_from_json(&text)?;
        let mut min_eig = f64::INFINITY;
        for m in ass.members() {
            min_eig = min_eig.min(m.min_eigenvalue()?);
        }
        let dists: Vec<Vec<f64>> = (0..ass.s()).map(|x| ass.output_distribution(x)).collect();
        json!({
            "type": "assemblage",
            "r": ass.r(), "s": ass.s(), "d": ass.d(),
            "trace": ass.trace(),
            "signaling_residual": ass.signaling_residual().2,
            "min_member_eigenvalue": min_eig,
            "output_distributions": dists,
        })
    } else if raw.get("kraus").is_some() {
        let map = io::snio_from_json(&text)?;
        let diag = map.validate();
        let w = map.wiring();
        json!({
            "type": "snio",
            "branches": map.n_branches(),
            "d_in": map.kraus().d_in(), "d_out": map.kraus().d_out(),
            "s": w.s(), "r": w.r(), "sf": w.s_f(), "rf": w.r_f(),
            "deterministic": diag.deterministic,
            "deficiency": diag.deficiency,
            "p_x_residual": diag.p_x_residual,
            "p_af_residual": diag.p_af_residual,
            "valid": diag.valid,
        })
    } else if raw.get("lambda").is_some() {
        let model = io::lhs_model_from_json(&text)?;
        json!({
            "type": "lhs-model",
            "r": model.r(), "s": model.s(), "d": model.d(),
            "components": model.components().len(),
        })
    } else if raw.get("effects").is_some() {
        let st = io::strategy_from_json(&text)?;
        json!({
            "type": "strategy",
            "outcomes": st.n_gamma(), "d_in": st.d_in(), "d_out": st.d_out(), "s": st.s(),
            "completeness_residual": st.completeness_residual(),
        })
    } else {
        return Err(SteeringError::Format(format!("{} is not a recognized steering file", file.display())));
    };
    print(&report);
    Ok(0)
}

fn witness_json(w: &DecompositionWitness) -> Value {
    json!({
        "format": io::FORMAT_VERSION,
        "kind": w.kind,
        "nu": w.nu,
        "steerable_part": parsed(&io::assemblage_to_json(&w.steerable_part)),
        "lhs_part": parsed(&io::assemblage_to_json(&w.lhs_part)),
    })
}

fn measure(args: &MeasureArgs) -> steering_core::Result<u8> {
    let ass = io::load_assemblage(&args.file)?;
    let none = !(args.weight || args.robustness || args.rel_entropy);
    let witness_path = |name: &str| {
        args.witness_prefix.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(format!(".{name}.json"));
            PathBuf::from(s)
        })
    };
    let mut report = serde_json::Map::new();
    for (name, on, f) in [
        ("weight", args.weight || none, steerable_weight as fn(&_) -> _),
        ("robustness", args.robustness || none, robustness),
    ] {
        if !on {
            continue;
        }
        let (value, witness) = f(&ass)?;
        let mut entry = json!({ "value": value });
        if let Some(path) = witness_path(name) {
            io::write_file(&path, &io::to_canonical(&witness_json(&witness)))?;
            entry["witness_file"] = json!(path);
        }
        report.insert(name.into(), entry);
    }
    if args.rel_entropy {
        let opts = RelEntropyOptions { n_restarts: args.restarts, seed: args.seed, ..Default::default() };
        let est = relative_entropy_of_steering(&ass, &opts)?;
        let mut entry = json!({
            "value": est.heuristic_value,
            "heuristic": est.heuristic_value,
            "lower_bound": est.lower_bound,
            "status": est.status,
        });
        if let Some(path) = witness_path("rel-entropy") {
            io::write_file(&path, &io::strategy_to_json(&est.strategy))?;
            entry["witness_file"] = json!(path);
        }
        report.insert("rel_entropy".into(), entry);
    }
    print(&Value::Object(report));
    Ok(0)
}

fn generate(args: &GenArgs) -> steering_core::Result<u8> {
    let kind = match (&args.kind, args.theta) {
        (Some(k), _) => k.parse::<FixtureKind>()?,
        (None, Some(_)) => FixtureKind::Theta,
        (None, None) => return Err(SteeringError::Precondition("gen needs --kind or --theta".into())),
    };
    if kind == FixtureKind::Theta && args.theta.is_none() {
        return Err(SteeringError::Precondition("--kind theta needs --theta".into()));
    }
    let params = FixtureParams { theta: args.theta.unwrap_or_default(), r: args.r, s: args.s, d: args.d };
    let ass = suite::gen_fixture(kind, &params, args.seed)?;
    io::write_file(&args.out, &io::assemblage_to_json(&ass))?;
    Ok(0)
}

fn run_suites(args: &SuiteArgs) -> steering_core::Result<u8> {
    if let Some(path) = &args.replay {
        let dump: FailureDump = io::read_json(path)?;
        let trial = suite::replay(&dump)?;
        let code = if trial.pass { 0 } else if trial.error.is_some() { EXIT_SOLVER } else { EXIT_FAIL };
        print(&json!({ "suite": dump.suite, "reproduced": !trial.pass, "trial": trial }));
        return Ok(code);
    }
    let mut config: SuiteConfig = match &args.config {
        Some(path) => io::read_json(path)?,
        None => SuiteConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.trials.is_some() {
        config.trials = args.trials;
    }
    if !args.only.is_empty() {
        config.suites = args.only.iter().map(|s| s.parse::<SuiteKind>()).collect::<steering_core::Result<_>>()?;
    }
    if args.sequential {
        config.mode = steering_core::par::ExecMode::Sequential;
    }
    let report = suite::run_suite(&config)?;
    for outcome in &report.suites {
        eprintln!(
            "{:<26} {}/{} passed{}",
            outcome.suite.name(),
            outcome.passed,
            outcome.instances,
            if outcome.errors > 0 { format!(", {} errors", outcome.errors) } else { String::new() }
        );
    }
    if let Some(dir) = &args.dump_dir {
        std::fs::create_dir_all(dir)?;
        for outcome in &report.suites {
            for f in &outcome.failures {
                let path = dir.join(format!("{}-{}.json", f.suite.name(), f.trial.index));
                io::write_file(&path, &io::to_canonical(f))?;
            }
        }
    }
    let text = io::to_canonical(&report);
    match &args.report {
        Some(path) => io::write_file(path, &text)?,
        None => print!("{text}"),
    }
    Ok(if report.has_errors() {
        EXIT_SOLVER
    } else if report.passed {
        0
    } else {
        EXIT_FAIL
    })
}
