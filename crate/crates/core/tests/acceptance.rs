//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use steering_core::io;
use steering_core::monotones::{robustness, steerable_weight};
use steering_core::suite::{run_one, SuiteConfig, SuiteKind, SuiteOutcome};

struct Line {
    name: &'static str,
    pass: bool,
    summary: String,
}

fn outcome_summary(o: &SuiteOutcome) -> String {
    let worst: Vec<String> = o.worst.iter().map(|(k, v)| format!("{k}={v:.2e}")).collect();
    let mut s = format!("{}/{} instances", o.passed, o.instances);
    if o.errors > 0 {
        s.push_str(&format!(", {} errors", o.errors));
    }
    if !worst.is_empty() {
        s.push_str(&format!(" [{}]", worst.join(", ")));
    }
    if let Some(f) = o.failures.first() {
        s.push_str(&format!(" first failure #{}: {}{}", f.trial.index, f.trial.detail, f.trial.error.as_deref().unwrap_or("")));
    }
    s
}

fn suites(name: &'static str, kinds: &[SuiteKind], limit: Duration) -> Line {
    let config = SuiteConfig::default();
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for &kind in kinds {
        match run_one(kind, &config) {
            Ok(o) => {
                pass &= o.all_passed() && o.instances > 0;
                parts.push(format!("{kind}: {}", outcome_summary(&o)));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{kind}: {e}"));
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed > limit {
        pass = false;
    }
    parts.push(format!("{:.1}s of {}s", elapsed.as_secs_f64(), limit.as_secs()));
    Line { name, pass, summary: parts.join("; ") }
}

fn oracle() -> Line {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let run = || -> steering_core::Result<(bool, String)> {
        let golden = io::golden_from_json(&io::read_file(&dir.join("golden.json"))?)?;
        let mut worst = 0.0_f64;
        for e in &golden.entries {
            let ass = io::load_assemblage(&dir.join(&e.fixture))?;
            worst = worst.max((steerable_weight(&ass)?.0 - e.steerable_weight).abs());
            worst = worst.max((robustness(&ass)?.0 - e.robustness).abs());
        }
        let n = golden.entries.len();
        Ok((worst <= 1e-6 && n == 21, format!("{n} fixtures, max deviation {worst:.2e} (limit 1e-6)")))
    };
    match run() {
        Ok((pass, summary)) => Line { name: "oracle agreement", pass, summary },
        Err(e) => Line { name: "oracle agreement", pass: false, summary: e.to_string() },
    }
}

fn main() -> ExitCode {
    let min = |m: u64| Duration::from_secs(60 * m);
    let criteria: Vec<Box<dyn Fn() -> Line>> = vec![
        Box::new(move || suites("unsteerable inputs score zero", &[SuiteKind::LhsZero], min(3))),
        Box::new(move || suites("SNIO closure of LHS", &[SuiteKind::LhsClosure], min(2))),
        Box::new(move || suites("weight/robustness monotonicity", &[SuiteKind::Monotonicity], min(10))),
        Box::new(move || suites("weight/robustness convexity", &[SuiteKind::Convexity], min(10))),
        Box::new(move || {
            suites(
                "relative entropy monotonicity and convexity",
                &[SuiteKind::RelEntropyMonotonicity, SuiteKind::RelEntropyConvexity],
                min(10),
            )
        }),
        Box::new(oracle),
        Box::new(move || suites("pure qubit conversions", &[SuiteKind::Conversions], min(1))),
        Box::new(move || suites("relative entropy decomposition", &[SuiteKind::Decomposition], min(2))),
        Box::new(move || suites("SDP solver self-tests", &[SuiteKind::Sdp], min(2))),
    ];
    let mut failed = 0;
    for (i, criterion) in criteria.iter().enumerate() {
        let line = criterion();
        if !line.pass {
            failed += 1;
        }
        println!("{} {}. {}: {}", if line.pass { "PASS" } else { "FAIL" }, i + 1, line.name, line.summary);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
