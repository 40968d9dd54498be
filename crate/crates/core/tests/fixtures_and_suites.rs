use std::path::PathBuf;

use steering_core::io;
use steering_core::lhs::is_lhs;
use steering_core::monotones::{robustness, steerable_weight};
use steering_core::suite::{gen_fixture, replay, run_one, run_suite, FailureDump, FixtureKind, FixtureParams, SuiteConfig, SuiteKind};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[test]
fn singlet_fixture_is_byte_stable() {
    let ass = gen_fixture(FixtureKind::SingletXz, &FixtureParams::default(), 0).unwrap();
    let on_disk = io::read_file(&fixtures().join("singlet_xz.json")).unwrap();
    assert_eq!(io::assemblage_to_json(&ass), on_disk);
}

#[test]
fn steerable_fixtures_regenerate_from_their_seeds() {
    for seed in 1..=20u64 {
        let ass = gen_fixture(FixtureKind::RandomSteerable, &FixtureParams::default(), seed).unwrap();
        let on_disk = io::read_file(&fixtures().join(format!("steerable_{seed:02}.json"))).unwrap();
        assert_eq!(io::assemblage_to_json(&ass), on_disk, "seed {seed}");
    }
}

#[test]
fn golden_values_match() {
    let golden = io::golden_from_json(&io::read_file(&fixtures().join("golden.json")).unwrap()).unwrap();
    assert_eq!(golden.entries.len(), 21);
    assert_eq!(golden.provenance.script, "oracle/reference_sdp.py");
    for e in &golden.entries {
        let ass = io::load_assemblage(&fixtures().join(&e.fixture)).unwrap();
        let w = steerable_weight(&ass).unwrap().0;
        let r = robustness(&ass).unwrap().0;
        assert!((w - e.steerable_weight).abs() <= 1e-6, "{}: weight {w} vs {}", e.fixture, e.steerable_weight);
        assert!((r - e.robustness).abs() <= 1e-6, "{}: robustness {r} vs {}", e.fixture, e.robustness);
    }
}

#[test]
fn random_lhs_seed_7_is_a_member() {
    let ass = gen_fixture(FixtureKind::RandomLhs, &FixtureParams::default(), 7).unwrap();
    assert!(is_lhs(&ass, 1e-6).unwrap().is_member);
}

#[test]
fn same_seed_same_report() {
    let config = SuiteConfig {
        seed: 42,
        trials: Some(4),
        suites: vec![SuiteKind::LhsZero, SuiteKind::Convexity, SuiteKind::Decomposition],
        ..Default::default()
    };
    let a = io::to_canonical(&run_suite(&config).unwrap());
    let b = io::to_canonical(&run_suite(&config).unwrap());
    assert_eq!(a, b);
    let other = io::to_canonical(&run_suite(&SuiteConfig { seed: 43, ..config }).unwrap());
    assert_ne!(a, other);
}

#[test]
fn dumps_replay_from_disk() {
    let mut config = SuiteConfig { trials: Some(3), suites: vec![SuiteKind::Decomposition], ..Default::default() };
    config.tolerances.decomposition = -1.0;
    let outcome = run_one(SuiteKind::Decomposition, &config).unwrap();
    assert_eq!(outcome.failures.len(), 3);
    let dir = tempfile::tempdir().unwrap();
    for f in &outcome.failures {
        let path = dir.path().join(format!("{}.json", f.trial.index));
        io::write_file(&path, &io::to_canonical(f)).unwrap();
        let back: FailureDump = io::read_json(&path).unwrap();
        let again = replay(&back).unwrap();
        assert!(!again.pass);
        assert_eq!(again.instance_seed, f.trial.instance_seed);
        assert_eq!(again.inputs, f.trial.inputs);
    }
}

#[test]
fn partial_config_files_fill_defaults() {
    let config: SuiteConfig = serde_json::from_str(r#"{"seed": 5, "suites": ["sdp"], "tolerances": {"lp": 1e-8}}"#).unwrap();
    assert_eq!(config.seed, 5);
    assert_eq!(config.suites, vec![SuiteKind::Sdp]);
    assert_eq!(config.tolerances.lp, 1e-8);
    assert_eq!(config.tolerances.witness, 1e-8);
    assert_eq!(config.fixtures, 20);
}
