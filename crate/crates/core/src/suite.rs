//! Seeded property suites, fixture generation and failure replay.
//!
//! Every instance is a pure function of `(config seed, suite, index)`, so a
//! report is reproducible and any failing instance can be re-run alone from
//! its dump.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, FRAC_PI_8, TAU};
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::assemblage::{singlet_xz, Assemblage, PureAssemblage};
use crate::conversions::{self, ConversionReason, PlanePureAssemblage, PROFILE_TOL};
use crate::error::{Result, SteeringError};
use crate::io;
use crate::lhs::{is_lhs, LhsModel, DEFAULT_MEMBERSHIP_TOL};
use crate::linalg::{classical_relative_entropy, quantum_relative_entropy, Divergence, HermitianMatrix, ProbTable};
use crate::monotones::{
    assemblage_relative_entropy, minimize_over_lhs, monotonicity_check, relative_entropy_of_steering,
    robustness, steerable_weight, RelEntropyOptions, StrategyParams,
};
use crate::par::{map_indexed, ExecMode};
use crate::random::{self, derive_seed, rng_from_seed, SteeringRng};
use crate::sdp::{self, Relation, Sense, SdpProblem, SolveOptions, SolveStatus, Term};
use crate::snio::{random_snio, KrausSet, RandomSnioSpec, SnioMap, Wiring};

pub const STEERABLE_MIN_WEIGHT: f64 = 0.05;
pub const STEERABLE_RETRY_CAP: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    SingletXz,
    Theta,
    RandomLhs,
    RandomSteerable,
}

impl FromStr for FixtureKind {
    type Err = SteeringError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "singlet-xz" => Ok(Self::SingletXz),
            "theta" => Ok(Self::Theta),
            "random-lhs" => Ok(Self::RandomLhs),
            "random-steerable" => Ok(Self::RandomSteerable),
            _ => Err(SteeringError::Precondition(format!("unknown fixture kind '{s}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FixtureParams {
    pub theta: f64,
    pub r: usize,
    pub s: usize,
    pub d: usize,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self { theta: FRAC_PI_4, r: 2, s: 2, d: 2 }
    }
}

pub fn gen_fixture(kind: FixtureKind, params: &FixtureParams, seed: u64) -> Result<Assemblage> {
    let FixtureParams { theta, r, s, d } = *params;
    match kind {
        FixtureKind::SingletXz => Ok(singlet_xz()),
        FixtureKind::Theta => Ok(conversions::pure_orthogonal_from_angles(theta)?.assemblage().clone()),
        FixtureKind::RandomLhs => {
            let mut rng = rng_from_seed(derive_seed(seed, "fixture/random-lhs", 0));
            LhsModel::random(r, s, d, &mut rng).assemble()
        }
        FixtureKind::RandomSteerable => random_steerable(r, s, d, seed),
    }
}

/// Noisy random pure state measured in random projective bases of
/// dimension `r` on Alice's side; regenerated until the steerable weight
/// exceeds [`STEERABLE_MIN_WEIGHT`].
pub fn random_steerable(r: usize, s: usize, d: usize, seed: u64) -> Result<Assemblage> {
    for attempt in 0..STEERABLE_RETRY_CAP {
        let mut rng = rng_from_seed(derive_seed(seed, "fixture/random-steerable", attempt as u64));
        let ass = noisy_measured_state(r, s, d, 0.6, 0.98, &mut rng)?;
        if steerable_weight(&ass)?.0 > STEERABLE_MIN_WEIGHT {
            return Ok(ass);
        }
    }
    Err(SteeringError::Precondition(format!(
        "no steerable sample after {STEERABLE_RETRY_CAP} attempts (seed {seed})"
    )))
}

fn noisy_measured_state(r: usize, s: usize, d: usize, vmin: f64, vmax: f64, rng: &mut SteeringRng) -> Result<Assemblage> {
    let psi = random::haar_state(r * d, rng);
    let v = rng.random_range(vmin..vmax);
    let rho = &HermitianMatrix::projector(&psi).scaled(v) + &HermitianMatrix::maximally_mixed(r * d).scaled(1.0 - v);
    let povms = (0..s)
        .map(|_| {
            let u = random::haar_unitary(r, rng);
            (0..r).map(|a| HermitianMatrix::projector(&u.column(a).into_owned())).collect()
        })
        .collect::<Vec<Vec<_>>>();
    Assemblage::from_state_and_measurements(&rho, &povms)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteKind {
    /// Unsteerable inputs have zero weight, robustness and relative entropy.
    LhsZero,
    /// SNIO images of unsteerable inputs stay unsteerable.
    LhsClosure,
    /// Weight and robustness do not increase under deterministic SNIOs.
    Monotonicity,
    /// Weight and robustness are convex.
    Convexity,
    RelEntropyMonotonicity,
    RelEntropyConvexity,
    /// Relative-entropy decomposition identity and edge cases.
    Decomposition,
    /// Pure qubit conversion verdicts and witnesses.
    Conversions,
    /// Solver self-tests against LP vertex enumeration.
    Sdp,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 9] = [
        SuiteKind::LhsZero,
        SuiteKind::LhsClosure,
        SuiteKind::Monotonicity,
        SuiteKind::Convexity,
        SuiteKind::RelEntropyMonotonicity,
        SuiteKind::RelEntropyConvexity,
        SuiteKind::Decomposition,
        SuiteKind::Conversions,
        SuiteKind::Sdp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::LhsZero => "lhs-zero",
            SuiteKind::LhsClosure => "lhs-closure",
            SuiteKind::Monotonicity => "monotonicity",
            SuiteKind::Convexity => "convexity",
            SuiteKind::RelEntropyMonotonicity => "rel-entropy-monotonicity",
            SuiteKind::RelEntropyConvexity => "rel-entropy-convexity",
            SuiteKind::Decomposition => "decomposition",
            SuiteKind::Conversions => "conversions",
            SuiteKind::Sdp => "sdp",
        }
    }

    pub fn default_trials(self) -> usize {
        match self {
            SuiteKind::LhsZero => 500,
            SuiteKind::LhsClosure | SuiteKind::Monotonicity | SuiteKind::Convexity | SuiteKind::Decomposition => 200,
            SuiteKind::RelEntropyMonotonicity | SuiteKind::RelEntropyConvexity => 50,
            SuiteKind::Conversions => CONVERSION_INSTANCES,
            SuiteKind::Sdp => 100,
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SuiteKind {
    type Err = SteeringError;

    fn from_str(s: &str) -> Result<Self> {
        SuiteKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SteeringError::Precondition(format!("unknown suite '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Slack for weight and robustness checks.
    pub sdp_measure: f64,
    pub lhs_margin: f64,
    /// Largest relative-entropy lower bound accepted on unsteerable inputs.
    pub rel_entropy_zero: f64,
    /// Optimization slack for relative-entropy monotonicity and convexity.
    pub rel_entropy_slack: f64,
    /// Slack for inequalities between certified bounds.
    pub certified: f64,
    pub joint_convexity: f64,
    pub decomposition: f64,
    pub witness: f64,
    pub lp: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            sdp_measure: 1e-6,
            lhs_margin: DEFAULT_MEMBERSHIP_TOL,
            rel_entropy_zero: 1e-5,
            rel_entropy_slack: 5e-3,
            certified: 1e-6,
            joint_convexity: 1e-8,
            decomposition: 1e-8,
            witness: 1e-8,
            lp: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Overrides every suite's default trial count.
    pub trials: Option<usize>,
    pub tolerances: Tolerances,
    pub suites: Vec<SuiteKind>,
    /// Steerable fixtures each monotonicity SNIO is applied to.
    pub fixtures: usize,
    #[serde(skip)]
    pub mode: ExecMode,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            trials: None,
            tolerances: Tolerances::default(),
            suites: SuiteKind::ALL.to_vec(),
            fixtures: 20,
            mode: ExecMode::default(),
        }
    }
}

impl SuiteConfig {
    pub fn trials_for(&self, kind: SuiteKind) -> usize {
        self.trials.unwrap_or_else(|| kind.default_trials())
    }

    /// Number of instances, which exceeds the trial count where one trial
    /// covers several fixtures or fixed cases.
    pub fn instances_for(&self, kind: SuiteKind) -> usize {
        let n = self.trials_for(kind);
        match kind {
            SuiteKind::Monotonicity => n * self.fixtures,
            SuiteKind::Conversions => n.min(CONVERSION_INSTANCES),
            SuiteKind::Sdp if n > 0 => n + SDP_FIXED_CASES,
            _ => n,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub instance_seed: u64,
    pub pass: bool,
    /// Set when the trial could not be evaluated (solver failure and the like).
    pub error: Option<String>,
    pub metrics: BTreeMap<String, f64>,
    pub detail: String,
    pub inputs: Value,
}

/// A failing instance with everything needed to re-run it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FailureDump {
    pub format: u32,
    pub suite: SuiteKind,
    pub config_seed: u64,
    pub fixtures: usize,
    pub tolerances: Tolerances,
    pub trial: TrialResult,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub suite: SuiteKind,
    pub instances: usize,
    pub passed: usize,
    pub errors: usize,
    /// Largest value of each metric over all instances.
    pub worst: BTreeMap<String, f64>,
    pub failures: Vec<FailureDump>,
}

impl SuiteOutcome {
    pub fn all_passed(&self) -> bool {
        self.passed == self.instances
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub format: u32,
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteOutcome>,
}

impl SuiteReport {
    pub fn has_errors(&self) -> bool {
        self.suites.iter().any(|s| s.errors > 0)
    }
}

struct Context {
    fixtures: Vec<Assemblage>,
}

impl Context {
    fn build(kind: SuiteKind, config: &SuiteConfig) -> Result<Self> {
        let fixtures = if kind == SuiteKind::Monotonicity && config.trials_for(kind) > 0 {
            let list = map_indexed(config.fixtures, config.mode, |k| {
                random_steerable(2, 2, 2, derive_seed(config.seed, "monotonicity/fixture", k as u64))
            });
            list.into_iter().collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Self { fixtures })
    }
}

pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    let mut suites = Vec::new();
    for &kind in &config.suites {
        suites.push(run_one(kind, config)?);
    }
    let passed = suites.iter().all(SuiteOutcome::all_passed);
    Ok(SuiteReport { format: io::FORMAT_VERSION, seed: config.seed, passed, suites })
}

pub fn run_one(kind: SuiteKind, config: &SuiteConfig) -> Result<SuiteOutcome> {
    let ctx = Context::build(kind, config)?;
    let n = config.instances_for(kind);
    let results = map_indexed(n, config.mode, |i| evaluate(kind, config, &ctx, i));
    let mut outcome =
        SuiteOutcome { suite: kind, instances: n, passed: 0, errors: 0, worst: BTreeMap::new(), failures: Vec::new() };
    for res in results {
        for (k, v) in &res.metrics {
            let slot = outcome.worst.entry(k.clone()).or_insert(f64::NEG_INFINITY);
            if *v > *slot || v.is_nan() {
                *slot = *v;
            }
        }
        if res.error.is_some() {
            outcome.errors += 1;
        }
        if res.pass {
            outcome.passed += 1;
        } else {
            outcome.failures.push(FailureDump {
                format: io::FORMAT_VERSION,
                suite: kind,
                config_seed: config.seed,
                fixtures: config.fixtures,
                tolerances: config.tolerances.clone(),
                trial: res,
            });
        }
    }
    outcome.failures.sort_by_key(|f| f.trial.instance_seed);
    Ok(outcome)
}

/// Re-runs the instance recorded in `dump`.
pub fn replay(dump: &FailureDump) -> Result<TrialResult> {
    let config = SuiteConfig {
        seed: dump.config_seed,
        trials: None,
        tolerances: dump.tolerances.clone(),
        suites: vec![dump.suite],
        fixtures: dump.fixtures,
        mode: ExecMode::Sequential,
    };
    let ctx = Context::build(dump.suite, &config)?;
    Ok(evaluate(dump.suite, &config, &ctx, dump.trial.index))
}

fn evaluate(kind: SuiteKind, config: &SuiteConfig, ctx: &Context, index: usize) -> TrialResult {
    let seed = derive_seed(config.seed, kind.name(), index as u64);
    let mut t = Trial { metrics: BTreeMap::new(), notes: Vec::new(), inputs: json!({}), pass: true };
    let tol = &config.tolerances;
    let res = match kind {
        SuiteKind::LhsZero => lhs_zero(&mut t, tol, seed),
        SuiteKind::LhsClosure => lhs_closure(&mut t, tol, seed),
        SuiteKind::Monotonicity => {
            let snio_seed = derive_seed(config.seed, "monotonicity/snio", (index / config.fixtures.max(1)) as u64);
            monotonicity(&mut t, tol, snio_seed, &ctx.fixtures[index % config.fixtures.max(1)])
        }
        SuiteKind::Convexity => convexity(&mut t, tol, seed),
        SuiteKind::RelEntropyMonotonicity => rel_entropy_monotonicity(&mut t, tol, seed),
        SuiteKind::RelEntropyConvexity => rel_entropy_convexity(&mut t, tol, seed, index),
        SuiteKind::Decomposition => decomposition(&mut t, tol, seed),
        SuiteKind::Conversions => conversion_case(&mut t, tol, seed, index),
        SuiteKind::Sdp => sdp_case(&mut t, tol, seed, index),
    };
    let error = res.err().map(|e| e.to_string());
    TrialResult {
        index,
        instance_seed: seed,
        pass: t.pass && error.is_none(),
        error,
        metrics: t.metrics,
        detail: t.notes.join("; "),
        inputs: t.inputs,
    }
}

struct Trial {
    metrics: BTreeMap<String, f64>,
    notes: Vec<String>,
    inputs: Value,
    pass: bool,
}

impl Trial {
    /// Records `value` and fails the trial when it exceeds `limit`.
    fn at_most(&mut self, name: &str, value: f64, limit: f64) {
        self.metrics.insert(name.to_string(), value);
        if !(value <= limit) {
            self.pass = false;
            self.notes.push(format!("{name} = {value:.3e} exceeds {limit:.1e}"));
        }
    }

    fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.pass = false;
            self.notes.push(what.into());
        }
    }

    fn input(&mut self, key: &str, json_text: String) {
        let v: Value = serde_json::from_str(&json_text).expect("codec output is valid JSON");
        self.inputs[key] = v;
    }
}

fn rel_opts() -> RelEntropyOptions {
    RelEntropyOptions { mode: ExecMode::Sequential, ..Default::default() }
}

fn lhs_zero(t: &mut Trial, tol: &Tolerances, seed: u64) -> Result<()> {
    let mut rng = rng_from_seed(seed);
    let model = LhsModel::random(2, 2, 2, &mut rng);
    t.input("model", io::lhs_model_to_json(&model));
    let ass = model.assemble()?;
    t.at_most("weight", steerable_weight(&ass)?.0, tol.sdp_measure);
    t.at_most("robustness", robustness(&ass)?.0, tol.sdp_measure);
    let est = relative_entropy_of_steering(&ass, &rel_opts())?;
    t.at_most("rel_entropy_lower_bound", est.lower_bound, tol.rel_entropy_zero);
    t.metrics.insert("rel_entropy_heuristic".into(), est.heuristic_value);
    Ok(())
}

fn lhs_closure(t: &mut Trial, tol: &Tolerances, seed: u64) -> Result<()> {
    let mut rng = rng_from_seed(seed);
    let model = LhsModel::random(2, 2, 2, &mut rng);
    let (r_f, s_f) = [(2, 2), (3, 2), (2, 3)][rng.random_range(0..3)];
    let spec = RandomSnioSpec {
        r: 2,
        s: 2,
        d: 2,
        r_f,
        s_f,
        d_f: rng.random_range(2..=3),
        n_branches: rng.random_range(1..=3),
        deterministic: rng.random_bool(0.5),
        concentration: if rng.random_bool(0.5) { 0.3 } else { 1.0 },
    };
    let snio = random_snio(&spec, &mut rng)?;
    t.input("model", io::lhs_model_to_json(&model));
    t.input("snio", io::snio_to_json(&snio));
    let ass = model.assemble()?;
    let image = snio.apply(&ass)?;
    t.at_most("image_margin", is_lhs(&image, tol.lhs_margin)?.margin, tol.lhs_margin);
    let mut worst = 0.0_f64;
    for omega in 0..snio.n_branches() {
        let branch = snio.apply_branch(omega, &ass)?;
        if branch.trace() > 1e-9 {
            worst = worst.max(is_lhs(&branch.scaled(1.0 / branch.trace()), tol.lhs_margin)?.margin);
        }
    }
    t.at_most("branch_margin", worst, tol.lhs_margin);
    Ok(())
}

/// Every tenth SNIO is reversible (a local unitary with relabelled inputs
/// and outputs), where the measures must stay exactly put.
fn random_deterministic_snio(seed: u64, max_branches: usize) -> Result<SnioMap> {
    let mut rng = rng_from_seed(seed);
    if rng.random_range(0..10) == 0 {
        return reversible_snio(&mut rng);
    }
    let mut spec = RandomSnioSpec::square(2, 2, 2, rng.random_range(1..=max_branches));
    spec.concentration = if rng.random_bool(0.5) { 0.3 } else { 1.0 };
    random_snio(&spec, &mut rng)
}

fn reversible_snio(rng: &mut SteeringRng) -> Result<SnioMap> {
    let u = random::haar_unitary(2, rng);
    let swap_x = rng.random_bool(0.5);
    let swap_a = [rng.random_bool(0.5), rng.random_bool(0.5)];
    let wiring = Wiring::from_fns(
        2,
        2,
        2,
        2,
        1,
        |x, xf, _| ((x == xf) != swap_x) as u8 as f64,
        |af, a, x, _, _| ((af == a) != swap_a[x]) as u8 as f64,
    );
    SnioMap::new(KrausSet::new(vec![u])?, wiring)
}

fn monotonicity(t: &mut Trial, tol: &Tolerances, snio_seed: u64, fixture: &Assemblage) -> Result<()> {
    let snio = random_deterministic_snio(snio_seed, 3)?;
    t.input("assemblage", io::assemblage_to_json(fixture));
    t.input("snio", io::snio_to_json(&snio));
    let weight = |a: &Assemblage| steerable_weight(a).map(|m| m.0);
    let rob = |a: &Assemblage| robustness(a).map(|m| m.0);
    for (name, rep) in [
        ("weight", monotonicity_check(weight, &snio, fixture, tol.sdp_measure)?),
        ("robustness", monotonicity_check(rob, &snio, fixture, tol.sdp_measure)?),
    ] {
        t.at_most(&format!("{name}_average_increase"), rep.avg_after - rep.before, tol.sdp_measure);
        let branch_max = rep.branch_values.iter().flatten().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        t.at_most(&format!("{name}_branch_increase"), branch_max - rep.before, tol.sdp_measure);
    }
    Ok(())
}

fn convexity(t: &mut Trial, tol: &Tolerances, seed: u64) -> Result<()> {
    let a1 = random_steerable(2, 2, 2, derive_seed(seed, "first", 0))?;
    let a2 = random_steerable(2, 2, 2, derive_seed(seed, "second", 0))?;
    t.input("first", io::assemblage_to_json(&a1));
    t.input("second", io::assemblage_to_json(&a2));
    let (w1, w2) = (steerable_weight(&a1)?.0, steerable_weight(&a2)?.0);
    let (r1, r2) = (robustness(&a1)?.0, robustness(&a2)?.0);
    let mut worst_w = f64::NEG_INFINITY;
    let mut worst_r = f64::NEG_INFINITY;
    for mu in [0.25, 0.5, 0.75] {
        let mix = Assemblage::mix(&a1, &a2, mu)?;
        worst_w = worst_w.max(steerable_weight(&mix)?.0 - (mu * w1 + (1.0 - mu) * w2));
        worst_r = worst_r.max(robustness(&mix)?.0 - (mu * r1 + (1.0 - mu) * r2));
    }
    t.at_most("weight_excess", worst_w, tol.sdp_measure);
    t.at_most("robustness_excess", worst_r, tol.sdp_measure);
    Ok(())
}

fn finite(d: Divergence) -> f64 {
    d.to_f64()
}

fn rel_entropy_monotonicity(t: &mut Trial, tol: &Tolerances, seed: u64) -> Result<()> {
    let rho = random_steerable(2, 2, 2, derive_seed(seed, "input", 0))?;
    let mut rng = rng_from_seed(derive_seed(seed, "snio", 0));
    let mut spec = RandomSnioSpec::square(2, 2, 2, 2);
    spec.concentration = 0.5;
    let snio = random_snio(&spec, &mut rng)?;
    t.input("assemblage", io::assemblage_to_json(&rho));
    t.input("snio", io::snio_to_json(&snio));
    let opts = rel_opts();
    let before = relative_entropy_of_steering(&rho, &opts)?;

    let mut avg_heuristic = 0.0;
    let mut avg_lower = 0.0;
    let mut branch_strategies = Vec::new();
    let mut probs = Vec::new();
    let mut branches = Vec::new();
    for omega in 0..snio.n_branches() {
        let branch = snio.apply_branch(omega, &rho)?;
        let p = branch.trace();
        probs.push(p);
        if p < 1e-9 {
            branch_strategies.push(StrategyParams::trivial(2, 2, 0));
            branches.push(None);
            continue;
        }
        let normalized = branch.scaled(1.0 / p);
        let est = relative_entropy_of_steering(&normalized, &opts)?;
        avg_heuristic += p * est.heuristic_value;
        avg_lower += p * est.lower_bound;
        branch_strategies.push(est.strategy);
        branches.push(Some(normalized));
    }
    t.at_most("average_increase", avg_heuristic - before.heuristic_value, tol.rel_entropy_slack);

    // Certified chain through the transported strategy.
    let n_gamma = branch_strategies.iter().map(StrategyParams::n_gamma).max().unwrap_or(1);
    let padded: Vec<StrategyParams> = branch_strategies.iter().map(|s| s.padded(n_gamma)).collect();
    let transported = StrategyParams::transported(&snio, &padded)?;
    let (primal_t, _, omegas) = minimize_over_lhs(&rho, &transported, &opts)?;
    t.at_most("certified_chain_excess", avg_lower - primal_t, tol.certified);

    // Branch-wise comparison at the optimal LHS point for the transported strategy.
    let strategies = crate::lhs::enumerate_deterministic_strategies(2, 2)?;
    let sigma = crate::lhs::assemble_decomposition(2, 2, 2, &strategies, &omegas)?;
    let whole = finite(assemblage_relative_entropy(&rho, &sigma, &transported)?);
    let mut split = 0.0;
    for (omega, branch) in branches.iter().enumerate() {
        let Some(rho_w) = branch else { continue };
        let sigma_w = snio.apply_branch(omega, &sigma)?;
        let q = sigma_w.trace();
        if q < 1e-12 {
            split = f64::INFINITY;
            break;
        }
        split += probs[omega] * finite(assemblage_relative_entropy(rho_w, &sigma_w.scaled(1.0 / q), &padded[omega])?);
    }
    if whole.is_finite() {
        t.at_most("transport_excess", split - whole, tol.certified);
    }
    Ok(())
}

fn rel_entropy_convexity(t: &mut Trial, tol: &Tolerances, seed: u64, index: usize) -> Result<()> {
    let a1 = random_steerable(2, 2, 2, derive_seed(seed, "first", 0))?;
    let a2 = random_steerable(2, 2, 2, derive_seed(seed, "second", 0))?;
    let mu = [0.25, 0.5, 0.75][index % 3];
    t.input("first", io::assemblage_to_json(&a1));
    t.input("second", io::assemblage_to_json(&a2));
    t.inputs["mu"] = json!(mu);
    let opts = rel_opts();
    let mix = Assemblage::mix(&a1, &a2, mu)?;
    let e1 = relative_entropy_of_steering(&a1, &opts)?;
    let e2 = relative_entropy_of_steering(&a2, &opts)?;
    let em = relative_entropy_of_steering(&mix, &opts)?;
    t.at_most("heuristic_excess", em.heuristic_value - (mu * e1.heuristic_value + (1.0 - mu) * e2.heuristic_value), tol.rel_entropy_slack);

    // One shared strategy on all three inputs.
    let s = &em.strategy;
    let (p1, _, w1) = minimize_over_lhs(&a1, s, &opts)?;
    let (p2, _, w2) = minimize_over_lhs(&a2, s, &opts)?;
    let (_, lm, _) = minimize_over_lhs(&mix, s, &opts)?;
    t.at_most("certified_excess", lm - (mu * p1 + (1.0 - mu) * p2), tol.certified);

    // Joint convexity of the fixed-strategy quantity at the two LHS points.
    let strategies = crate::lhs::enumerate_deterministic_strategies(2, 2)?;
    let s1 = crate::lhs::assemble_decomposition(2, 2, 2, &strategies, &w1)?;
    let s2 = crate::lhs::assemble_decomposition(2, 2, 2, &strategies, &w2)?;
    let lhs = finite(assemblage_relative_entropy(&mix, &Assemblage::mix(&s1, &s2, mu)?, s)?);
    let rhs = mu * finite(assemblage_relative_entropy(&a1, &s1, s)?)
        + (1.0 - mu) * finite(assemblage_relative_entropy(&a2, &s2, s)?);
    if rhs.is_finite() {
        t.at_most("joint_convexity_excess", lhs - rhs, tol.joint_convexity);
    }
    Ok(())
}

fn distribution(values: Vec<f64>) -> Result<ProbTable> {
    let n = values.len();
    ProbTable::joint(vec![n], values)
}

fn decomposition(t: &mut Trial, tol: &Tolerances, seed: u64) -> Result<()> {
    let mut rng = rng_from_seed(seed);
    let d = rng.random_range(2..=3);
    let make = |rng: &mut SteeringRng| -> Result<Assemblage> {
        let rho = random::random_density(2 * d, rng);
        let povms = (0..2)
            .map(|_| {
                let u = random::haar_unitary(2, rng);
                (0..2).map(|a| HermitianMatrix::projector(&u.column(a).into_owned())).collect()
            })
            .collect::<Vec<Vec<_>>>();
        Assemblage::from_state_and_measurements(&rho, &povms)
    };
    let a1 = make(&mut rng)?;
    let a2 = make(&mut rng)?;
    t.input("first", io::assemblage_to_json(&a1));
    t.input("second", io::assemblage_to_json(&a2));

    let (rep1, rep2) = (a1.quantum_representation(), a2.quantum_representation());
    let mut worst = 0.0_f64;
    for x in 0..2 {
        let whole = finite(quantum_relative_entropy(rep1.block(x), rep2.block(x))?);
        let p = distribution(a1.output_distribution(x))?;
        let q = distribution(a2.output_distribution(x))?;
        let mut parts = finite(classical_relative_entropy(&p, &q)?);
        for a in 0..2 {
            let (Some(s1), Some(s2)) = (a1.normalized_state(a, x), a2.normalized_state(a, x)) else {
                return Err(SteeringError::Internal("member of zero trace in a full-rank sample".into()));
            };
            parts += a1.probability(a, x) * finite(quantum_relative_entropy(&s1, &s2)?);
        }
        worst = worst.max((whole - parts).abs());
    }
    t.at_most("identity_residual", worst, tol.decomposition);

    let state = a1.normalized_state(0, 0).expect("full-rank member");
    t.at_most("self_divergence", finite(quantum_relative_entropy(&state, &state)?).abs(), tol.decomposition);
    let p = distribution(a1.output_distribution(0))?;
    t.at_most("self_kl", finite(classical_relative_entropy(&p, &p)?).abs(), tol.decomposition);

    let top = state.eig()?.eigenvectors.column(d - 1).into_owned();
    let pure = HermitianMatrix::projector(&top);
    let complement = (&HermitianMatrix::identity(d) - &pure).scaled(1.0 / (d as f64 - 1.0));
    t.require(
        !quantum_relative_entropy(&pure, &complement)?.is_finite(),
        "disjoint supports did not give the infinite sentinel",
    );
    let mut point = vec![0.0; 2];
    point[0] = 1.0;
    t.require(
        !classical_relative_entropy(&p, &distribution(point)?)?.is_finite(),
        "KL with a missing outcome did not give the infinite sentinel",
    );
    let mixed = finite(quantum_relative_entropy(&pure, &HermitianMatrix::maximally_mixed(d))?);
    t.at_most("maximally_mixed_residual", (mixed - (d as f64).ln()).abs(), tol.decomposition);
    Ok(())
}

const CONVERSION_THETAS: [f64; 4] = [FRAC_PI_8, FRAC_PI_6, FRAC_PI_4, FRAC_PI_3];
const CONVERSION_INSTANCES: usize = 20;

/// Instances 0..16 are the ordered pairs of [`CONVERSION_THETAS`]; 16..20
/// send each `Ψ^θ` to a random unsteerable pure orthogonal target.
fn conversion_case(t: &mut Trial, tol: &Tolerances, seed: u64, index: usize) -> Result<()> {
    if index < 16 {
        let (i, j) = (index / 4, index % 4);
        let (ti, tj) = (CONVERSION_THETAS[i], CONVERSION_THETAS[j]);
        t.inputs = json!({ "theta_from": ti, "theta_to": tj });
        let from = conversions::pure_orthogonal_from_angles(ti)?;
        let to = conversions::pure_orthogonal_from_angles(tj)?;
        let v = conversions::can_convert(&from, &to)?;
        t.require(v.convertible == (i == j), format!("verdict {} for θ {ti:.4} → {tj:.4}", v.convertible));
        if v.convertible {
            let w = v.witness.as_ref().ok_or_else(|| SteeringError::Internal("positive verdict without witness".into()))?;
            t.at_most("witness_residual", v.witness_residual.unwrap_or(f64::INFINITY), tol.witness);
            let image = PureAssemblage::from_assemblage(&w.apply(from.assemblage())?)?;
            let drift = conversions::overlap_profile(&image)?.max_difference(&v.source_profile);
            t.at_most("overlap_drift", drift, 1e-10);
        } else {
            let gap = (ti.cos() - tj.cos()).abs();
            t.require(
                v.reason == ConversionReason::OverlapMismatch && v.source_profile.max_difference(&v.target_profile) > PROFILE_TOL,
                format!("negative verdict {:?} without an overlap mismatch (|Δcos θ| = {gap:.3e})", v.reason),
            );
        }
    } else {
        let theta = CONVERSION_THETAS[(index - 16) % 4];
        let mut rng = rng_from_seed(seed);
        let beta = rng.random_range(0.0..FRAC_PI_2);
        let alpha = rng.random_range(0.0..TAU);
        let swap = rng.random_bool(0.5);
        let phi = if swap { vec![beta, beta + FRAC_PI_2, beta + FRAC_PI_2, beta] } else { vec![beta, beta + FRAC_PI_2, beta, beta + FRAC_PI_2] };
        let plane = PlanePureAssemblage { r: 2, s: 2, phi, alpha: vec![alpha; 4], weights: vec![0.5; 4] };
        t.inputs = json!({ "theta_from": theta, "target": serde_json::to_value(&plane)? });
        let from = conversions::pure_orthogonal_from_angles(theta)?;
        let v = conversions::can_convert(&from, &plane.to_pure()?)?;
        t.require(v.convertible && v.reason == ConversionReason::TargetLhs, format!("unsteerable target not reached: {:?}", v.reason));
        t.at_most("witness_residual", v.witness_residual.unwrap_or(f64::INFINITY), tol.witness);
    }
    Ok(())
}

const SDP_FIXED_CASES: usize = 3;

fn lp_options() -> SolveOptions {
    SolveOptions { eps: 1e-12, accept: 1e-10, max_iter: 200, record_trace: false }
}

/// Fixed feasible, infeasible and unbounded problems first, then random
/// LPs over scalar blocks compared with vertex enumeration.
fn sdp_case(t: &mut Trial, tol: &Tolerances, seed: u64, index: usize) -> Result<()> {
    match index {
        0 => {
            let mut p = SdpProblem::new(Sense::Maximize);
            let b = p.add_block(0, 2);
            p.set_objective(b, HermitianMatrix::identity(2));
            p.add_constraint(vec![Term::Scaled { block: b, coeff: 1.0 }], Relation::Leq, HermitianMatrix::identity(2));
            let sol = sdp::solve(&p, &SolveOptions::default())?;
            t.require(sol.is_optimal(), format!("cap problem returned {:?}", sol.status));
            t.at_most("cap_objective_error", (sol.objective - 2.0).abs(), tol.lp);
        }
        1 => {
            let mut p = SdpProblem::new(Sense::Minimize);
            let b = p.add_block(0, 2);
            p.add_constraint(vec![Term::Trace { block: b, coeff: 1.0 }], Relation::Eq, HermitianMatrix::diagonal(&[-1.0]));
            let sol = sdp::solve(&p, &SolveOptions::default())?;
            t.require(sol.status == SolveStatus::Infeasible, format!("negative trace returned {:?}", sol.status));
        }
        2 => {
            let mut p = SdpProblem::new(Sense::Maximize);
            let b = p.add_block(0, 2);
            p.set_objective(b, HermitianMatrix::identity(2));
            let sol = sdp::solve(&p, &SolveOptions::default())?;
            t.require(sol.status == SolveStatus::Unbounded, format!("unbounded problem returned {:?}", sol.status));
        }
        _ => {
            let lp = RandomLp::new(seed);
            t.inputs = serde_json::to_value(&lp)?;
            let sol = sdp::solve(&lp.problem(), &lp_options())?;
            t.require(sol.is_optimal(), format!("LP returned {:?}", sol.status));
            let exact = lp.vertex_optimum().ok_or_else(|| SteeringError::Internal("LP has no feasible vertex".into()))?;
            t.at_most("lp_objective_error", (sol.objective - exact).abs(), tol.lp);
        }
    }
    Ok(())
}

/// `min c·x  s.t.  A x = b,  Σ x ≤ cap,  x ≥ 0` over scalar blocks, with
/// `b = A x₀` for a random `x₀ ∈ [0,1]^n`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomLp {
    pub cost: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub cap: f64,
}

impl RandomLp {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let n = rng.random_range(3..=5);
        let m = rng.random_range(1..=2);
        let cost = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let b = a.iter().map(|row| row.iter().zip(&x0).map(|(p, q)| p * q).sum()).collect();
        Self { cost, a, b, cap: n as f64 }
    }

    pub fn problem(&self) -> SdpProblem {
        let n = self.cost.len();
        let mut p = SdpProblem::new(Sense::Minimize);
        for i in 0..n {
            let blk = p.add_block(i, 1);
            p.set_objective(blk, HermitianMatrix::diagonal(&[self.cost[i]]));
        }
        for (row, rhs) in self.a.iter().zip(&self.b) {
            let terms = row.iter().enumerate().map(|(i, &coeff)| Term::Trace { block: i, coeff }).collect();
            p.add_constraint(terms, Relation::Eq, HermitianMatrix::diagonal(&[*rhs]));
        }
        let terms = (0..n).map(|i| Term::Trace { block: i, coeff: 1.0 }).collect();
        p.add_constraint(terms, Relation::Leq, HermitianMatrix::diagonal(&[self.cap]));
        p
    }

    /// Best basic feasible solution of the slack form.
    pub fn vertex_optimum(&self) -> Option<f64> {
        let n = self.cost.len();
        let m = self.a.len() + 1;
        let cols = n + 1;
        let mut full = DMatrix::<f64>::zeros(m, cols);
        for (k, row) in self.a.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                full[(k, i)] = *v;
            }
        }
        for i in 0..cols {
            full[(m - 1, i)] = 1.0;
        }
        let mut rhs = DVector::<f64>::from_vec(self.b.clone());
        rhs = rhs.push(self.cap);
        let mut best: Option<f64> = None;
        for basis in (0..cols).combinations(m) {
            let sub = DMatrix::from_fn(m, m, |i, j| full[(i, basis[j])]);
            let Some(xb) = sub.clone().lu().solve(&rhs) else { continue };
            if xb.iter().any(|v| *v < -1e-12 || !v.is_finite()) {
                continue;
            }
            let check = &sub * &xb - &rhs;
            if check.amax() > 1e-10 {
                continue;
            }
            let value: f64 = basis.iter().zip(xb.iter()).filter(|(j, _)| **j < n).map(|(j, v)| self.cost[*j] * v).sum();
            if best.is_none_or(|b| value < b) {
                best = Some(value);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: SuiteKind, trials: usize) -> SuiteConfig {
        SuiteConfig { trials: Some(trials), suites: vec![kind], fixtures: 2, ..Default::default() }
    }

    #[test]
    fn zero_trials_pass() {
        let config = SuiteConfig { trials: Some(0), ..Default::default() };
        let report = run_suite(&config).unwrap();
        assert!(report.passed);
        assert!(report.suites.iter().all(|s| s.instances == 0 && s.failures.is_empty()));
    }

    #[test]
    fn reports_are_deterministic() {
        let config = SuiteConfig { trials: Some(3), suites: vec![SuiteKind::LhsClosure, SuiteKind::Sdp], ..Default::default() };
        let a = serde_json::to_string(&run_suite(&config).unwrap()).unwrap();
        let b = serde_json::to_string(&run_suite(&config).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_runs_pass() {
        for kind in SuiteKind::ALL {
            let trials = if matches!(kind, SuiteKind::RelEntropyMonotonicity | SuiteKind::RelEntropyConvexity) { 1 } else { 2 };
            let out = run_one(kind, &small(kind, trials)).unwrap();
            assert!(out.all_passed(), "{kind}: {:?}", out.failures.first().map(|f| &f.trial));
        }
    }

    #[test]
    fn failing_instance_replays() {
        // An impossible tolerance forces a failure, which must reproduce.
        let mut config = small(SuiteKind::Sdp, 2);
        config.tolerances.lp = -1.0;
        let out = run_one(SuiteKind::Sdp, &config).unwrap();
        let dump = out.failures.iter().find(|f| f.trial.index >= SDP_FIXED_CASES).unwrap();
        let text = serde_json::to_string(dump).unwrap();
        let back: FailureDump = serde_json::from_str(&text).unwrap();
        let again = replay(&back).unwrap();
        assert!(!again.pass);
        assert_eq!(again.metrics, dump.trial.metrics);
    }

    #[test]
    fn fixtures() {
        let a = gen_fixture(FixtureKind::SingletXz, &FixtureParams::default(), 0).unwrap();
        assert_eq!(io::assemblage_to_json(&a), io::assemblage_to_json(&singlet_xz()));
        let lhs = gen_fixture(FixtureKind::RandomLhs, &FixtureParams::default(), 7).unwrap();
        assert!(is_lhs(&lhs, DEFAULT_MEMBERSHIP_TOL).unwrap().is_member);
        let st = gen_fixture(FixtureKind::RandomSteerable, &FixtureParams::default(), 7).unwrap();
        assert!(steerable_weight(&st).unwrap().0 > STEERABLE_MIN_WEIGHT);
        assert_eq!("random-steerable".parse::<FixtureKind>().unwrap(), FixtureKind::RandomSteerable);
        assert!("nope".parse::<SuiteKind>().is_err());
    }

    #[test]
    fn lp_enumeration_on_a_known_instance() {
        let lp = RandomLp { cost: vec![1.0, -1.0, 0.0], a: vec![vec![1.0, 1.0, 1.0]], b: vec![1.0], cap: 3.0 };
        assert!((lp.vertex_optimum().unwrap() + 1.0).abs() < 1e-15);
    }
}
