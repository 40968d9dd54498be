//! Steering monotones: steerable weight, robustness and the relative
//! entropy of steering, plus the monotonicity and convexity checks.

pub mod relent;

use serde::{Deserialize, Serialize};

use crate::assemblage::Assemblage;
use crate::error::{Result, SteeringError};
use crate::lhs::{
    assemble_decomposition, enumerate_deterministic_strategies, robustness_program, weight_program,
    DeterministicStrategy,
};
use crate::linalg::HermitianMatrix;
use crate::sdp::{self, SolveOptions};
use crate::snio::SnioMap;

pub use relent::{
    assemblage_relative_entropy, fixed_strategy_objective, maximize_strategy, minimize_over_lhs,
    relative_entropy_of_steering, CancelToken, RelEntropyEstimate, RelEntropyOptions, RelEntropyStatus,
    StrategyParams,
};

/// Slack for the certified measures.
pub const SDP_MEASURE_EPS: f64 = 1e-6;
/// Slack for the relative entropy of steering.
pub const REL_ENTROPY_EPS: f64 = 5e-3;
/// Branches less likely than this are skipped in averages.
pub const MIN_BRANCH_PROBABILITY: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    Weight,
    Robustness,
}

/// Decomposition certifying a weight or robustness value.
///
/// Weight: `ρ = ν ρ̃ + (1−ν) σ`. Robustness: `(ρ + ν ρ̃)/(1+ν) = σ`.
/// In both, `σ = Σ_λ D_λ ω_λ` with `Σ Tr ω_λ = 1`.
#[derive(Clone, Debug)]
pub struct DecompositionWitness {
    pub kind: WitnessKind,
    pub nu: f64,
    pub steerable_part: Assemblage,
    pub lhs_part: Assemblage,
    pub lhs_omegas: Vec<HermitianMatrix>,
}

impl DecompositionWitness {
    /// Member-wise distance between the two sides of the defining identity.
    pub fn reconstruction_error(&self, ass: &Assemblage) -> Result<f64> {
        let nu = self.nu;
        Ok(match self.kind {
            WitnessKind::Weight => {
                let rebuilt = self.steerable_part.scaled(nu).add_unchecked(&self.lhs_part.scaled(1.0 - nu))?;
                rebuilt.max_distance(ass)
            }
            WitnessKind::Robustness => {
                let lhs = ass.add_unchecked(&self.steerable_part.scaled(nu))?.scaled(1.0 / (1.0 + nu));
                lhs.max_distance(&self.lhs_part)
            }
        })
    }

    /// Smallest eigenvalue of `ν ρ̃` and of the `ω_λ` (negative values are
    /// solver round-off).
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut worst = f64::INFINITY;
        for m in self.steerable_part.members() {
            worst = worst.min(self.nu * m.min_eigenvalue()?);
        }
        for w in &self.lhs_omegas {
            worst = worst.min(w.min_eigenvalue()?);
        }
        Ok(worst)
    }

    /// `σ` rebuilt from `ω_λ`.
    pub fn lhs_from_omegas(&self) -> Result<Assemblage> {
        let l = &self.lhs_part;
        let strategies = enumerate_deterministic_strategies(l.r(), l.s())?;
        assemble_decomposition(l.r(), l.s(), l.d(), &strategies, &self.lhs_omegas)
    }
}

/// Value of a certified measure with its witness and solver diagnostics.
#[derive(Clone, Debug)]
pub struct SdpMeasure {
    pub value: f64,
    pub witness: DecompositionWitness,
    pub duality_gap: f64,
    pub iterations: usize,
}

fn check_normalized(ass: &Assemblage) -> Result<()> {
    ass.validate()?;
    if (ass.trace() - 1.0).abs() > 1e-8 {
        return Err(SteeringError::Precondition(format!(
            "measures need a normalized assemblage, trace is {}",
            ass.trace()
        )));
    }
    Ok(())
}

fn sum_traces(ws: &[HermitianMatrix]) -> f64 {
    ws.iter().map(|w| w.trace()).sum()
}

/// LHS assemblage on which the dual certificate is tight, used when the
/// primal LHS part vanishes: a deterministic strategy with `ω` on the
/// bottom eigenvector of `Σ_{x} F(D_λ(x), x)`.
fn lhs_from_dual(ass: &Assemblage, strategies: &[DeterministicStrategy], duals: &[HermitianMatrix]) -> Result<Vec<HermitianMatrix>> {
    let (r, d) = (ass.r(), ass.d());
    let mut best: Option<(f64, usize, HermitianMatrix)> = None;
    for (l, st) in strategies.iter().enumerate() {
        let mut g = HermitianMatrix::zeros(d);
        for x in 0..ass.s() {
            g = &g + &duals[x * r + st.response()[x]];
        }
        let sp = g.eig()?;
        if best.as_ref().is_none_or(|(v, _, _)| sp.min() < *v) {
            let v0 = sp.eigenvectors.column(0).into_owned();
            best = Some((sp.min(), l, HermitianMatrix::projector(&v0)));
        }
    }
    let (_, l, proj) = best.expect("at least one strategy");
    Ok((0..strategies.len()).map(|k| if k == l { proj.clone() } else { HermitianMatrix::zeros(d) }).collect())
}

pub fn steerable_weight(ass: &Assemblage) -> Result<(f64, DecompositionWitness)> {
    let m = steerable_weight_with(ass, &SolveOptions::default())?;
    Ok((m.value, m.witness))
}

/// `ν = 1 − max{Σ Tr ω_λ : ω_λ ⪰ 0, Σ_λ D_λ(a|x) ω_λ ⪯ σ(a,x)}`.
pub fn steerable_weight_with(ass: &Assemblage, opts: &SolveOptions) -> Result<SdpMeasure> {
    check_normalized(ass)?;
    let strategies = enumerate_deterministic_strategies(ass.r(), ass.s())?;
    let sol = sdp::solve(&weight_program(ass, &strategies), opts)?.require_optimal("steerable weight")?;
    let lhs_weight = sum_traces(&sol.blocks).clamp(0.0, 1.0);
    let nu = 1.0 - lhs_weight;
    let (r, s, d) = (ass.r(), ass.s(), ass.d());
    let lhs_omegas: Vec<HermitianMatrix> = if lhs_weight > 1e-6 {
        sol.blocks.iter().map(|w| w.scaled(1.0 / lhs_weight)).collect()
    } else {
        lhs_from_dual(ass, &strategies, &sol.duals)?
    };
    let lhs_part = assemble_decomposition(r, s, d, &strategies, &lhs_omegas)?;
    let steerable_part = if nu > 0.0 {
        ass.add_unchecked(&lhs_part.scaled(-(1.0 - nu)))?.scaled(1.0 / nu)
    } else {
        ass.clone()
    };
    Ok(SdpMeasure {
        value: nu,
        witness: DecompositionWitness { kind: WitnessKind::Weight, nu, steerable_part, lhs_part, lhs_omegas },
        duality_gap: (sol.objective - sol.dual_objective).abs(),
        iterations: sol.iterations,
    })
}

pub fn robustness(ass: &Assemblage) -> Result<(f64, DecompositionWitness)> {
    let m = robustness_with(ass, &SolveOptions::default())?;
    Ok((m.value, m.witness))
}

/// `ν = min{Σ Tr ω_λ : ω_λ ⪰ 0, Σ_λ D_λ(a|x) ω_λ ⪰ σ(a,x)} − 1`.
pub fn robustness_with(ass: &Assemblage, opts: &SolveOptions) -> Result<SdpMeasure> {
    check_normalized(ass)?;
    let strategies = enumerate_deterministic_strategies(ass.r(), ass.s())?;
    let sol = sdp::solve(&robustness_program(ass, &strategies), opts)?.require_optimal("robustness")?;
    let total = sum_traces(&sol.blocks).max(1.0);
    let nu = total - 1.0;
    let (r, s, d) = (ass.r(), ass.s(), ass.d());
    let lhs_omegas: Vec<HermitianMatrix> = sol.blocks.iter().map(|w| w.scaled(1.0 / total)).collect();
    let lhs_part = assemble_decomposition(r, s, d, &strategies, &lhs_omegas)?;
    let steerable_part = if nu > 0.0 {
        lhs_part.scaled(1.0 + nu).add_unchecked(&ass.scaled(-1.0))?.scaled(1.0 / nu)
    } else {
        ass.clone()
    };
    Ok(SdpMeasure {
        value: nu,
        witness: DecompositionWitness { kind: WitnessKind::Robustness, nu, steerable_part, lhs_part, lhs_omegas },
        duality_gap: (sol.objective - sol.dual_objective).abs(),
        iterations: sol.iterations,
    })
}

/// Unnormalized optimal robustness `ω_λ`, used as a starting point.
pub(crate) fn robustness_omegas(ass: &Assemblage) -> Result<Vec<HermitianMatrix>> {
    let strategies = enumerate_deterministic_strategies(ass.r(), ass.s())?;
    let sol = sdp::solve(&robustness_program(ass, &strategies), &SolveOptions::default())?
        .require_optimal("robustness")?;
    Ok(sol.blocks)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub before: f64,
    pub avg_after: f64,
    /// `P_Ω(ω)` per branch.
    pub branch_probabilities: Vec<f64>,
    /// Measure of each normalized branch; `None` for skipped branches.
    pub branch_values: Vec<Option<f64>>,
    pub pass: bool,
    /// Every normalized branch individually at most `before + eps`.
    pub branchwise_pass: bool,
}

/// Average non-increase under a deterministic SNIO:
/// `Σ_ω P_Ω(ω) S(M_ω(ρ)/P_Ω(ω)) ≤ S(ρ) + eps`.
pub fn monotonicity_check<F>(measure: F, snio: &SnioMap, ass: &Assemblage, eps: f64) -> Result<MonotonicityReport>
where
    F: Fn(&Assemblage) -> Result<f64>,
{
    if !snio.is_deterministic() {
        return Err(SteeringError::Precondition("monotonicity is checked for deterministic SNIOs".into()));
    }
    let before = measure(ass)?;
    let mut branch_probabilities = Vec::with_capacity(snio.n_branches());
    let mut branch_values = Vec::with_capacity(snio.n_branches());
    let mut avg_after = 0.0;
    for omega in 0..snio.n_branches() {
        let branch = snio.apply_branch(omega, ass)?;
        let p = branch.trace();
        branch_probabilities.push(p);
        if p < MIN_BRANCH_PROBABILITY {
            branch_values.push(None);
            continue;
        }
        let normalized = if p == 1.0 { branch } else { branch.scaled(1.0 / p) };
        let v = measure(&normalized)?;
        avg_after += p * v;
        branch_values.push(Some(v));
    }
    let branchwise_pass = branch_values.iter().flatten().all(|v| *v <= before + eps);
    Ok(MonotonicityReport {
        before,
        avg_after,
        branch_probabilities,
        branch_values,
        pass: avg_after <= before + eps,
        branchwise_pass,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub mixed: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `S(μ a1 + (1−μ) a2) ≤ μ S(a1) + (1−μ) S(a2) + eps`.
pub fn convexity_check<F>(measure: F, a1: &Assemblage, a2: &Assemblage, mu: f64, eps: f64) -> Result<ConvexityReport>
where
    F: Fn(&Assemblage) -> Result<f64>,
{
    let mixed = measure(&Assemblage::mix(a1, a2, mu)?)?;
    let bound = mu * measure(a1)? + (1.0 - mu) * measure(a2)?;
    Ok(ConvexityReport { mixed, bound, pass: mixed <= bound + eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assemblage::singlet_xz;
    use crate::lhs::{is_lhs, LhsModel};
    use crate::random::rng_from_seed;

    #[test]
    fn singlet_weight_and_dual_lhs_part() {
        let ass = singlet_xz();
        let m = steerable_weight_with(&ass, &SolveOptions::default()).unwrap();
        assert!((m.value - 1.0).abs() < 1e-6);
        assert!(m.witness.reconstruction_error(&ass).unwrap() < 1e-7);
        assert!(m.witness.lhs_from_omegas().unwrap().max_distance(&m.witness.lhs_part) < 1e-12);
        // Mixing towards the witness scales the weight linearly.
        for mu in [0.25, 0.5, 0.75] {
            let mixed = Assemblage::mix(&ass, &m.witness.lhs_part, mu).unwrap();
            let (w, _) = steerable_weight(&mixed).unwrap();
            assert!((w - mu).abs() < 2e-6, "mu {mu}: {w}");
        }
    }

    #[test]
    fn singlet_robustness_witness() {
        let ass = singlet_xz();
        let m = robustness_with(&ass, &SolveOptions::default()).unwrap();
        assert!(m.value > 0.1);
        assert!(m.duality_gap < 1e-7);
        assert!(m.witness.reconstruction_error(&ass).unwrap() < 1e-7);
        assert!(is_lhs(&m.witness.lhs_part, 1e-6).unwrap().is_member);
    }

    #[test]
    fn lhs_inputs_have_zero_measures() {
        let mut rng = rng_from_seed(11);
        for _ in 0..10 {
            let ass = LhsModel::random(2, 2, 2, &mut rng).assemble().unwrap();
            let (w, wit) = steerable_weight(&ass).unwrap();
            let (rob, _) = robustness(&ass).unwrap();
            assert!(w <= 1e-6 && rob <= 1e-6, "{w} {rob}");
            assert!(wit.reconstruction_error(&ass).unwrap() < 1e-7);
        }
    }

    #[test]
    fn identity_snio_is_exact() {
        let ass = singlet_xz();
        let rep = monotonicity_check(|a| steerable_weight(a).map(|r| r.0), &SnioMap::identity(2, 2, 2), &ass, 1e-12).unwrap();
        assert!((rep.before - rep.avg_after).abs() < 1e-12);
        assert!(rep.pass && rep.branchwise_pass);
    }

    #[test]
    fn convexity_endpoints() {
        let ass = singlet_xz();
        let other = LhsModel::random(2, 2, 2, &mut rng_from_seed(2)).assemble().unwrap();
        for mu in [0.0, 1.0] {
            let rep = convexity_check(|a| robustness(a).map(|r| r.0), &ass, &other, mu, 0.0).unwrap();
            assert!((rep.mixed - rep.bound).abs() < 1e-12);
        }
    }
}
