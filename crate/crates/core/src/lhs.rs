//! The unsteerable set: local-hidden-state models, their decomposition over
//! deterministic strategies, and membership testing.

use rand::Rng;

use crate::assemblage::Assemblage;
use crate::error::{Result, SteeringError};
use crate::linalg::{HermitianMatrix, ProbTable, PSD_FLOOR};
use crate::random;
use crate::sdp::{self, Relation, SdpProblem, Sense, SolveOptions, Term};

/// Largest number of deterministic strategies `r^s` we enumerate.
pub const STRATEGY_CAP: usize = 1_000_000;
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-6;
/// Witness reconstruction accuracy required for a membership certificate.
pub const WITNESS_TOL: f64 = 1e-7;

/// A response function `x ↦ a`, stored as an `s`-tuple.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DeterministicStrategy {
    response: Vec<usize>,
}

impl DeterministicStrategy {
    pub fn new(response: Vec<usize>, r: usize) -> Result<Self> {
        if let Some(a) = response.iter().find(|a| **a >= r) {
            return Err(SteeringError::Dimension(format!("response {a} outside [0,{r})")));
        }
        Ok(Self { response })
    }

    pub fn response(&self) -> &[usize] {
        &self.response
    }

    /// `D(a|x)`.
    pub fn prob(&self, a: usize, x: usize) -> f64 {
        if self.response[x] == a {
            1.0
        } else {
            0.0
        }
    }
}

pub fn strategy_count(r: usize, s: usize) -> Result<usize> {
    let count = u32::try_from(s)
        .ok()
        .and_then(|s| r.checked_pow(s))
        .filter(|n| *n <= STRATEGY_CAP);
    count.ok_or_else(|| SteeringError::SizeCap(format!("{r}^{s} deterministic strategies exceed {STRATEGY_CAP}")))
}

/// All `r^s` strategies in lexicographic order of `(response(0), …, response(s−1))`.
pub fn enumerate_deterministic_strategies(r: usize, s: usize) -> Result<Vec<DeterministicStrategy>> {
    let n = strategy_count(r, s)?;
    Ok((0..n)
        .map(|mut idx| {
            let mut response = vec![0; s];
            for slot in response.iter_mut().rev() {
                *slot = idx % r;
                idx /= r;
            }
            DeterministicStrategy { response }
        })
        .collect())
}

/// One hidden variable value: weight `P_Λ(λ)`, response table
/// `p_a_given_x[x][a]` and state `ξ(λ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LhsComponent {
    pub weight: f64,
    pub p_a_given_x: Vec<Vec<f64>>,
    pub state: HermitianMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LhsModel {
    r: usize,
    s: usize,
    d: usize,
    components: Vec<LhsComponent>,
}

impl LhsModel {
    pub fn new(r: usize, s: usize, d: usize, components: Vec<LhsComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(SteeringError::InvalidProbTable("LHS model needs at least one λ".into()));
        }
        let weights: Vec<f64> = components.iter().map(|c| c.weight).collect();
        ProbTable::joint(vec![weights.len()], weights)?;
        for (l, comp) in components.iter().enumerate() {
            if comp.p_a_given_x.len() != s || comp.p_a_given_x.iter().any(|row| row.len() != r) {
                return Err(SteeringError::Dimension(format!("λ={l}: response table must be s×r")));
            }
            let flat: Vec<f64> = (0..r).flat_map(|a| (0..s).map(move |x| (a, x))).map(|(a, x)| comp.p_a_given_x[x][a]).collect();
            ProbTable::conditional(vec![r, s], flat)?;
            if comp.state.dim() != d {
                return Err(SteeringError::Dimension(format!("λ={l}: state has dimension {}", comp.state.dim())));
            }
            if (comp.state.trace() - 1.0).abs() > 1e-9 || comp.state.min_eigenvalue()? < -PSD_FLOOR {
                return Err(SteeringError::InvalidState(format!("λ={l}: ξ(λ) must be a density matrix")));
            }
        }
        Ok(Self { r, s, d, components })
    }

    /// Model with one λ per deterministic strategy and `ξ(λ) = ω_λ/Tr ω_λ`
    /// (blocks of negligible trace are dropped).
    pub fn from_decomposition(
        r: usize,
        s: usize,
        d: usize,
        strategies: &[DeterministicStrategy],
        omegas: &[HermitianMatrix],
    ) -> Result<Self> {
        let total: f64 = omegas.iter().map(|w| w.trace()).sum();
        let mut components = Vec::new();
        for (strat, omega) in strategies.iter().zip(omegas) {
            let t = omega.trace();
            if t <= 1e-14 {
                continue;
            }
            let p_a_given_x = (0..s).map(|x| (0..r).map(|a| strat.prob(a, x)).collect()).collect();
            components.push(LhsComponent { weight: t / total, p_a_given_x, state: omega.scaled(1.0 / t) });
        }
        Self::new(r, s, d, components)
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn components(&self) -> &[LhsComponent] {
        &self.components
    }

    /// `P_Λ` as a table.
    pub fn hidden_distribution(&self) -> ProbTable {
        let w = self.components.iter().map(|c| c.weight).collect::<Vec<_>>();
        ProbTable::joint(vec![w.len()], w).expect("validated at construction")
    }

    /// `P_{A|XΛ}` as a table of shape `[r, s, n_λ]`.
    pub fn response_table(&self) -> ProbTable {
        let n = self.components.len();
        ProbTable::conditional_from_fn(vec![self.r, self.s, n], |i| self.components[i[2]].p_a_given_x[i[1]][i[0]])
            .expect("validated at construction")
    }

    /// `σ(a,x) = Σ_λ P_Λ(λ) P(a|x,λ) ξ(λ)`.
    pub fn assemble(&self) -> Result<Assemblage> {
        Assemblage::from_fn(self.r, self.s, self.d, |a, x| {
            let mut acc = HermitianMatrix::zeros(self.d);
            for comp in &self.components {
                let w = comp.weight * comp.p_a_given_x[x][a];
                if w != 0.0 {
                    acc = &acc + &comp.state.scaled(w);
                }
            }
            acc
        })
    }

    /// Random model: 1–8 hidden values, flat Dirichlet `P_Λ`, responses that
    /// are deterministic or Dirichlet with equal odds, and noisy Haar states.
    pub fn random<R: Rng + ?Sized>(r: usize, s: usize, d: usize, rng: &mut R) -> Self {
        let n = rng.random_range(1..=8);
        let weights = random::dirichlet(n, 1.0, rng);
        let components = weights
            .into_iter()
            .map(|weight| {
                let deterministic = rng.random_bool(0.5);
                let p_a_given_x = (0..s)
                    .map(|_| {
                        if deterministic {
                            let a = rng.random_range(0..r);
                            (0..r).map(|b| if a == b { 1.0 } else { 0.0 }).collect()
                        } else {
                            random::dirichlet(r, 1.0, rng)
                        }
                    })
                    .collect();
                LhsComponent { weight, p_a_given_x, state: random::random_noisy_pure(d, rng) }
            })
            .collect();
        Self::new(r, s, d, components).expect("generator output is valid")
    }
}

pub fn assemble_from_model(model: &LhsModel, r: usize, s: usize) -> Result<Assemblage> {
    if (model.r, model.s) != (r, s) {
        return Err(SteeringError::Dimension(format!(
            "model has (r,s)=({},{}), requested ({r},{s})",
            model.r, model.s
        )));
    }
    model.assemble()
}

fn decomposition_program(
    ass: &Assemblage,
    strategies: &[DeterministicStrategy],
    sense: Sense,
    relation: Relation,
    with_objective: bool,
) -> SdpProblem {
    let d = ass.d();
    let mut p = SdpProblem::new(sense);
    for l in 0..strategies.len() {
        let b = p.add_block(l, d);
        if with_objective {
            p.set_objective(b, HermitianMatrix::identity(d));
        }
    }
    for x in 0..ass.s() {
        for a in 0..ass.r() {
            let terms = strategies
                .iter()
                .enumerate()
                .filter(|(_, st)| st.response[x] == a)
                .map(|(l, _)| Term::Scaled { block: l, coeff: 1.0 })
                .collect();
            p.add_constraint(terms, relation, ass.member(a, x).clone());
        }
    }
    p
}

/// `max Σ Tr ω_λ  s.t.  Σ_λ D_λ(a|x) ω_λ ⪯ σ(a,x)`.
pub fn weight_program(ass: &Assemblage, strategies: &[DeterministicStrategy]) -> SdpProblem {
    decomposition_program(ass, strategies, Sense::Maximize, Relation::Leq, true)
}

/// `min Σ Tr ω_λ  s.t.  Σ_λ D_λ(a|x) ω_λ ⪰ σ(a,x)`.
pub fn robustness_program(ass: &Assemblage, strategies: &[DeterministicStrategy]) -> SdpProblem {
    decomposition_program(ass, strategies, Sense::Minimize, Relation::Geq, true)
}

/// `Σ_λ D_λ(a|x) ω_λ = σ(a,x)`, no objective.
pub fn membership_program(ass: &Assemblage, strategies: &[DeterministicStrategy]) -> SdpProblem {
    decomposition_program(ass, strategies, Sense::Minimize, Relation::Eq, false)
}

/// Members `Σ_λ D_λ(a|x) ω_λ` of the decomposition.
pub fn assemble_decomposition(
    r: usize,
    s: usize,
    d: usize,
    strategies: &[DeterministicStrategy],
    omegas: &[HermitianMatrix],
) -> Result<Assemblage> {
    let mut members = Vec::with_capacity(r * s);
    for x in 0..s {
        for a in 0..r {
            let mut acc = HermitianMatrix::zeros(d);
            for (st, w) in strategies.iter().zip(omegas) {
                if st.response[x] == a {
                    acc = &acc + w;
                }
            }
            members.push(acc);
        }
    }
    Assemblage::from_members_unchecked(r, s, d, members)
}

#[derive(Clone, Debug)]
pub struct LhsMembership {
    pub is_member: bool,
    /// Steerable weight, used as the distance to the LHS set.
    pub margin: f64,
    /// `ω_λ` in the order of [`enumerate_deterministic_strategies`]; present
    /// only for members whose decomposition reproduces the input within
    /// [`WITNESS_TOL`].
    pub witness: Option<Vec<HermitianMatrix>>,
}

/// Steerable weight of `ass` relative to its own trace:
/// `Tr ρ_B − max Σ Tr ω_λ` together with the optimal `ω_λ`.
pub(crate) fn weight_margin(ass: &Assemblage, opts: &SolveOptions) -> Result<(f64, Vec<HermitianMatrix>)> {
    let strategies = enumerate_deterministic_strategies(ass.r(), ass.s())?;
    let sol = sdp::solve(&weight_program(ass, &strategies), opts)?.require_optimal("steerable weight")?;
    Ok((ass.trace() - sol.objective, sol.blocks))
}

pub fn is_lhs(ass: &Assemblage, tol: f64) -> Result<LhsMembership> {
    is_lhs_with(ass, tol, &SolveOptions::default())
}

pub fn is_lhs_with(ass: &Assemblage, tol: f64, opts: &SolveOptions) -> Result<LhsMembership> {
    let strategies = enumerate_deterministic_strategies(ass.r(), ass.s())?;
    let (margin, _) = weight_margin(ass, opts)?;
    let margin = margin.max(0.0);
    let is_member = margin <= tol;
    let mut witness = None;
    if is_member {
        let sol = sdp::solve(&membership_program(ass, &strategies), opts)?;
        if sol.is_optimal() {
            let rebuilt = assemble_decomposition(ass.r(), ass.s(), ass.d(), &strategies, &sol.blocks)?;
            let psd = sol.blocks.iter().map(|w| w.min_eigenvalue()).collect::<Result<Vec<_>>>()?;
            if rebuilt.max_distance(ass) <= WITNESS_TOL && psd.iter().all(|m| *m >= -PSD_FLOOR) {
                witness = Some(sol.blocks);
            }
        }
    }
    Ok(LhsMembership { is_member, margin, witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assemblage::singlet_xz;

    #[test]
    fn strategy_counts() {
        assert_eq!(enumerate_deterministic_strategies(2, 2).unwrap().len(), 4);
        assert_eq!(enumerate_deterministic_strategies(2, 3).unwrap().len(), 8);
        let nine = enumerate_deterministic_strategies(3, 2).unwrap();
        assert_eq!(nine.len(), 9);
        let unique: std::collections::HashSet<_> = nine.iter().collect();
        assert_eq!(unique.len(), 9);
        assert_eq!(nine[1].response(), &[0, 1]);
        assert!(matches!(enumerate_deterministic_strategies(2, 40), Err(SteeringError::SizeCap(_))));
    }

    #[test]
    fn uniform_single_lambda() {
        let model = LhsModel::new(
            3,
            2,
            2,
            vec![LhsComponent {
                weight: 1.0,
                p_a_given_x: vec![vec![1.0 / 3.0; 3]; 2],
                state: HermitianMatrix::maximally_mixed(2),
            }],
        )
        .unwrap();
        let ass = assemble_from_model(&model, 3, 2).unwrap();
        let expected = HermitianMatrix::identity(2).scaled(1.0 / 6.0);
        assert!(ass.members().iter().all(|m| m.frobenius_distance(&expected) < 1e-15));
        assert!(assemble_from_model(&model, 2, 2).is_err());
    }

    #[test]
    fn deterministic_single_lambda() {
        let strat = DeterministicStrategy::new(vec![1, 0], 2).unwrap();
        let rho = HermitianMatrix::diagonal(&[0.3, 0.7]);
        let model = LhsModel::from_decomposition(2, 2, 2, &[strat], &[rho.clone()]).unwrap();
        let ass = model.assemble().unwrap();
        assert!(ass.member(1, 0).frobenius_distance(&rho) < 1e-15);
        assert_eq!(ass.member(0, 0).trace(), 0.0);
        assert!(ass.member(0, 1).frobenius_distance(&rho) < 1e-15);
    }

    #[test]
    fn singlet_is_steerable() {
        let m = is_lhs(&singlet_xz(), DEFAULT_MEMBERSHIP_TOL).unwrap();
        assert!(!m.is_member);
        assert!(m.margin > 0.1);
        assert!(m.witness.is_none());
    }

    #[test]
    fn random_models_are_members_with_witness() {
        let mut rng = random::rng_from_seed(17);
        for _ in 0..20 {
            let model = LhsModel::random(2, 2, 2, &mut rng);
            let ass = model.assemble().unwrap();
            let m = is_lhs(&ass, DEFAULT_MEMBERSHIP_TOL).unwrap();
            assert!(m.is_member, "margin {}", m.margin);
            let strategies = enumerate_deterministic_strategies(2, 2).unwrap();
            let w = m.witness.expect("witness");
            let rebuilt = assemble_decomposition(2, 2, 2, &strategies, &w).unwrap();
            assert!(rebuilt.max_distance(&ass) < WITNESS_TOL);
        }
    }

    #[test]
    fn input_independent_is_member() {
        let mut rng = random::rng_from_seed(3);
        let s0 = random::random_density(2, &mut rng).scaled(0.4);
        let s1 = random::random_density(2, &mut rng).scaled(0.6);
        let ass = Assemblage::from_fn(2, 3, 2, |a, _| if a == 0 { s0.clone() } else { s1.clone() }).unwrap();
        assert!(is_lhs(&ass, DEFAULT_MEMBERSHIP_TOL).unwrap().is_member);
    }
}
