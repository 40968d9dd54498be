//! Small dense semidefinite programs over complex Hermitian block variables.
//!
//! A problem has PSD block variables `X_b`, a real-linear objective
//! `Σ_b Re Tr(C_b X_b)` and matrix constraints `Σ terms {⪯,⪰,=} rhs`, where
//! each term is a scaled block or a scaled block trace. Problems are
//! solved by a primal-dual interior-point method on the homogeneous
//! self-dual embedding (see [`ipm`]).

mod ipm;
pub(crate) mod svec;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SteeringError};
use crate::linalg::HermitianMatrix;

pub use ipm::TraceRow;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    SolverFailure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    /// `Σ terms ⪯ rhs`
    Leq,
    /// `Σ terms ⪰ rhs`
    Geq,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Term {
    /// `coeff · X_block`; the constraint has the block's dimension.
    Scaled { block: usize, coeff: f64 },
    /// `coeff · Tr X_block`; the constraint is 1×1.
    Trace { block: usize, coeff: f64 },
}

impl Term {
    fn block(&self) -> usize {
        match *self {
            Term::Scaled { block, .. } | Term::Trace { block, .. } => block,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub terms: Vec<Term>,
    pub relation: Relation,
    pub rhs: HermitianMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub label: usize,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub sense: Sense,
    pub blocks: Vec<Block>,
    /// One cost matrix per block, `None` for zero.
    pub objective: Vec<Option<HermitianMatrix>>,
    pub offset: f64,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(sense: Sense) -> Self {
        Self { sense, blocks: Vec::new(), objective: Vec::new(), offset: 0.0, constraints: Vec::new() }
    }

    pub fn add_block(&mut self, label: usize, dim: usize) -> usize {
        self.blocks.push(Block { label, dim });
        self.objective.push(None);
        self.blocks.len() - 1
    }

    pub fn set_objective(&mut self, block: usize, cost: HermitianMatrix) {
        self.objective[block] = Some(cost);
    }

    pub fn add_constraint(&mut self, terms: Vec<Term>, relation: Relation, rhs: HermitianMatrix) {
        self.constraints.push(Constraint { terms, relation, rhs });
    }

    /// Dimension and index consistency.
    pub fn validate(&self) -> Result<()> {
        if self.blocks.iter().any(|b| b.dim == 0) {
            return Err(SteeringError::Dimension("empty SDP block".into()));
        }
        for (b, cost) in self.objective.iter().enumerate() {
            if let Some(cost) = cost {
                if cost.dim() != self.blocks[b].dim {
                    return Err(SteeringError::Dimension(format!("objective for block {b} has wrong dimension")));
                }
            }
        }
        for (i, con) in self.constraints.iter().enumerate() {
            for t in &con.terms {
                let b = t.block();
                if b >= self.blocks.len() {
                    return Err(SteeringError::Dimension(format!("constraint {i} references block {b}")));
                }
                let out = match t {
                    Term::Scaled { .. } => self.blocks[b].dim,
                    Term::Trace { .. } => 1,
                };
                if out != con.rhs.dim() {
                    return Err(SteeringError::Dimension(format!(
                        "constraint {i}: term maps to dimension {out}, rhs has {}",
                        con.rhs.dim()
                    )));
                }
            }
        }
        Ok(())
    }

    /// `Σ terms` of constraint `i` evaluated at `blocks`.
    pub fn constraint_value(&self, i: usize, blocks: &[HermitianMatrix]) -> HermitianMatrix {
        let con = &self.constraints[i];
        let mut acc = HermitianMatrix::zeros(con.rhs.dim());
        for t in &con.terms {
            acc = match *t {
                Term::Scaled { block, coeff } => &acc + &blocks[block].scaled(coeff),
                Term::Trace { block, coeff } => &acc + &HermitianMatrix::diagonal(&[coeff * blocks[block].trace()]),
            };
        }
        acc
    }

    pub fn objective_value(&self, blocks: &[HermitianMatrix]) -> f64 {
        self.offset
            + self
                .objective
                .iter()
                .zip(blocks)
                .filter_map(|(c, x)| c.as_ref().map(|c| c.inner(x)))
                .sum::<f64>()
    }

    /// Largest violation over block positivity and all constraints: negative
    /// eigenvalue magnitude for cone conditions, Frobenius norm for equalities.
    pub fn max_violation(&self, blocks: &[HermitianMatrix]) -> Result<f64> {
        let mut worst = 0.0_f64;
        for x in blocks {
            worst = worst.max(-x.min_eigenvalue()?);
        }
        for (i, con) in self.constraints.iter().enumerate() {
            let lhs = self.constraint_value(i, blocks);
            let v = match con.relation {
                Relation::Leq => -(&con.rhs - &lhs).min_eigenvalue()?,
                Relation::Geq => -(&lhs - &con.rhs).min_eigenvalue()?,
                Relation::Eq => lhs.frobenius_distance(&con.rhs),
            };
            worst = worst.max(v);
        }
        Ok(worst)
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Target relative residuals and gap.
    pub eps: f64,
    /// Looser level accepted as optimal when progress stalls before `eps`.
    pub accept: f64,
    pub record_trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { max_iter: 100, eps: 1e-9, accept: 1e-7, record_trace: false }
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Primal block values (meaningful when optimal).
    pub blocks: Vec<HermitianMatrix>,
    /// Multiplier per constraint (PSD for inequalities).
    pub duals: Vec<HermitianMatrix>,
    pub objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Complementarity gap `⟨s,z⟩` at the returned point.
    pub gap: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Iteration log as CSV with a header row.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,objective,primal_residual,dual_residual,mu\n");
        for row in &self.trace {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e}\n",
                row.iteration, row.objective, row.primal_residual, row.dual_residual, row.mu
            ));
        }
        out
    }

    pub fn require_optimal(self, what: &str) -> Result<Self> {
        if self.is_optimal() {
            Ok(self)
        } else {
            Err(SteeringError::Solver {
                status: self.status,
                detail: format!(
                    "{what}: primal residual {:.2e}, dual residual {:.2e}, gap {:.2e} after {} iterations",
                    self.primal_residual, self.dual_residual, self.gap, self.iterations
                ),
            })
        }
    }
}

pub fn solve(problem: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let form = ipm::ConicForm::from_problem(problem);
    let raw = ipm::solve_conic(&form, opts);
    Ok(form.recover(problem, raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::HermitianMatrix as H;

    #[test]
    fn trace_cap_saturates() {
        let mut p = SdpProblem::new(Sense::Maximize);
        let b = p.add_block(0, 2);
        p.set_objective(b, H::identity(2));
        p.add_constraint(vec![Term::Scaled { block: b, coeff: 1.0 }], Relation::Leq, H::identity(2));
        let sol = solve(&p, &SolveOptions::default()).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.objective - 2.0).abs() < 1e-9);
        assert!(sol.blocks[0].frobenius_distance(&H::identity(2)) < 1e-8);
    }

    #[test]
    fn negative_trace_is_infeasible() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let b = p.add_block(0, 2);
        p.add_constraint(vec![Term::Trace { block: b, coeff: 1.0 }], Relation::Eq, H::diagonal(&[-1.0]));
        let sol = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_is_reported() {
        let mut p = SdpProblem::new(Sense::Maximize);
        let b = p.add_block(0, 2);
        p.set_objective(b, H::identity(2));
        let sol = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn trace_csv_has_rows() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let b = p.add_block(0, 2);
        p.set_objective(b, H::diagonal(&[1.0, 2.0]));
        p.add_constraint(vec![Term::Trace { block: b, coeff: 1.0 }], Relation::Eq, H::diagonal(&[1.0]));
        let opts = SolveOptions { record_trace: true, ..Default::default() };
        let sol = solve(&p, &opts).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
        let csv = sol.trace_csv();
        assert!(csv.lines().count() > 2);
    }

    #[test]
    fn bad_dimensions_are_rejected() {
        let mut p = SdpProblem::new(Sense::Minimize);
        let b = p.add_block(0, 2);
        p.add_constraint(vec![Term::Scaled { block: b, coeff: 1.0 }], Relation::Eq, H::identity(3));
        assert!(solve(&p, &SolveOptions::default()).is_err());
    }
}

#[cfg(test)]
mod trace_tests {
    use super::*;
    use crate::lhs::{enumerate_deterministic_strategies, robustness_program, weight_program, LhsModel};
    use crate::random::rng_from_seed;
    use crate::suite::random_steerable;

    #[test]
    fn complementarity_decreases_after_iteration_ten() {
        let st = enumerate_deterministic_strategies(2, 2).unwrap();
        let opts = SolveOptions { record_trace: true, ..Default::default() };
        for seed in 1..=10u64 {
            let steer = random_steerable(2, 2, 2, seed).unwrap();
            let lhs = LhsModel::random(2, 2, 2, &mut rng_from_seed(seed)).assemble().unwrap();
            for p in [weight_program(&steer, &st), robustness_program(&steer, &st), weight_program(&lhs, &st)] {
                let sol = solve(&p, &opts).unwrap();
                assert!(sol.is_optimal());
                for w in sol.trace.windows(2).skip(9) {
                    assert!(w[1].mu <= w[0].mu * (1.0 + 1e-9), "seed {seed}: mu {} -> {}", w[0].mu, w[1].mu);
                }
            }
        }
    }
}
