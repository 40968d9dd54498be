//! Assemblages: families of unnormalized conditional states `σ(a,x)`.

use crate::error::{Result, SteeringError};
use crate::linalg::{c, CMat, CVec, HermitianMatrix, PSD_FLOOR};

pub const NO_SIGNALING_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-9;
/// Members lighter than this have no well-defined normalized state.
pub const MIN_MEMBER_TRACE: f64 = 1e-12;

/// `r` outputs, `s` inputs, Bob dimension `d`. Members are stored
/// input-major: index `x * r + a`.
#[derive(Clone, Debug, PartialEq)]
pub struct Assemblage {
    r: usize,
    s: usize,
    d: usize,
    members: Vec<HermitianMatrix>,
}

impl Assemblage {
    /// Validating constructor over an input-major member list.
    pub fn new(r: usize, s: usize, d: usize, members: Vec<HermitianMatrix>) -> Result<Self> {
        let ass = Self::from_members_unchecked(r, s, d, members)?;
        ass.validate()?;
        Ok(ass)
    }

    /// Builds from `(a, x, σ(a,x))` triples; every index pair must appear once.
    pub fn build<I>(r: usize, s: usize, d: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, HermitianMatrix)>,
    {
        let mut slots: Vec<Option<HermitianMatrix>> = vec![None; r * s];
        for (a, x, m) in entries {
            if a >= r || x >= s {
                return Err(SteeringError::Dimension(format!("member ({a},{x}) outside {r}x{s}")));
            }
            if slots[x * r + a].replace(m).is_some() {
                return Err(SteeringError::Dimension(format!("member ({a},{x}) given twice")));
            }
        }
        let mut members = Vec::with_capacity(r * s);
        for (i, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(m) => members.push(m),
                None => {
                    return Err(SteeringError::Dimension(format!("member ({},{}) missing", i % r, i / r)))
                }
            }
        }
        Self::new(r, s, d, members)
    }

    pub fn from_fn<F>(r: usize, s: usize, d: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> HermitianMatrix,
    {
        let mut members = Vec::with_capacity(r * s);
        for x in 0..s {
            for a in 0..r {
                members.push(f(a, x));
            }
        }
        Self::new(r, s, d, members)
    }

    /// Shape checks only; used for solver outputs whose invariants hold up to
    /// round-off and are asserted by the caller.
    pub fn from_members_unchecked(r: usize, s: usize, d: usize, members: Vec<HermitianMatrix>) -> Result<Self> {
        if r == 0 || s == 0 || d == 0 {
            return Err(SteeringError::Dimension("r, s and d must be positive".into()));
        }
        if members.len() != r * s {
            return Err(SteeringError::Dimension(format!(
                "expected {} members, got {}",
                r * s,
                members.len()
            )));
        }
        if let Some(m) = members.iter().find(|m| m.dim() != d) {
            return Err(SteeringError::Dimension(format!("member of dim {} in a d={d} assemblage", m.dim())));
        }
        Ok(Self { r, s, d, members })
    }

    pub fn zeros(r: usize, s: usize, d: usize) -> Self {
        Self { r, s, d, members: vec![HermitianMatrix::zeros(d); r * s] }
    }

    /// Checks PSD members, no-signaling and the trace bound.
    pub fn validate(&self) -> Result<()> {
        for x in 0..self.s {
            for a in 0..self.r {
                let min = self.member(a, x).min_eigenvalue()?;
                if min < -PSD_FLOOR {
                    return Err(SteeringError::NotPsd { a, x, min_eigenvalue: min });
                }
            }
        }
        let (x0, x1, residual) = self.signaling_residual();
        if residual > NO_SIGNALING_TOL {
            return Err(SteeringError::Signaling { x0, x1, residual });
        }
        let trace = self.trace();
        if trace > 1.0 + TRACE_TOL {
            return Err(SteeringError::TraceExceeded { trace });
        }
        Ok(())
    }

    /// Worst pair of inputs and the Frobenius distance of their marginals.
    pub fn signaling_residual(&self) -> (usize, usize, f64) {
        let marginals: Vec<HermitianMatrix> = (0..self.s).map(|x| self.marginal_at(x)).collect();
        let mut worst = (0, 0, 0.0);
        for x0 in 0..self.s {
            for x1 in (x0 + 1)..self.s {
                let res = marginals[x0].frobenius_distance(&marginals[x1]);
                if res > worst.2 {
                    worst = (x0, x1, res);
                }
            }
        }
        worst
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

    pub fn member(&self, a: usize, x: usize) -> &HermitianMatrix {
        &self.members[x * self.r + a]
    }

    /// Input-major member list.
    pub fn members(&self) -> &[HermitianMatrix] {
        &self.members
    }

    /// `P(a|x) = Tr σ(a,x)`.
    pub fn probability(&self, a: usize, x: usize) -> f64 {
        self.member(a, x).trace()
    }

    pub fn output_distribution(&self, x: usize) -> Vec<f64> {
        (0..self.r).map(|a| self.probability(a, x)).collect()
    }

    /// `σ(a,x)/P(a|x)`, or `None` when the member is too light to normalize.
    pub fn normalized_state(&self, a: usize, x: usize) -> Option<HermitianMatrix> {
        let p = self.probability(a, x);
        (p >= MIN_MEMBER_TRACE).then(|| self.member(a, x).scaled(1.0 / p))
    }

    pub fn marginal_at(&self, x: usize) -> HermitianMatrix {
        let mut acc = HermitianMatrix::zeros(self.d);
        for a in 0..self.r {
            acc = &acc + self.member(a, x);
        }
        acc
    }

    /// Bob's reduced state `Σ_a σ(a,0)`.
    pub fn bob_marginal(&self) -> HermitianMatrix {
        self.marginal_at(0)
    }

    /// `Σ_a Tr σ(a,0)`.
    pub fn trace(&self) -> f64 {
        self.bob_marginal().trace()
    }

    pub fn quantum_representation(&self) -> QuantumRepresentation {
        let blocks = (0..self.s)
            .map(|x| {
                let n = self.r * self.d;
                let mut m = CMat::zeros(n, n);
                for a in 0..self.r {
                    m.view_mut((a * self.d, a * self.d), (self.d, self.d))
                        .copy_from(self.member(a, x).matrix());
                }
                HermitianMatrix::from_matrix_symmetrized(m)
            })
            .collect();
        QuantumRepresentation { r: self.r, d: self.d, blocks }
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self { members: self.members.iter().map(|m| m.scaled(f)).collect(), ..self.clone() }
    }

    /// Divides every member by the assemblage trace.
    pub fn normalized(&self) -> Result<Self> {
        let t = self.trace();
        if t < MIN_MEMBER_TRACE {
            return Err(SteeringError::Precondition("cannot normalize a zero assemblage".into()));
        }
        Ok(self.scaled(1.0 / t))
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if (self.r, self.s, self.d) != (other.r, other.s, other.d) {
            return Err(SteeringError::Dimension(format!(
                "assemblage shapes (r,s,d)=({},{},{}) and ({},{},{})",
                self.r, self.s, self.d, other.r, other.s, other.d
            )));
        }
        Ok(())
    }

    /// `μ·a1 + (1−μ)·a2`, member-wise.
    pub fn mix(a1: &Self, a2: &Self, mu: f64) -> Result<Self> {
        a1.check_same_shape(a2)?;
        if !(0.0..=1.0).contains(&mu) {
            return Err(SteeringError::Precondition(format!("mixing weight {mu} outside [0,1]")));
        }
        let members = a1
            .members
            .iter()
            .zip(&a2.members)
            .map(|(m1, m2)| &m1.scaled(mu) + &m2.scaled(1.0 - mu))
            .collect();
        Ok(Self { members, ..a1.clone() })
    }

    /// Member-wise sum without validation (branch accumulation).
    pub fn add_unchecked(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let members = self.members.iter().zip(&other.members).map(|(m1, m2)| m1 + m2).collect();
        Ok(Self { members, ..self.clone() })
    }

    /// Largest member-wise Frobenius distance.
    pub fn max_distance(&self, other: &Self) -> f64 {
        if (self.r, self.s, self.d) != (other.r, other.s, other.d) {
            return f64::INFINITY;
        }
        self.members
            .iter()
            .zip(&other.members)
            .map(|(m1, m2)| m1.frobenius_distance(m2))
            .fold(0.0, f64::max)
    }

    /// `σ(a,x) = Tr_A[(M_{a|x} ⊗ I) ρ_AB]` for POVMs given per input.
    pub fn from_state_and_measurements(rho_ab: &HermitianMatrix, povms: &[Vec<HermitianMatrix>]) -> Result<Self> {
        let s = povms.len();
        if s == 0 || povms[0].is_empty() {
            return Err(SteeringError::InvalidMeasurement("need at least one input and outcome".into()));
        }
        let r = povms[0].len();
        let d_a = povms[0][0].dim();
        if !rho_ab.dim().is_multiple_of(d_a) {
            return Err(SteeringError::Dimension(format!(
                "joint dimension {} is not a multiple of Alice's {d_a}",
                rho_ab.dim()
            )));
        }
        let d = rho_ab.dim() / d_a;
        let sp = rho_ab.eig()?;
        if sp.min() < -PSD_FLOOR || (rho_ab.trace() - 1.0).abs() > TRACE_TOL {
            return Err(SteeringError::InvalidState("joint state must be PSD with unit trace".into()));
        }
        for (x, povm) in povms.iter().enumerate() {
            if povm.len() != r {
                return Err(SteeringError::InvalidMeasurement(format!(
                    "input {x} has {} outcomes, expected {r}",
                    povm.len()
                )));
            }
            let mut total = HermitianMatrix::zeros(d_a);
            for (a, effect) in povm.iter().enumerate() {
                if effect.dim() != d_a {
                    return Err(SteeringError::Dimension(format!("effect ({a},{x}) has wrong dimension")));
                }
                if effect.min_eigenvalue()? < -PSD_FLOOR {
                    return Err(SteeringError::InvalidMeasurement(format!("effect ({a},{x}) is not PSD")));
                }
                total = &total + effect;
            }
            let residual = total.frobenius_distance(&HermitianMatrix::identity(d_a));
            if residual > 1e-10 {
                return Err(SteeringError::InvalidMeasurement(format!(
                    "POVM for input {x} is incomplete (residual {residual:.3e})"
                )));
            }
        }
        let rho = rho_ab.matrix();
        let mut members = Vec::with_capacity(r * s);
        for povm in povms {
            for effect in povm {
                let m = effect.matrix();
                let sigma = CMat::from_fn(d, d, |k, l| {
                    let mut acc = c(0.0, 0.0);
                    for i in 0..d_a {
                        for j in 0..d_a {
                            acc += m[(i, j)] * rho[(j * d + k, i * d + l)];
                        }
                    }
                    acc
                });
                members.push(HermitianMatrix::from_matrix_symmetrized(sigma));
            }
        }
        Self::new(r, s, d, members)
    }
}

/// Per input `x`, the block operator `Σ_a |a⟩⟨a| ⊗ σ(a,x)` (flag index outer).
#[derive(Clone, Debug)]
pub struct QuantumRepresentation {
    r: usize,
    d: usize,
    blocks: Vec<HermitianMatrix>,
}

impl QuantumRepresentation {
    pub fn block(&self, x: usize) -> &HermitianMatrix {
        &self.blocks[x]
    }

    pub fn blocks(&self) -> &[HermitianMatrix] {
        &self.blocks
    }

    /// Partial trace over the flag register.
    pub fn trace_out_flags(&self, x: usize) -> HermitianMatrix {
        let m = self.blocks[x].matrix();
        let mut acc = CMat::zeros(self.d, self.d);
        for a in 0..self.r {
            acc += m.view((a * self.d, a * self.d), (self.d, self.d));
        }
        HermitianMatrix::from_matrix_symmetrized(acc)
    }
}

/// Assemblage with rank-one members `P(a|x)·|ψ(a,x)⟩⟨ψ(a,x)|`.
#[derive(Clone, Debug)]
pub struct PureAssemblage {
    assemblage: Assemblage,
    vectors: Vec<CVec>,
    weights: Vec<f64>,
}

impl PureAssemblage {
    /// Vectors and weights are input-major; vectors are normalized here.
    pub fn new(r: usize, s: usize, vectors: Vec<CVec>, weights: Vec<f64>) -> Result<Self> {
        if vectors.len() != r * s || weights.len() != r * s {
            return Err(SteeringError::Dimension("pure assemblage needs r*s vectors and weights".into()));
        }
        let d = vectors[0].len();
        let mut unit = Vec::with_capacity(r * s);
        for v in vectors {
            let n = v.norm();
            if n == 0.0 || v.len() != d {
                return Err(SteeringError::InvalidState("pure member vector is zero or misshapen".into()));
            }
            unit.push(v / c(n, 0.0));
        }
        let members = unit
            .iter()
            .zip(&weights)
            .map(|(v, w)| HermitianMatrix::projector(v).scaled(*w))
            .collect();
        let assemblage = Assemblage::new(r, s, d, members)?;
        Ok(Self { assemblage, vectors: unit, weights })
    }

    /// Recovers vectors from an assemblage whose members are rank one
    /// within 1e-10; members of zero weight get the first basis vector.
    pub fn from_assemblage(ass: &Assemblage) -> Result<Self> {
        let mut vectors = Vec::new();
        let mut weights = Vec::new();
        for x in 0..ass.s() {
            for a in 0..ass.r() {
                let m = ass.member(a, x);
                let sp = m.eig()?;
                let w = sp.max();
                let v = sp.eigenvectors.column(ass.d() - 1).into_owned();
                let rebuilt = HermitianMatrix::projector(&v).scaled(w);
                if rebuilt.frobenius_distance(m) > 1e-10 {
                    return Err(SteeringError::Precondition(format!("member ({a},{x}) is not rank one")));
                }
                if w < MIN_MEMBER_TRACE {
                    let mut e0 = CVec::zeros(ass.d());
                    e0[0] = c(1.0, 0.0);
                    vectors.push(e0);
                    weights.push(0.0);
                } else {
                    vectors.push(v);
                    weights.push(w);
                }
            }
        }
        Ok(Self { assemblage: ass.clone(), vectors, weights })
    }

    pub fn assemblage(&self) -> &Assemblage {
        &self.assemblage
    }

    pub fn vector(&self, a: usize, x: usize) -> &CVec {
        &self.vectors[x * self.assemblage.r() + a]
    }

    pub fn weight(&self, a: usize, x: usize) -> f64 {
        self.weights[x * self.assemblage.r() + a]
    }

    pub fn r(&self) -> usize {
        self.assemblage.r()
    }

    pub fn s(&self) -> usize {
        self.assemblage.s()
    }

    pub fn d(&self) -> usize {
        self.assemblage.d()
    }
}

/// Maximally entangled two-qubit state with Alice measuring Z (x=0) and
/// X (x=1): the canonical steerable fixture.
pub fn singlet_xz() -> Assemblage {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut phi = CVec::zeros(4);
    phi[0] = c(h, 0.0);
    phi[3] = c(h, 0.0);
    let rho = HermitianMatrix::projector(&phi);
    let z0 = HermitianMatrix::diagonal(&[1.0, 0.0]);
    let z1 = HermitianMatrix::diagonal(&[0.0, 1.0]);
    let plus = HermitianMatrix::from_matrix_symmetrized(CMat::from_element(2, 2, c(0.5, 0.0)));
    let minus = &HermitianMatrix::identity(2) - &plus;
    Assemblage::from_state_and_measurements(&rho, &[vec![z0, z1], vec![plus, minus]])
        .expect("fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;

    #[test]
    fn input_independent_assemblage() {
        let ass = Assemblage::from_fn(2, 3, 2, |a, _| {
            if a == 0 {
                HermitianMatrix::maximally_mixed(2)
            } else {
                HermitianMatrix::zeros(2)
            }
        })
        .unwrap();
        assert!((ass.probability(0, 2) - 1.0).abs() < 1e-15);
        assert!(ass.normalized_state(1, 0).is_none());
    }

    #[test]
    fn signaling_is_rejected() {
        let err = Assemblage::from_fn(2, 2, 2, |a, x| {
            let base = HermitianMatrix::maximally_mixed(2).scaled(0.5);
            if a == 0 && x == 1 {
                &base + &HermitianMatrix::diagonal(&[0.1, 0.0])
            } else {
                base
            }
        })
        .unwrap_err();
        assert!(matches!(err, SteeringError::Signaling { x0: 0, x1: 1, .. }));
    }

    #[test]
    fn missing_member_is_rejected() {
        let entries = vec![(0, 0, HermitianMatrix::maximally_mixed(2))];
        assert!(matches!(Assemblage::build(2, 1, 2, entries), Err(SteeringError::Dimension(_))));
    }

    #[test]
    fn singlet_xz_members() {
        let ass = singlet_xz();
        assert!((ass.trace() - 1.0).abs() < 1e-12);
        assert!(ass.bob_marginal().frobenius_distance(&HermitianMatrix::maximally_mixed(2)) < 1e-12);
        for x in 0..2 {
            for a in 0..2 {
                assert!((ass.probability(a, x) - 0.5).abs() < 1e-12);
            }
        }
        let z0 = HermitianMatrix::diagonal(&[0.5, 0.0]);
        assert!(ass.member(0, 0).frobenius_distance(&z0) < 1e-12);
        let plus = HermitianMatrix::from_matrix_symmetrized(CMat::from_element(2, 2, c(0.25, 0.0)));
        assert!(ass.member(0, 1).frobenius_distance(&plus) < 1e-12);
    }

    #[test]
    fn product_state_gives_proportional_members() {
        let mut rng = random::rng_from_seed(4);
        let rho_a = random::random_density(2, &mut rng);
        let rho_b = random::random_density(3, &mut rng);
        let m0 = random::random_density(2, &mut rng);
        let m1 = &HermitianMatrix::identity(2) - &m0;
        let ass = Assemblage::from_state_and_measurements(&rho_a.kron(&rho_b), &[vec![m0.clone(), m1]]).unwrap();
        let p0 = ass.probability(0, 0);
        assert!(ass.member(0, 0).frobenius_distance(&rho_b.scaled(p0)) < 1e-12);

        let trivial = Assemblage::from_state_and_measurements(&rho_a.kron(&rho_b), &[vec![HermitianMatrix::identity(2)]])
            .unwrap();
        assert!(trivial.member(0, 0).frobenius_distance(&rho_b) < 1e-12);
    }

    #[test]
    fn incomplete_povm_is_rejected() {
        let rho = HermitianMatrix::maximally_mixed(4);
        let povm = vec![HermitianMatrix::diagonal(&[1.0, 0.0])];
        assert!(matches!(
            Assemblage::from_state_and_measurements(&rho, &[povm]),
            Err(SteeringError::InvalidMeasurement(_))
        ));
    }

    #[test]
    fn representation_and_mixing() {
        let ass = singlet_xz();
        let rep = ass.quantum_representation();
        for x in 0..2 {
            assert!(rep.trace_out_flags(x).frobenius_distance(&ass.bob_marginal()) < 1e-12);
        }
        let same = Assemblage::mix(&ass, &ass, 0.3).unwrap();
        assert!(same.max_distance(&ass) < 1e-15);
        let half = ass.scaled(0.5);
        assert!((half.bob_marginal().trace() - 0.5).abs() < 1e-15);
        assert_eq!(Assemblage::zeros(2, 2, 2).trace(), 0.0);
    }

    #[test]
    fn pure_round_trip() {
        let pure = PureAssemblage::from_assemblage(&singlet_xz()).unwrap();
        let rebuilt = PureAssemblage::new(2, 2, pure.vectors.clone(), pure.weights.clone()).unwrap();
        assert!(rebuilt.assemblage().max_distance(&singlet_xz()) < 1e-10);
    }
}
