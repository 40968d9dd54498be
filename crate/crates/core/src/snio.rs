//! Steering non-increasing operations: a Kraus set on Bob's side plus a
//! classical wiring of Alice's input and output conditioned on the branch.

use rand::Rng;

use crate::assemblage::Assemblage;
use crate::error::{Result, SteeringError};
use crate::linalg::{c, CMat, HermitianMatrix, ProbTable, PROB_TOL};
use crate::random;

pub const KRAUS_TOL: f64 = 1e-9;
pub const MAX_GENERATED_BRANCHES: usize = 16;
pub const MAX_GENERATED_DIM: usize = 8;

/// Operators `K_ω : C^d → C^{d_f}` with `Σ K_ω†K_ω ⪯ I`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausSet {
    ops: Vec<CMat>,
}

impl KrausSet {
    pub fn new(ops: Vec<CMat>) -> Result<Self> {
        let set = Self::from_ops_unchecked(ops)?;
        let min = set.deficiency()?.min();
        if min < -KRAUS_TOL {
            return Err(SteeringError::InvalidMeasurement(format!(
                "Σ K†K exceeds the identity (deficiency eigenvalue {min:.3e})"
            )));
        }
        Ok(set)
    }

    fn from_ops_unchecked(ops: Vec<CMat>) -> Result<Self> {
        let Some(first) = ops.first() else {
            return Err(SteeringError::InvalidMeasurement("empty Kraus set".into()));
        };
        let shape = first.shape();
        if ops.iter().any(|k| k.shape() != shape) || shape.0 == 0 || shape.1 == 0 {
            return Err(SteeringError::Dimension("Kraus operators must share a nonempty shape".into()));
        }
        Ok(Self { ops })
    }

    pub fn ops(&self) -> &[CMat] {
        &self.ops
    }

    pub fn op(&self, omega: usize) -> &CMat {
        &self.ops[omega]
    }

    pub fn n_branches(&self) -> usize {
        self.ops.len()
    }

    pub fn d_in(&self) -> usize {
        self.ops[0].ncols()
    }

    pub fn d_out(&self) -> usize {
        self.ops[0].nrows()
    }

    /// Spectrum of `I − Σ K_ω†K_ω`.
    pub fn deficiency(&self) -> Result<crate::linalg::Spectrum> {
        let d = self.d_in();
        let mut total = CMat::identity(d, d);
        for k in &self.ops {
            total -= k.adjoint() * k;
        }
        HermitianMatrix::from_matrix_symmetrized(total).eig()
    }

    /// Trace preserving within [`KRAUS_TOL`].
    pub fn is_deterministic(&self) -> bool {
        self.deficiency()
            .map(|sp| sp.eigenvalues.iter().all(|e| e.abs() <= KRAUS_TOL))
            .unwrap_or(false)
    }
}

/// Dense wiring tables. `p_x[ω][x_f][x] = P(x|x_f,ω)` and
/// `p_af[ω][x_f][x][a][a_f] = P(a_f|a,x,ω,x_f)`, both stored flat in that
/// nesting order.
#[derive(Clone, Debug, PartialEq)]
pub struct Wiring {
    s: usize,
    r: usize,
    s_f: usize,
    r_f: usize,
    n_omega: usize,
    p_x: Vec<f64>,
    p_af: Vec<f64>,
}

impl Wiring {
    pub fn new(s: usize, r: usize, s_f: usize, r_f: usize, n_omega: usize, p_x: Vec<f64>, p_af: Vec<f64>) -> Result<Self> {
        let w = Self::from_tables_unchecked(s, r, s_f, r_f, n_omega, p_x, p_af)?;
        let (rx, raf) = w.residuals();
        if rx > PROB_TOL || raf > PROB_TOL {
            return Err(SteeringError::InvalidProbTable(format!(
                "wiring normalization residuals {rx:.3e} (input) and {raf:.3e} (output)"
            )));
        }
        Ok(w)
    }

    fn from_tables_unchecked(
        s: usize,
        r: usize,
        s_f: usize,
        r_f: usize,
        n_omega: usize,
        p_x: Vec<f64>,
        p_af: Vec<f64>,
    ) -> Result<Self> {
        if [s, r, s_f, r_f, n_omega].contains(&0) {
            return Err(SteeringError::Dimension("wiring sizes must be positive".into()));
        }
        if p_x.len() != n_omega * s_f * s || p_af.len() != n_omega * s_f * s * r * r_f {
            return Err(SteeringError::Dimension("wiring table sizes do not match (s, r, s_f, r_f, n_ω)".into()));
        }
        if p_x.iter().chain(&p_af).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SteeringError::InvalidProbTable("negative or non-finite wiring entry".into()));
        }
        Ok(Self { s, r, s_f, r_f, n_omega, p_x, p_af })
    }

    pub fn identity(r: usize, s: usize, n_omega: usize) -> Self {
        Self::from_fns(s, r, s, r, n_omega, |x, xf, _| (x == xf) as u8 as f64, |af, a, _, _, _| (af == a) as u8 as f64)
    }

    /// Builds tables from `px(x, x_f, ω)` and `paf(a_f, a, x, ω, x_f)`
    /// without validation.
    pub fn from_fns<F, G>(s: usize, r: usize, s_f: usize, r_f: usize, n_omega: usize, px: F, paf: G) -> Self
    where
        F: Fn(usize, usize, usize) -> f64,
        G: Fn(usize, usize, usize, usize, usize) -> f64,
    {
        let mut p_x = Vec::with_capacity(n_omega * s_f * s);
        let mut p_af = Vec::with_capacity(n_omega * s_f * s * r * r_f);
        for w in 0..n_omega {
            for xf in 0..s_f {
                for x in 0..s {
                    p_x.push(px(x, xf, w));
                    for a in 0..r {
                        for af in 0..r_f {
                            p_af.push(paf(af, a, x, w, xf));
                        }
                    }
                }
            }
        }
        Self { s, r, s_f, r_f, n_omega, p_x, p_af }
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn s_f(&self) -> usize {
        self.s_f
    }

    pub fn r_f(&self) -> usize {
        self.r_f
    }

    pub fn n_omega(&self) -> usize {
        self.n_omega
    }

    /// `P(x|x_f,ω)`.
    pub fn p_x(&self, x: usize, x_f: usize, omega: usize) -> f64 {
        self.p_x[(omega * self.s_f + x_f) * self.s + x]
    }

    /// `P(a_f|a,x,ω,x_f)`.
    pub fn p_af(&self, a_f: usize, a: usize, x: usize, omega: usize, x_f: usize) -> f64 {
        self.p_af[(((omega * self.s_f + x_f) * self.s + x) * self.r + a) * self.r_f + a_f]
    }

    pub fn p_x_flat(&self) -> &[f64] {
        &self.p_x
    }

    pub fn p_af_flat(&self) -> &[f64] {
        &self.p_af
    }

    /// `P_{X|X_fΩ}` with axes `[x, x_f, ω]`.
    pub fn p_x_table(&self) -> ProbTable {
        let values = (0..self.s)
            .flat_map(|x| (0..self.s_f).flat_map(move |xf| (0..self.n_omega).map(move |w| (x, xf, w))))
            .map(|(x, xf, w)| self.p_x(x, xf, w))
            .collect();
        ProbTable::new(vec![self.s, self.s_f, self.n_omega], values, crate::linalg::Normalization::Conditional)
            .expect("validated at construction")
    }

    /// `P_{A_f|AXΩX_f}` with axes `[a_f, a, x, ω, x_f]`.
    pub fn p_af_table(&self) -> ProbTable {
        ProbTable::conditional_from_fn(vec![self.r_f, self.r, self.s, self.n_omega, self.s_f], |i| {
            self.p_af(i[0], i[1], i[2], i[3], i[4])
        })
        .expect("validated at construction")
    }

    /// Largest normalization residuals of the two tables.
    pub fn residuals(&self) -> (f64, f64) {
        let rx = self.p_x.chunks(self.s).map(|c| (c.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
        let raf = self.p_af.chunks(self.r_f).map(|c| (c.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
        (rx, raf)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnioMap {
    kraus: KrausSet,
    wiring: Wiring,
}

/// Output of [`SnioMap::validate`].
#[derive(Clone, Debug)]
pub struct SnioDiagnostics {
    /// Eigenvalues of `I − Σ K†K`, ascending.
    pub deficiency: Vec<f64>,
    pub deterministic: bool,
    pub p_x_residual: f64,
    pub p_af_residual: f64,
    pub valid: bool,
}

impl SnioMap {
    pub fn new(kraus: KrausSet, wiring: Wiring) -> Result<Self> {
        if kraus.n_branches() != wiring.n_omega {
            return Err(SteeringError::Dimension(format!(
                "{} Kraus operators but wiring has {} branches",
                kraus.n_branches(),
                wiring.n_omega
            )));
        }
        Ok(Self { kraus, wiring })
    }

    /// Builds without checking normalization or the Kraus bound; use
    /// [`SnioMap::validate`] to inspect such maps.
    pub fn from_parts_unchecked(ops: Vec<CMat>, wiring: Wiring) -> Result<Self> {
        Self::new(KrausSet::from_ops_unchecked(ops)?, wiring)
    }

    pub fn kraus(&self) -> &KrausSet {
        &self.kraus
    }

    pub fn wiring(&self) -> &Wiring {
        &self.wiring
    }

    pub fn n_branches(&self) -> usize {
        self.kraus.n_branches()
    }

    pub fn is_deterministic(&self) -> bool {
        self.kraus.is_deterministic()
    }

    pub fn validate(&self) -> SnioDiagnostics {
        let deficiency = self.kraus.deficiency().map(|sp| sp.eigenvalues).unwrap_or_default();
        let (p_x_residual, p_af_residual) = self.wiring.residuals();
        let kraus_ok = deficiency.first().is_some_and(|m| *m >= -KRAUS_TOL);
        let deterministic = kraus_ok && deficiency.iter().all(|e| e.abs() <= KRAUS_TOL);
        SnioDiagnostics {
            valid: kraus_ok && p_x_residual <= PROB_TOL && p_af_residual <= PROB_TOL,
            deficiency,
            deterministic,
            p_x_residual,
            p_af_residual,
        }
    }

    fn check_input(&self, ass: &Assemblage) -> Result<()> {
        let w = &self.wiring;
        if (ass.r(), ass.s(), ass.d()) != (w.r, w.s, self.kraus.d_in()) {
            return Err(SteeringError::Dimension(format!(
                "SNIO expects (r,s,d)=({},{},{}), assemblage has ({},{},{})",
                w.r,
                w.s,
                self.kraus.d_in(),
                ass.r(),
                ass.s(),
                ass.d()
            )));
        }
        Ok(())
    }

    /// Unnormalized branch `ω`:
    /// `σ_f(a_f,x_f) = Σ_{a,x} P(x|x_f,ω) P(a_f|a,x,ω,x_f) K_ω σ(a,x) K_ω†`.
    pub fn apply_branch(&self, omega: usize, ass: &Assemblage) -> Result<Assemblage> {
        self.check_input(ass)?;
        if omega >= self.n_branches() {
            return Err(SteeringError::Dimension(format!("branch {omega} of {}", self.n_branches())));
        }
        let w = &self.wiring;
        let k = self.kraus.op(omega);
        let d_f = self.kraus.d_out();
        let conj: Vec<CMat> = ass.members().iter().map(|m| k * m.matrix() * k.adjoint()).collect();
        let mut members = Vec::with_capacity(w.r_f * w.s_f);
        for xf in 0..w.s_f {
            for af in 0..w.r_f {
                let mut acc = CMat::zeros(d_f, d_f);
                for x in 0..w.s {
                    let px = w.p_x(x, xf, omega);
                    if px == 0.0 {
                        continue;
                    }
                    for a in 0..w.r {
                        let coeff = px * w.p_af(af, a, x, omega, xf);
                        if coeff != 0.0 {
                            acc += &conj[x * w.r + a] * c(coeff, 0.0);
                        }
                    }
                }
                members.push(HermitianMatrix::from_matrix_symmetrized(acc));
            }
        }
        Assemblage::from_members_unchecked(w.r_f, w.s_f, d_f, members)
    }

    /// Sum of all branches.
    pub fn apply(&self, ass: &Assemblage) -> Result<Assemblage> {
        let mut total = self.apply_branch(0, ass)?;
        for omega in 1..self.n_branches() {
            total = total.add_unchecked(&self.apply_branch(omega, ass)?)?;
        }
        Ok(total)
    }

    /// `P_Ω(ω) = Tr[K_ω ρ_B K_ω†]`.
    pub fn branch_probability(&self, omega: usize, ass: &Assemblage) -> Result<f64> {
        self.check_input(ass)?;
        Ok(ass.bob_marginal().conjugate_by(self.kraus.op(omega)).trace())
    }

    pub fn identity(r: usize, s: usize, d: usize) -> Self {
        Self {
            kraus: KrausSet { ops: vec![CMat::identity(d, d)] },
            wiring: Wiring::identity(r, s, 1),
        }
    }

    /// `second ∘ self`: branches are pairs `(ω₁, ω₂)` flattened as
    /// `ω₁·n₂ + ω₂`, Kraus operators multiply, and the wiring tables chain
    /// through the intermediate input and output.
    pub fn then(&self, second: &SnioMap) -> Result<SnioMap> {
        let (w1, w2) = (&self.wiring, &second.wiring);
        if (w2.s, w2.r, second.kraus.d_in()) != (w1.s_f, w1.r_f, self.kraus.d_out()) {
            return Err(SteeringError::Dimension("SNIO outputs do not match the next SNIO's inputs".into()));
        }
        let (n1, n2) = (self.n_branches(), second.n_branches());
        let mut ops = Vec::with_capacity(n1 * n2);
        for o1 in 0..n1 {
            for o2 in 0..n2 {
                ops.push(second.kraus.op(o2) * self.kraus.op(o1));
            }
        }
        let (s, r, s_f, r_f) = (w1.s, w1.r, w2.s_f, w2.r_f);
        let px = |x: usize, x2: usize, o: usize| -> f64 {
            let (o1, o2) = (o / n2, o % n2);
            (0..w1.s_f).map(|x1| w2.p_x(x1, x2, o2) * w1.p_x(x, x1, o1)).sum()
        };
        let joint = |a2: usize, a: usize, x: usize, o: usize, x2: usize| -> f64 {
            let (o1, o2) = (o / n2, o % n2);
            (0..w1.s_f)
                .map(|x1| {
                    let route = w2.p_x(x1, x2, o2) * w1.p_x(x, x1, o1);
                    if route == 0.0 {
                        return 0.0;
                    }
                    route
                        * (0..w1.r_f)
                            .map(|a1| w1.p_af(a1, a, x, o1, x1) * w2.p_af(a2, a1, x1, o2, x2))
                            .sum::<f64>()
                })
                .sum()
        };
        let wiring = Wiring::from_fns(s, r, s_f, r_f, n1 * n2, px, |a2, a, x, o, x2| {
            let norm = px(x, x2, o);
            if norm > 0.0 {
                joint(a2, a, x, o, x2) / norm
            } else {
                1.0 / r_f as f64
            }
        });
        let wiring = renormalize(wiring);
        SnioMap::new(KrausSet::new(ops)?, wiring)
    }
}

/// Removes round-off from composed tables so they pass the strict check.
fn renormalize(mut w: Wiring) -> Wiring {
    for chunk in w.p_x.chunks_mut(w.s) {
        let t: f64 = chunk.iter().sum();
        chunk.iter_mut().for_each(|v| *v /= t);
    }
    for chunk in w.p_af.chunks_mut(w.r_f) {
        let t: f64 = chunk.iter().sum();
        chunk.iter_mut().for_each(|v| *v /= t);
    }
    w
}

/// Parameters for [`random_snio`].
#[derive(Clone, Debug)]
pub struct RandomSnioSpec {
    pub r: usize,
    pub s: usize,
    pub d: usize,
    pub r_f: usize,
    pub s_f: usize,
    pub d_f: usize,
    pub n_branches: usize,
    /// Trace-preserving Kraus set if true, strictly sub-normalized otherwise.
    pub deterministic: bool,
    /// Dirichlet concentration of the wiring tables; small values give
    /// nearly deterministic wirings.
    pub concentration: f64,
}

impl RandomSnioSpec {
    pub fn square(r: usize, s: usize, d: usize, n_branches: usize) -> Self {
        Self { r, s, d, r_f: r, s_f: s, d_f: d, n_branches, deterministic: true, concentration: 1.0 }
    }
}

/// Random SNIO: Kraus operators are the row blocks of a Haar isometry
/// (times a random contraction in the stochastic case); wirings are
/// Dirichlet tables.
pub fn random_snio<R: Rng + ?Sized>(spec: &RandomSnioSpec, rng: &mut R) -> Result<SnioMap> {
    let RandomSnioSpec { r, s, d, r_f, s_f, d_f, n_branches: n, .. } = *spec;
    if [r, s, d, r_f, s_f, d_f, n].contains(&0) {
        return Err(SteeringError::Dimension("random SNIO sizes must be positive".into()));
    }
    if n > MAX_GENERATED_BRANCHES || d.max(d_f) > MAX_GENERATED_DIM {
        return Err(SteeringError::SizeCap(format!(
            "generated SNIOs are limited to {MAX_GENERATED_BRANCHES} branches and dimension {MAX_GENERATED_DIM}"
        )));
    }
    if n * d_f < d {
        return Err(SteeringError::Precondition(format!(
            "{n} branches of dimension {d_f} cannot form an isometry from dimension {d}"
        )));
    }
    let v = random::haar_isometry(n * d_f, d, rng);
    let contraction = if spec.deterministic {
        CMat::identity(d, d)
    } else {
        let u = random::haar_unitary(d, rng);
        let diag = CMat::from_fn(d, d, |i, j| if i == j { c(rng.random::<f64>().sqrt(), 0.0) } else { c(0.0, 0.0) });
        &u * diag * u.adjoint()
    };
    let ops = (0..n).map(|w| v.rows(w * d_f, d_f) * &contraction).collect();
    let alpha = spec.concentration;
    let mut p_x = Vec::with_capacity(n * s_f * s);
    let mut p_af = Vec::with_capacity(n * s_f * s * r * r_f);
    for _ in 0..n {
        for _ in 0..s_f {
            p_x.extend(random::dirichlet(s, alpha, rng));
            for _ in 0..s {
                for _ in 0..r {
                    p_af.extend(random::dirichlet(r_f, alpha, rng));
                }
            }
        }
    }
    let wiring = renormalize(Wiring::from_tables_unchecked(s, r, s_f, r_f, n, p_x, p_af)?);
    SnioMap::new(KrausSet::new(ops)?, wiring)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assemblage::singlet_xz;

    #[test]
    fn identity_is_neutral() {
        let ass = singlet_xz();
        let id = SnioMap::identity(2, 2, 2);
        let diag = id.validate();
        assert!(diag.valid && diag.deterministic);
        assert_eq!(diag.p_x_residual, 0.0);
        assert!(id.apply_branch(0, &ass).unwrap().max_distance(&ass) < 1e-15);
        assert!((id.branch_probability(0, &ass).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn projector_branch() {
        let k0 = CMat::from_fn(2, 2, |i, j| if i == 0 && j == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let map = SnioMap::new(KrausSet::new(vec![k0]).unwrap(), Wiring::identity(2, 2, 1)).unwrap();
        let diag = map.validate();
        assert!(diag.valid && !diag.deterministic);
        assert!((diag.deficiency[1] - 1.0).abs() < 1e-15);
        let ass = singlet_xz();
        assert!((map.branch_probability(0, &ass).unwrap() - 0.5).abs() < 1e-15);
        let out = map.apply_branch(0, &ass).unwrap();
        assert!((out.trace() - 0.5).abs() < 1e-15);
        for m in out.members() {
            let sp = m.eig().unwrap();
            assert!(sp.eigenvalues[0].abs() < 1e-15);
        }
    }

    #[test]
    fn relabeling_inputs() {
        let ass = singlet_xz();
        let swap = Wiring::from_fns(2, 2, 2, 2, 1, |x, xf, _| (x != xf) as u8 as f64, |af, a, _, _, _| (af == a) as u8 as f64);
        let map = SnioMap::new(KrausSet::new(vec![CMat::identity(2, 2)]).unwrap(), swap).unwrap();
        let out = map.apply(&ass).unwrap();
        out.validate().unwrap();
        assert!(out.member(1, 0).frobenius_distance(ass.member(1, 1)) < 1e-15);
    }

    #[test]
    fn split_identity_branches() {
        let ass = singlet_xz();
        let k = CMat::identity(2, 2) * c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let map = SnioMap::new(KrausSet::new(vec![k.clone(), k]).unwrap(), Wiring::identity(2, 2, 2)).unwrap();
        assert!(map.is_deterministic());
        assert!(map.apply(&ass).unwrap().max_distance(&ass) < 1e-15);
    }

    #[test]
    fn oversized_kraus_is_rejected() {
        let k = CMat::identity(2, 2) * c(1.1, 0.0);
        assert!(KrausSet::new(vec![k]).is_err());
    }

    #[test]
    fn random_generator_is_reproducible_and_valid() {
        let spec = RandomSnioSpec { r_f: 3, s_f: 2, d_f: 3, ..RandomSnioSpec::square(2, 2, 2, 3) };
        let a = random_snio(&spec, &mut random::rng_from_seed(8)).unwrap();
        let b = random_snio(&spec, &mut random::rng_from_seed(8)).unwrap();
        assert_eq!(a, b);
        let diag = a.validate();
        assert!(diag.valid && diag.deterministic);
        let stoch = RandomSnioSpec { deterministic: false, ..spec };
        let m = random_snio(&stoch, &mut random::rng_from_seed(9)).unwrap();
        assert!(m.validate().valid);
    }

    #[test]
    fn composition_matches_sequential_application() {
        let mut rng = random::rng_from_seed(21);
        let ass = singlet_xz();
        let first = random_snio(&RandomSnioSpec { r_f: 3, d_f: 3, ..RandomSnioSpec::square(2, 2, 2, 2) }, &mut rng).unwrap();
        let second = random_snio(&RandomSnioSpec { concentration: 0.3, ..RandomSnioSpec::square(3, 2, 3, 3) }, &mut rng).unwrap();
        let composed = first.then(&second).unwrap();
        assert!(composed.validate().valid);
        let direct = second.apply(&first.apply(&ass).unwrap()).unwrap();
        assert!(composed.apply(&ass).unwrap().max_distance(&direct) < 1e-12);
        let b1 = second.apply_branch(1, &first.apply_branch(0, &ass).unwrap()).unwrap();
        assert!(composed.apply_branch(1, &ass).unwrap().max_distance(&b1) < 1e-12);
    }
}
