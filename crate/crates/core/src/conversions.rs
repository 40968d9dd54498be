//! Conversions between pure assemblages with two qubit inputs and outputs.
//!
//! A pure orthogonal assemblage `Ψ′` is reachable from `Ψ` by a stochastic
//! SNIO exactly when `Ψ′` is unsteerable, or when both share the output
//! distribution and the overlaps `|⟨ψ(a,0)|ψ(a,1)⟩|`. Positive verdicts
//! carry an explicit SNIO that is checked by applying it.

use nalgebra::{DMatrix, Matrix2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::assemblage::{Assemblage, PureAssemblage};
use crate::error::{Result, SteeringError};
use crate::lhs::{enumerate_deterministic_strategies, is_lhs, DeterministicStrategy, DEFAULT_MEMBERSHIP_TOL};
use crate::linalg::{c, CMat, CVec, HermitianMatrix, C64};
use crate::par::{map_indexed, ExecMode};
use crate::random::{derive_seed, rng_from_seed};
use crate::snio::{KrausSet, SnioMap, Wiring};

pub const ORTHOGONALITY_TOL: f64 = 1e-9;
/// Tolerance for comparing output distributions and overlap profiles.
pub const PROFILE_TOL: f64 = 1e-9;
/// Largest member-wise distance a returned witness may leave.
pub const WITNESS_RESIDUAL: f64 = 1e-8;
const NORMALIZATION_TOL: f64 = 1e-9;

/// `|⟨ψ(a,0)|ψ(a,1)⟩|` for each outcome `a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapProfile(pub Vec<f64>);

impl OverlapProfile {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn max_difference(&self, other: &Self) -> f64 {
        if self.0.len() != other.0.len() {
            return f64::INFINITY;
        }
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

pub fn overlap_profile(psi: &PureAssemblage) -> Result<OverlapProfile> {
    if psi.s() != 2 {
        return Err(SteeringError::Precondition(format!("overlap profile needs two inputs, got {}", psi.s())));
    }
    let values = (0..psi.r())
        .map(|a| psi.vector(a, 0).dotc(psi.vector(a, 1)).norm().min(1.0))
        .collect();
    Ok(OverlapProfile(values))
}

/// Qubit members `cos φ_{ax}|0⟩ + e^{iα_{ax}} sin φ_{ax}|1⟩` with weights
/// `P(a,x)`; all three tables are input-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanePureAssemblage {
    pub r: usize,
    pub s: usize,
    pub phi: Vec<f64>,
    pub alpha: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PlanePureAssemblage {
    /// The `Ψ^θ` family: the computational basis for `x = 0` and the basis
    /// rotated by `θ` for `x = 1`, uniform weights.
    pub fn theta(theta: f64) -> Self {
        let q = std::f64::consts::FRAC_PI_2;
        Self {
            r: 2,
            s: 2,
            phi: vec![0.0, q, theta, theta + q],
            alpha: vec![0.0; 4],
            weights: vec![0.5; 4],
        }
    }

    pub fn vector(&self, a: usize, x: usize) -> CVec {
        let i = x * self.r + a;
        let (phi, alpha) = (self.phi[i], self.alpha[i]);
        CVec::from_vec(vec![c(phi.cos(), 0.0), C64::from_polar(phi.sin(), alpha)])
    }

    pub fn to_pure(&self) -> Result<PureAssemblage> {
        let n = self.r * self.s;
        if self.phi.len() != n || self.alpha.len() != n || self.weights.len() != n {
            return Err(SteeringError::Dimension("plane parametrization needs r*s angles, phases and weights".into()));
        }
        let mut vectors = Vec::with_capacity(n);
        for x in 0..self.s {
            for a in 0..self.r {
                vectors.push(self.vector(a, x));
            }
        }
        PureAssemblage::new(self.r, self.s, vectors, self.weights.clone())
    }
}

pub fn pure_orthogonal_from_angles(theta: f64) -> Result<PureAssemblage> {
    if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
        return Err(SteeringError::Precondition(format!("θ = {theta} is outside (0, π/2)")));
    }
    PlanePureAssemblage::theta(theta).to_pure()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConversionReason {
    /// The target is unsteerable and can be prepared from nothing.
    TargetLhs,
    /// Same distribution and overlaps: a unitary maps one onto the other.
    OverlapsMatch,
    DistributionMismatch,
    OverlapMismatch,
}

#[derive(Clone, Debug)]
pub struct ConversionVerdict {
    pub convertible: bool,
    pub reason: ConversionReason,
    pub witness: Option<SnioMap>,
    pub source_profile: OverlapProfile,
    pub target_profile: OverlapProfile,
    /// Member-wise distance between the witness image and the target.
    pub witness_residual: Option<f64>,
}

fn check_qubit_orthogonal(psi: &PureAssemblage, name: &str) -> Result<()> {
    if psi.d() != 2 || psi.s() != 2 || psi.r() != 2 {
        return Err(SteeringError::Precondition(format!(
            "{name} must have d = s = r = 2, got d = {}, s = {}, r = {}",
            psi.d(),
            psi.s(),
            psi.r()
        )));
    }
    let tr = psi.assemblage().trace();
    if (tr - 1.0).abs() > NORMALIZATION_TOL {
        return Err(SteeringError::Precondition(format!("{name} is not normalized (trace {tr})")));
    }
    for x in 0..2 {
        let ov = psi.vector(0, x).dotc(psi.vector(1, x)).norm();
        if ov > ORTHOGONALITY_TOL {
            return Err(SteeringError::Precondition(format!(
                "{name} is not orthogonal: |⟨ψ(0,{x})|ψ(1,{x})⟩| = {ov:.3e}"
            )));
        }
    }
    Ok(())
}

fn distribution_gap(psi: &PureAssemblage, target: &PureAssemblage) -> f64 {
    let mut gap = 0.0_f64;
    for x in 0..psi.s() {
        for a in 0..psi.r() {
            gap = gap.max((psi.weight(a, x) - target.weight(a, x)).abs());
        }
    }
    gap
}

pub fn can_convert(psi: &PureAssemblage, psi_prime: &PureAssemblage) -> Result<ConversionVerdict> {
    check_qubit_orthogonal(psi, "source")?;
    check_qubit_orthogonal(psi_prime, "target")?;
    let source_profile = overlap_profile(psi)?;
    let target_profile = overlap_profile(psi_prime)?;
    let verdict = |convertible, reason, witness: Option<SnioMap>| -> Result<ConversionVerdict> {
        let witness_residual = match &witness {
            Some(w) => Some(w.apply(psi.assemblage())?.max_distance(psi_prime.assemblage())),
            None => None,
        };
        Ok(ConversionVerdict {
            convertible,
            reason,
            witness,
            source_profile: source_profile.clone(),
            target_profile: target_profile.clone(),
            witness_residual,
        })
    };

    let membership = is_lhs(psi_prime.assemblage(), DEFAULT_MEMBERSHIP_TOL)?;
    if membership.is_member {
        let witness = preparation_snio(psi.assemblage(), psi_prime.assemblage())?;
        return verdict(true, ConversionReason::TargetLhs, Some(witness));
    }
    if distribution_gap(psi, psi_prime) > PROFILE_TOL {
        return verdict(false, ConversionReason::DistributionMismatch, None);
    }
    if source_profile.max_difference(&target_profile) > PROFILE_TOL {
        return verdict(false, ConversionReason::OverlapMismatch, None);
    }
    let witness = construct_unitary_snio(psi, psi_prime)?;
    verdict(true, ConversionReason::OverlapsMatch, Some(witness))
}

/// Single-Kraus SNIO `σ ↦ UσU†` with identity wirings mapping `psi` onto
/// `psi_prime`.
pub fn construct_unitary_snio(psi: &PureAssemblage, psi_prime: &PureAssemblage) -> Result<SnioMap> {
    check_qubit_orthogonal(psi, "source")?;
    check_qubit_orthogonal(psi_prime, "target")?;
    let gap = distribution_gap(psi, psi_prime);
    if gap > PROFILE_TOL {
        return Err(SteeringError::Precondition(format!("output distributions differ by {gap:.3e}")));
    }
    let diff = overlap_profile(psi)?.max_difference(&overlap_profile(psi_prime)?);
    if diff > PROFILE_TOL {
        return Err(SteeringError::Precondition(format!("overlap profiles differ by {diff:.3e}")));
    }

    // U = |ψ′(0,0)⟩⟨ψ(0,0)| + e^{iφ}|ψ′(1,0)⟩⟨ψ(1,0)|; φ aligns the x = 1 basis.
    let v = |p: &PureAssemblage, a: usize, x: usize| p.vector(a, x).clone();
    let mut best = (0.0, c(1.0, 0.0));
    for a in 0..2 {
        let num = v(psi, 1, 0).dotc(&v(psi, a, 1));
        let den = v(psi, 0, 0).dotc(&v(psi, a, 1));
        let num_t = v(psi_prime, 1, 0).dotc(&v(psi_prime, a, 1));
        let den_t = v(psi_prime, 0, 0).dotc(&v(psi_prime, a, 1));
        let z = num_t * den_t.conj() * den * num.conj();
        if z.norm() > best.0 {
            best = (z.norm(), z / z.norm());
        }
    }
    let phase = if best.0 > 1e-12 { best.1 } else { c(1.0, 0.0) };
    let mut u = v(psi_prime, 0, 0) * v(psi, 0, 0).adjoint() + v(psi_prime, 1, 0) * v(psi, 1, 0).adjoint() * phase;
    if let Some(z) = u.column(0).iter().find(|z| z.norm() > 1e-12).copied() {
        u *= z.conj() / z.norm();
    }

    let kraus = KrausSet::new(vec![u])?;
    let snio = SnioMap::new(kraus, Wiring::identity(2, 2, 1))?;
    let residual = snio.apply(psi.assemblage())?.max_distance(psi_prime.assemblage());
    if residual > WITNESS_RESIDUAL {
        return Err(SteeringError::Internal(format!("unitary witness leaves residual {residual:.3e}")));
    }
    Ok(snio)
}

/// Discards the input and prepares `target`, which must be unsteerable.
/// Branches are `(λ, i, j)`: Kraus `√μ_{λi} |v_{λi}⟩⟨j|` from the spectral
/// decomposition of `ω_λ`, with the output chosen by strategy `λ`.
pub fn preparation_snio(source: &Assemblage, target: &Assemblage) -> Result<SnioMap> {
    let strategies = enumerate_deterministic_strategies(target.r(), target.s())?;
    let membership = is_lhs(target, DEFAULT_MEMBERSHIP_TOL)?;
    let omegas = membership
        .witness
        .ok_or_else(|| SteeringError::Precondition("target has no LHS decomposition".into()))?;
    let omegas = polish_decomposition(target, &strategies, omegas)?;

    let (d, d_f) = (source.d(), target.d());
    let mut ops = Vec::new();
    let mut branch_strategy = Vec::new();
    let mut total = 0.0;
    for (lambda, w) in omegas.iter().enumerate() {
        let sp = w.eig()?;
        for i in 0..d_f {
            let mu = sp.eigenvalues[i];
            if mu <= 0.0 {
                continue;
            }
            total += mu;
            let vec = sp.eigenvectors.column(i).into_owned();
            for j in 0..d {
                let mut k = CMat::zeros(d_f, d);
                k.set_column(j, &(vec.clone() * c(mu.sqrt(), 0.0)));
                ops.push(k);
                branch_strategy.push(lambda);
            }
        }
    }
    if ops.is_empty() || total <= 0.0 {
        return Err(SteeringError::Internal("LHS decomposition is empty".into()));
    }
    for k in &mut ops {
        *k /= c(total.sqrt(), 0.0);
    }
    let n = ops.len();
    let (s, r) = (source.s(), source.r());
    let wiring = Wiring::from_fns(
        s,
        r,
        target.s(),
        target.r(),
        n,
        |_, _, _| 1.0 / s as f64,
        |af, _, _, w, xf| strategies[branch_strategy[w]].prob(af, xf),
    );
    let wiring = Wiring::new(s, r, target.s(), target.r(), n, wiring.p_x_flat().to_vec(), wiring.p_af_flat().to_vec())?;
    let snio = SnioMap::new(KrausSet::new(ops)?, wiring)?;
    let residual = snio.apply(source)?.max_distance(target);
    if residual > WITNESS_RESIDUAL {
        return Err(SteeringError::Internal(format!("preparation witness leaves residual {residual:.3e}")));
    }
    Ok(snio)
}

/// Least-change correction of `ω_λ` so that `Σ_λ D_λ(a|x) ω_λ = σ(a,x)`
/// holds to rounding; the constraint acts entry-wise, so one real
/// pseudo-inverse of the strategy matrix suffices.
fn polish_decomposition(
    ass: &Assemblage,
    strategies: &[DeterministicStrategy],
    omegas: Vec<HermitianMatrix>,
) -> Result<Vec<HermitianMatrix>> {
    let (r, s, d) = (ass.r(), ass.s(), ass.d());
    let dmat = DMatrix::from_fn(r * s, strategies.len(), |row, l| strategies[l].prob(row % r, row / r));
    let pinv = dmat
        .pseudo_inverse(1e-12)
        .map_err(|e| SteeringError::Internal(format!("pseudo-inverse failed: {e}")))?;
    let mut residuals = Vec::with_capacity(r * s);
    for x in 0..s {
        for a in 0..r {
            let mut acc = ass.member(a, x).matrix().clone();
            for (l, w) in omegas.iter().enumerate() {
                let p = strategies[l].prob(a, x);
                if p != 0.0 {
                    acc -= w.matrix() * c(p, 0.0);
                }
            }
            residuals.push(acc);
        }
    }
    Ok(omegas
        .into_iter()
        .enumerate()
        .map(|(l, w)| {
            let mut m = w.into_matrix();
            for (row, res) in residuals.iter().enumerate() {
                m += res * c(pinv[(l, row)], 0.0);
            }
            debug_assert_eq!(m.nrows(), d);
            HermitianMatrix::from_matrix_symmetrized(m)
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct BitSearchOptions {
    pub restarts: usize,
    pub iters: usize,
    pub seed: u64,
    pub mode: ExecMode,
}

impl Default for BitSearchOptions {
    fn default() -> Self {
        Self { restarts: 64, iters: 200, seed: 0, mode: ExecMode::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BitSearchEntry {
    pub theta: f64,
    /// Smallest member-wise Frobenius residual found.
    pub residual: f64,
}

// Single-branch parameters: K (8 reals), then logits for P(x|x_f)
// (index x_f*2 + x) and P(a_f|a,x,x_f) (index ((x_f*2 + x)*2 + a)*2 + a_f).
const N_K: usize = 8;
const N_PX: usize = 4;
const N_PARAMS: usize = N_K + N_PX + 16;
type M2 = Matrix2<C64>;

struct BitProblem {
    members: Vec<M2>,
    targets: Vec<M2>,
}

fn softmax2(l0: f64, l1: f64) -> (f64, f64) {
    let m = l0.max(l1);
    let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
    (e0 / (e0 + e1), e1 / (e0 + e1))
}

impl BitProblem {
    fn image(&self, p: &[f64]) -> Option<Vec<M2>> {
        let k = M2::new(c(p[0], p[1]), c(p[2], p[3]), c(p[4], p[5]), c(p[6], p[7]));
        let kd = k.adjoint();
        let conj: Vec<M2> = self.members.iter().map(|m| k * m * kd).collect();
        let mut out = vec![M2::zeros(); 4];
        for xf in 0..2 {
            let (q0, q1) = softmax2(p[N_K + xf * 2], p[N_K + xf * 2 + 1]);
            for (x, px) in [(0, q0), (1, q1)] {
                for a in 0..2 {
                    let base = N_K + N_PX + ((xf * 2 + x) * 2 + a) * 2;
                    let (f0, f1) = softmax2(p[base], p[base + 1]);
                    let m = conj[x * 2 + a];
                    out[xf * 2] += m * c(px * f0, 0.0);
                    out[xf * 2 + 1] += m * c(px * f1, 0.0);
                }
            }
        }
        let prob = (out[0] + out[1]).trace().re;
        if !(prob > 1e-14) {
            return None;
        }
        for m in &mut out {
            *m /= c(prob, 0.0);
        }
        Some(out)
    }

    fn objective(&self, p: &[f64]) -> f64 {
        match self.image(p) {
            Some(img) => img.iter().zip(&self.targets).map(|(m, t)| (m - t).norm_squared()).sum(),
            None => f64::INFINITY,
        }
    }

    fn residual(&self, p: &[f64]) -> f64 {
        match self.image(p) {
            Some(img) => img.iter().zip(&self.targets).map(|(m, t)| (m - t).norm()).fold(0.0, f64::max),
            None => f64::INFINITY,
        }
    }

    fn descend(&self, mut p: Vec<f64>, iters: usize) -> Vec<f64> {
        let mut f = self.objective(&p);
        let mut step = 1.0;
        let h = 1e-7;
        for _ in 0..iters {
            if !f.is_finite() || f < 1e-24 {
                break;
            }
            let mut g = vec![0.0; N_PARAMS];
            for i in 0..N_PARAMS {
                let mut q = p.clone();
                q[i] += h;
                let up = self.objective(&q);
                q[i] -= 2.0 * h;
                let down = self.objective(&q);
                g[i] = (up - down) / (2.0 * h);
            }
            let gn: f64 = g.iter().map(|v| v * v).sum();
            if !gn.is_finite() || gn < 1e-28 {
                break;
            }
            step *= 2.0;
            let mut improved = false;
            while step > 1e-12 {
                let q: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                let fq = self.objective(&q);
                if fq <= f - 1e-4 * step * gn {
                    p = q;
                    f = fq;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        p
    }
}

fn identity_params() -> Vec<f64> {
    let mut p = vec![0.0; N_PARAMS];
    p[0] = 1.0;
    p[6] = 1.0;
    for xf in 0..2 {
        for x in 0..2 {
            p[N_K + xf * 2 + x] = if x == xf { 30.0 } else { -30.0 };
            for a in 0..2 {
                for af in 0..2 {
                    p[N_K + N_PX + ((xf * 2 + x) * 2 + a) * 2 + af] = if af == a { 30.0 } else { -30.0 };
                }
            }
        }
    }
    p
}

/// Exploratory search for single-branch SNIOs taking `candidate` to each
/// `Ψ^θ`. Restart 0 starts from the identity map; the rest are random.
pub fn steering_bit_search(candidate: &Assemblage, thetas: &[f64], opts: &BitSearchOptions) -> Result<Vec<BitSearchEntry>> {
    if candidate.d() != 2 || candidate.s() != 2 || candidate.r() != 2 {
        return Err(SteeringError::Precondition("bit search needs d = s = r = 2".into()));
    }
    let to_m2 = |h: &HermitianMatrix| M2::from_fn(|i, j| h.get(i, j));
    let members: Vec<M2> = candidate.members().iter().map(to_m2).collect();
    thetas
        .iter()
        .map(|&theta| {
            let target = PlanePureAssemblage::theta(theta).to_pure()?;
            let problem = BitProblem { members: members.clone(), targets: target.assemblage().members().iter().map(to_m2).collect() };
            let label = format!("bit-search/{theta}");
            let residuals = map_indexed(opts.restarts.max(1), opts.mode, |i| {
                let start = if i == 0 {
                    identity_params()
                } else {
                    let mut rng = rng_from_seed(derive_seed(opts.seed, &label, i as u64));
                    (0..N_PARAMS)
                        .map(|j| if j < N_K { rng.random_range(-1.0..1.0) } else { rng.random_range(-3.0..3.0) })
                        .collect()
                };
                let p = problem.descend(start, opts.iters);
                problem.residual(&p)
            });
            let residual = residuals.into_iter().fold(f64::INFINITY, f64::min);
            Ok(BitSearchEntry { theta, residual })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    fn conjugated(psi: &PureAssemblage, u: &CMat) -> PureAssemblage {
        let mut vectors = Vec::new();
        let mut weights = Vec::new();
        for x in 0..2 {
            for a in 0..2 {
                vectors.push(u * psi.vector(a, x));
                weights.push(psi.weight(a, x));
            }
        }
        PureAssemblage::new(2, 2, vectors, weights).unwrap()
    }

    #[test]
    fn profiles_of_the_theta_family() {
        let p = overlap_profile(&pure_orthogonal_from_angles(FRAC_PI_4).unwrap()).unwrap();
        assert!((p.0[0] - FRAC_1_SQRT_2).abs() < 1e-15 && (p.0[1] - FRAC_1_SQRT_2).abs() < 1e-15);
        let t = 0.3;
        let p = overlap_profile(&pure_orthogonal_from_angles(t).unwrap()).unwrap();
        assert!((p.0[0] - t.cos()).abs() < 1e-15 && (p.0[1] - t.cos()).abs() < 1e-15);
        let same = PlanePureAssemblage { r: 2, s: 2, phi: vec![0.0, FRAC_PI_2, 0.0, FRAC_PI_2], alpha: vec![0.0; 4], weights: vec![0.5; 4] };
        assert_eq!(overlap_profile(&same.to_pure().unwrap()).unwrap().0, vec![1.0, 1.0]);
        assert!(pure_orthogonal_from_angles(0.0).is_err());
        assert!(pure_orthogonal_from_angles(FRAC_PI_2).is_err());
    }

    #[test]
    fn hadamard_angle_matches_singlet() {
        let psi = pure_orthogonal_from_angles(FRAC_PI_4).unwrap();
        let singlet = crate::assemblage::singlet_xz();
        assert!(psi.assemblage().max_distance(&singlet) < 1e-15);
    }

    #[test]
    fn different_angles_do_not_convert() {
        let a = pure_orthogonal_from_angles(FRAC_PI_6).unwrap();
        let b = pure_orthogonal_from_angles(FRAC_PI_3).unwrap();
        for (x, y) in [(&a, &b), (&b, &a)] {
            let v = can_convert(x, y).unwrap();
            assert!(!v.convertible);
            assert_eq!(v.reason, ConversionReason::OverlapMismatch);
            assert!(v.witness.is_none());
        }
    }

    #[test]
    fn identity_and_pauli_x_witnesses() {
        let psi = pure_orthogonal_from_angles(0.7).unwrap();
        let w = construct_unitary_snio(&psi, &psi).unwrap();
        let u = &w.kraus().ops()[0];
        assert!((u - CMat::identity(2, 2)).norm() < 1e-12);

        let x = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let flipped = conjugated(&psi, &x);
        let v = can_convert(&psi, &flipped).unwrap();
        assert!(v.convertible);
        assert_eq!(v.reason, ConversionReason::OverlapsMatch);
        assert!(v.witness_residual.unwrap() < 1e-10);
        let u = v.witness.unwrap().kraus().ops()[0].clone();
        assert!((u - &x).norm() < 1e-10);
    }

    #[test]
    fn rotated_family_recovers_generating_unitary() {
        let mut rng = rng_from_seed(11);
        let psi = pure_orthogonal_from_angles(1.1).unwrap();
        for _ in 0..10 {
            let g = crate::random::haar_unitary(2, &mut rng);
            let target = conjugated(&psi, &g);
            let w = construct_unitary_snio(&psi, &target).unwrap();
            let u = &w.kraus().ops()[0];
            let phase = (g.adjoint() * u).trace() / c(2.0, 0.0);
            assert!((phase.norm() - 1.0).abs() < 1e-8);
            assert!((u - &g * phase).norm() < 1e-8);
            let out = PureAssemblage::from_assemblage(&w.apply(psi.assemblage()).unwrap()).unwrap();
            let diff = overlap_profile(&out).unwrap().max_difference(&overlap_profile(&psi).unwrap());
            assert!(diff < 1e-10);
        }
    }

    #[test]
    fn lhs_target_gets_preparation_witness() {
        let psi = pure_orthogonal_from_angles(FRAC_PI_6).unwrap();
        // Both inputs share a basis, with the labels swapped for x = 1.
        let target = PlanePureAssemblage {
            r: 2,
            s: 2,
            phi: vec![0.4, 0.4 + FRAC_PI_2, 0.4 + FRAC_PI_2, 0.4],
            alpha: vec![0.3, 0.3, 0.3, 0.3],
            weights: vec![0.5; 4],
        }
        .to_pure()
        .unwrap();
        let v = can_convert(&psi, &target).unwrap();
        assert!(v.convertible);
        assert_eq!(v.reason, ConversionReason::TargetLhs);
        assert!(v.witness_residual.unwrap() < 1e-8);
        assert!(v.witness.unwrap().is_deterministic());
    }

    #[test]
    fn preconditions_are_distinct() {
        let psi = pure_orthogonal_from_angles(0.5).unwrap();
        let e = |i: usize, d: usize| {
            let mut v = CVec::zeros(d);
            v[i] = c(1.0, 0.0);
            v
        };
        // x = 0 uses |0⟩ and |+⟩; x = 1 is the eigenbasis of the same marginal.
        let plus = CVec::from_vec(vec![c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]);
        let rho = &HermitianMatrix::projector(&e(0, 2)).scaled(0.5) + &HermitianMatrix::projector(&plus).scaled(0.5);
        let sp = rho.eig().unwrap();
        let skew = PureAssemblage::new(
            2,
            2,
            vec![e(0, 2), plus, sp.eigenvectors.column(0).into_owned(), sp.eigenvectors.column(1).into_owned()],
            vec![0.5, 0.5, sp.eigenvalues[0], sp.eigenvalues[1]],
        )
        .unwrap();
        assert!(matches!(can_convert(&psi, &skew), Err(SteeringError::Precondition(m)) if m.contains("not orthogonal")));
        let big = PureAssemblage::new(2, 2, vec![e(0, 3), e(1, 3), e(0, 3), e(1, 3)], vec![0.5; 4]).unwrap();
        assert!(matches!(can_convert(&psi, &big), Err(SteeringError::Precondition(m)) if m.contains("d = s = r = 2")));
    }

    #[test]
    fn bit_search_finds_identity() {
        let psi = pure_orthogonal_from_angles(FRAC_PI_6).unwrap();
        let opts = BitSearchOptions { restarts: 4, iters: 50, ..Default::default() };
        let out = steering_bit_search(psi.assemblage(), &[FRAC_PI_6], &opts).unwrap();
        assert!(out[0].residual < 1e-6, "{}", out[0].residual);
    }
}
