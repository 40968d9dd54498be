//! Dense complex-Hermitian linear algebra and the two relative entropies.
//!
//! Everything operator-valued in the crate is a [`HermitianMatrix`]; the
//! eigensolver is a cyclic complex Jacobi iteration, which is exact enough
//! (reconstruction error ~1e-15) and deterministic for the small dimensions
//! used here.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Result, SteeringError};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Allowed asymmetry when accepting raw data as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues at or above `-PSD_FLOOR` count as nonnegative.
pub const PSD_FLOOR: f64 = 1e-10;
/// Eigenvalues below this are treated as exact zeros by the entropies.
pub const ZERO_EIGENVALUE: f64 = 1e-12;

const MAX_SWEEPS: usize = 64;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A validated complex Hermitian matrix.
#[derive(Clone, PartialEq)]
pub struct HermitianMatrix {
    m: CMat,
}

impl fmt::Debug for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermitianMatrix{}", self.m)
    }
}

impl HermitianMatrix {
    /// Accepts `m` if it is square and Hermitian within [`HERMITIAN_TOL`].
    /// The stored matrix is the exact Hermitian part of `m`.
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(SteeringError::Dimension(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let asymmetry = max_asymmetry(&m);
        if asymmetry > HERMITIAN_TOL {
            return Err(SteeringError::NotHermitian { asymmetry });
        }
        Ok(Self::from_matrix_symmetrized(m))
    }

    /// Takes the Hermitian part `(m + m†)/2` without validation.
    pub fn from_matrix_symmetrized(m: CMat) -> Self {
        let adj = m.adjoint();
        let mut h = (m + adj) * c(0.5, 0.0);
        for i in 0..h.nrows() {
            h[(i, i)].im = 0.0;
        }
        Self { m: h }
    }

    pub fn zeros(d: usize) -> Self {
        Self { m: CMat::zeros(d, d) }
    }

    pub fn identity(d: usize) -> Self {
        Self { m: CMat::identity(d, d) }
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self::identity(d).scaled(1.0 / d as f64)
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let d = values.len();
        let mut m = CMat::zeros(d, d);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = c(*v, 0.0);
        }
        Self { m }
    }

    /// `|v⟩⟨v|` (not normalized).
    pub fn projector(v: &CVec) -> Self {
        Self::from_matrix_symmetrized(v * v.adjoint())
    }

    /// `Σ_i w_i |v_i⟩⟨v_i|` over the columns of `vectors`.
    pub fn from_spectral(values: &[f64], vectors: &CMat) -> Self {
        let mut scaled = vectors.clone();
        for (j, w) in values.iter().enumerate() {
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= *w;
            }
        }
        Self::from_matrix_symmetrized(&scaled * vectors.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.m[(i, i)].re).sum()
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self { m: &self.m * c(f, 0.0) }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        self.m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Real inner product `Re Tr(A B)`.
    pub fn inner(&self, other: &Self) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.m[(i, j)] * other.m[(j, i)]).re;
            }
        }
        acc
    }

    /// `K H K†`; `K` may be rectangular.
    pub fn conjugate_by(&self, k: &CMat) -> Self {
        Self::from_matrix_symmetrized(k * &self.m * k.adjoint())
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self { m: self.m.kronecker(&other.m) }
    }

    pub fn eig(&self) -> Result<Spectrum> {
        eig_hermitian(self)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eig()?.eigenvalues[0])
    }

    /// Expectation `⟨v|H|v⟩`.
    pub fn expectation(&self, v: &CVec) -> f64 {
        (v.adjoint() * &self.m * v)[(0, 0)].re
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { m: &self.m + &rhs.m }
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { m: &self.m - &rhs.m }
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn mul(self, rhs: f64) -> HermitianMatrix {
        self.scaled(rhs)
    }
}

fn max_asymmetry(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: CMat,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// `V·diag(λ)·V†`.
    pub fn reconstruct(&self) -> HermitianMatrix {
        HermitianMatrix::from_spectral(&self.eigenvalues, &self.eigenvectors)
    }

    /// Applies `f` to the eigenvalues: `V·diag(f(λ))·V†`.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> HermitianMatrix {
        let vals: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        HermitianMatrix::from_spectral(&vals, &self.eigenvectors)
    }
}

pub fn eig_hermitian(h: &HermitianMatrix) -> Result<Spectrum> {
    jacobi_eigen(h.matrix())
}

/// Cyclic Jacobi for complex Hermitian matrices. Each rotation first removes
/// the phase of the pivot, then applies a real Givens rotation.
fn jacobi_eigen(m: &CMat) -> Result<Spectrum> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = CMat::identity(n, n);
    let scale = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

    let mut converged = n <= 1 || scale == 0.0;
    let mut sweep = 0;
    while !converged {
        if sweep == MAX_SWEEPS {
            return Err(SteeringError::EigenNonConvergence { sweeps: sweep });
        }
        sweep += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let abs = apq.norm();
                if abs <= f64::MIN_POSITIVE {
                    continue;
                }
                let phase = apq / abs;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (2.0 * abs);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                let e = phase.conj();

                // A <- A G with G = [[c, s], [-s e, c e]] on columns (p, q).
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * cs - akq * (e * sn);
                    a[(k, q)] = akp * sn + akq * (e * cs);
                }
                // A <- G† A on rows (p, q).
                let ec = e.conj();
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * cs - aqk * (ec * sn);
                    a[(q, k)] = apk * sn + aqk * (ec * cs);
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)].im = 0.0;
                a[(q, q)].im = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * cs - vkq * (e * sn);
                    v[(k, q)] = vkp * sn + vkq * (e * cs);
                }
            }
        }
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        converged = off.sqrt() <= 1e-15 * scale;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let eigenvalues = order.iter().map(|&i| a[(i, i)].re).collect();
    let eigenvectors = CMat::from_fn(n, n, |r, col| v[(r, order[col])]);
    Ok(Spectrum { eigenvalues, eigenvectors })
}

/// Which axes of a [`ProbTable`] must sum to one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// All entries sum to one.
    Joint,
    /// Axis 0 is the outcome: entries sum to one over axis 0 for every
    /// assignment of the remaining (conditioning) axes.
    Conditional,
}

/// Dense (conditional) probability table, row-major with axis 0 outermost.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbTable {
    shape: Vec<usize>,
    values: Vec<f64>,
    normalization: Normalization,
}

pub const PROB_TOL: f64 = 1e-12;

impl ProbTable {
    pub fn new(shape: Vec<usize>, values: Vec<f64>, normalization: Normalization) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.is_empty() || len != values.len() {
            return Err(SteeringError::InvalidProbTable(format!(
                "shape {:?} does not match {} values",
                shape,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(SteeringError::InvalidProbTable(format!("entry {v} is not a probability")));
        }
        let table = Self { shape, values, normalization };
        let residual = table.normalization_residual();
        if residual > PROB_TOL {
            return Err(SteeringError::InvalidProbTable(format!(
                "normalization residual {residual:.3e}"
            )));
        }
        Ok(table)
    }

    pub fn joint(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::new(shape, values, Normalization::Joint)
    }

    pub fn conditional(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        Self::new(shape, values, Normalization::Conditional)
    }

    /// Builds a conditional table from `f(index)`, then renormalizes each
    /// conditional slice (useful for tables produced by arithmetic).
    pub fn conditional_from_fn<F: FnMut(&[usize]) -> f64>(shape: Vec<usize>, mut f: F) -> Result<Self> {
        let len: usize = shape.iter().product();
        let mut values = Vec::with_capacity(len);
        let mut idx = vec![0; shape.len()];
        for flat in 0..len {
            unflatten(flat, &shape, &mut idx);
            values.push(f(&idx).max(0.0));
        }
        let outcomes = shape[0];
        let stride = len / outcomes;
        for cond in 0..stride {
            let total: f64 = (0..outcomes).map(|o| values[o * stride + cond]).sum();
            if total <= 0.0 {
                return Err(SteeringError::InvalidProbTable("empty conditional slice".into()));
            }
            for o in 0..outcomes {
                values[o * stride + cond] /= total;
            }
        }
        Self::conditional(shape, values)
    }

    pub fn uniform_conditional(shape: Vec<usize>) -> Self {
        let len: usize = shape.iter().product();
        let v = 1.0 / shape[0] as f64;
        Self { shape, values: vec![v; len], normalization: Normalization::Conditional }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter().zip(&self.shape).fold(0, |acc, (i, n)| {
            debug_assert!(i < n);
            acc * n + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    /// Largest deviation from the declared normalization.
    pub fn normalization_residual(&self) -> f64 {
        match self.normalization {
            Normalization::Joint => (self.values.iter().sum::<f64>() - 1.0).abs(),
            Normalization::Conditional => {
                let outcomes = self.shape[0];
                let stride = self.values.len() / outcomes;
                (0..stride)
                    .map(|cond| {
                        let total: f64 = (0..outcomes).map(|o| self.values[o * stride + cond]).sum();
                        (total - 1.0).abs()
                    })
                    .fold(0.0, f64::max)
            }
        }
    }
}

pub(crate) fn unflatten(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for (slot, n) in out.iter_mut().zip(shape).rev() {
        *slot = flat % n;
        flat /= n;
    }
}

/// A relative entropy value: finite, or the distinguished `+∞` reported when
/// the support condition fails.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Divergence {
    Finite(f64),
    Infinite,
}

impl Divergence {
    pub fn is_finite(&self) -> bool {
        matches!(self, Divergence::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Divergence::Finite(v) => Some(*v),
            Divergence::Infinite => None,
        }
    }

    /// Lossy conversion for reporting; `Infinite` maps to `f64::INFINITY`.
    pub fn to_f64(&self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }

    /// `w · self` for a weight `w ≥ 0`, with `0 · ∞ = 0`.
    pub fn weighted(self, w: f64) -> Divergence {
        if w == 0.0 {
            return Divergence::Finite(0.0);
        }
        match self {
            Divergence::Finite(v) => Divergence::Finite(w * v),
            Divergence::Infinite => Divergence::Infinite,
        }
    }
}

impl Add for Divergence {
    type Output = Divergence;
    fn add(self, rhs: Divergence) -> Divergence {
        match (self, rhs) {
            (Divergence::Finite(a), Divergence::Finite(b)) => Divergence::Finite(a + b),
            _ => Divergence::Infinite,
        }
    }
}

impl std::iter::Sum for Divergence {
    fn sum<I: Iterator<Item = Divergence>>(iter: I) -> Self {
        iter.fold(Divergence::Finite(0.0), |a, b| a + b)
    }
}

/// Overlap of `ρ` with the null space of `σ` above which `S(ρ‖σ) = +∞`.
pub const SUPPORT_TOL: f64 = 1e-9;

/// `Tr ρ log ρ − Tr ρ log σ` from the two spectra, natural log. Eigenvalues
/// below `zero` are treated as exact zeros; the result is `Infinite` when
/// the weight of `ρ` on the null space of `σ` exceeds `support_tol`.
pub(crate) fn divergence_from_spectra(
    rho: &Spectrum,
    sigma: &Spectrum,
    zero: f64,
    support_tol: f64,
) -> Divergence {
    let overlaps = rho.eigenvectors.adjoint() * &sigma.eigenvectors;
    let mut self_term = 0.0;
    let mut cross = 0.0;
    let mut null_weight = 0.0;
    for (i, &p) in rho.eigenvalues.iter().enumerate() {
        if p <= zero {
            continue;
        }
        self_term += p * p.ln();
        for (j, &q) in sigma.eigenvalues.iter().enumerate() {
            let o = overlaps[(i, j)].norm_sqr();
            if q <= zero {
                null_weight += p * o;
            } else {
                cross += p * o * q.ln();
            }
        }
    }
    if null_weight > support_tol {
        Divergence::Infinite
    } else {
        Divergence::Finite(self_term - cross)
    }
}

fn check_state(name: &str, spectrum: &Spectrum, trace: f64) -> Result<()> {
    if spectrum.min() < -PSD_FLOOR {
        return Err(SteeringError::InvalidState(format!(
            "{name} has eigenvalue {:.3e} below the PSD floor",
            spectrum.min()
        )));
    }
    if trace > 1.0 + 1e-9 {
        return Err(SteeringError::InvalidState(format!("{name} has trace {trace} > 1")));
    }
    Ok(())
}

/// Quantum (Umegaki) relative entropy `Tr[ρ(log ρ − log σ)]`, natural log.
pub fn quantum_relative_entropy(rho: &HermitianMatrix, sigma: &HermitianMatrix) -> Result<Divergence> {
    if rho.dim() != sigma.dim() {
        return Err(SteeringError::Dimension(format!(
            "relative entropy of {}-dim and {}-dim operators",
            rho.dim(),
            sigma.dim()
        )));
    }
    let sr = rho.eig()?;
    let ss = sigma.eig()?;
    check_state("rho", &sr, rho.trace())?;
    check_state("sigma", &ss, sigma.trace())?;
    Ok(divergence_from_spectra(&sr, &ss, ZERO_EIGENVALUE, SUPPORT_TOL))
}

/// Kullback-Leibler divergence `Σ P log(P/Q)` over all entries.
pub fn classical_relative_entropy(p: &ProbTable, q: &ProbTable) -> Result<Divergence> {
    if p.shape() != q.shape() {
        return Err(SteeringError::Dimension(format!(
            "probability tables of shape {:?} and {:?}",
            p.shape(),
            q.shape()
        )));
    }
    Ok(kl_divergence(p.values(), q.values()))
}

pub(crate) fn kl_divergence(p: &[f64], q: &[f64]) -> Divergence {
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= PROB_TOL {
            if pi > 0.0 && qi > 0.0 {
                acc += pi * (pi / qi).ln();
            }
            continue;
        }
        if qi < 1e-15 {
            return Divergence::Infinite;
        }
        acc += pi * (pi / qi).ln();
    }
    Divergence::Finite(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_pauli_z_spectra() {
        let s = HermitianMatrix::identity(2).eig().unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 1.0]);
        let z = HermitianMatrix::diagonal(&[1.0, -1.0]).eig().unwrap();
        assert_eq!(z.eigenvalues, vec![-1.0, 1.0]);
    }

    #[test]
    fn random_hermitian_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &d in &[2usize, 3, 4, 8] {
            for _ in 0..250 {
                let h = random::random_hermitian(d, &mut rng);
                let sp = h.eig().unwrap();
                assert!(sp.reconstruct().frobenius_distance(&h) < 1e-10);
                let gram = sp.eigenvectors.adjoint() * &sp.eigenvectors;
                let id = CMat::identity(d, d);
                let err: f64 = (gram - id).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                assert!(err < 1e-10);
                assert!(sp.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.4, 0.0), c(1.0, 0.0)]);
        assert!(matches!(HermitianMatrix::new(m), Err(SteeringError::NotHermitian { .. })));
        let rect = CMat::zeros(2, 3);
        assert!(matches!(HermitianMatrix::new(rect), Err(SteeringError::Dimension(_))));
    }

    #[test]
    fn quantum_entropy_hand_cases() {
        let zero = HermitianMatrix::diagonal(&[1.0, 0.0]);
        let one = HermitianMatrix::diagonal(&[0.0, 1.0]);
        let mixed = HermitianMatrix::maximally_mixed(2);
        let d = quantum_relative_entropy(&zero, &mixed).unwrap();
        assert!((d.value().unwrap() - std::f64::consts::LN_2).abs() < 1e-14);
        assert_eq!(quantum_relative_entropy(&zero, &one).unwrap(), Divergence::Infinite);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random::random_density(2, &mut rng);
        let same = quantum_relative_entropy(&rho, &rho).unwrap().value().unwrap();
        assert!(same.abs() < 1e-10);
    }

    #[test]
    fn quantum_entropy_rejects_negative_state() {
        let bad = HermitianMatrix::diagonal(&[1.1, -0.1]);
        let ok = HermitianMatrix::maximally_mixed(2);
        assert!(matches!(quantum_relative_entropy(&bad, &ok), Err(SteeringError::InvalidState(_))));
    }

    #[test]
    fn classical_entropy_hand_cases() {
        let half = ProbTable::joint(vec![2], vec![0.5, 0.5]).unwrap();
        let point = ProbTable::joint(vec![2], vec![1.0, 0.0]).unwrap();
        assert_eq!(classical_relative_entropy(&half, &half).unwrap(), Divergence::Finite(0.0));
        let v = classical_relative_entropy(&point, &half).unwrap().value().unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(classical_relative_entropy(&half, &point).unwrap(), Divergence::Infinite);
        let three = ProbTable::joint(vec![3], vec![0.2, 0.3, 0.5]).unwrap();
        assert!(matches!(classical_relative_entropy(&half, &three), Err(SteeringError::Dimension(_))));
    }

    #[test]
    fn prob_table_normalization() {
        let t = ProbTable::conditional(vec![2, 3], vec![0.5, 1.0, 0.0, 0.5, 0.0, 1.0]).unwrap();
        assert_eq!(t.get(&[0, 1]), 1.0);
        assert!(ProbTable::conditional(vec![2, 2], vec![0.5, 0.5, 0.4, 0.5]).is_err());
        assert!(ProbTable::joint(vec![2], vec![-0.5, 1.5]).is_err());
    }

    #[test]
    fn divergence_arithmetic() {
        assert_eq!(Divergence::Infinite.weighted(0.0), Divergence::Finite(0.0));
        assert_eq!(Divergence::Finite(1.0) + Divergence::Infinite, Divergence::Infinite);
        assert_eq!(Divergence::Infinite.to_f64(), f64::INFINITY);
    }
}
