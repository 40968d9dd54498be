//! Seeded random generators for states, unitaries and distributions.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::linalg::{c, CMat, CVec, HermitianMatrix, C64};

pub type SteeringRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SteeringRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a suite label and an instance index (splitmix64
/// finalizer), so every trial has its own stream independent of scheduling.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in label.bytes() {
        h = mix64(h ^ b as u64);
    }
    mix64(h ^ index.wrapping_mul(0xbf58_476d_1ce4_e5b9))
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Matrix of i.i.d. standard complex Gaussians.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = c(normal(rng), normal(rng)) * std::f64::consts::FRAC_1_SQRT_2;
        }
    }
    m
}

pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> HermitianMatrix {
    HermitianMatrix::from_matrix_symmetrized(ginibre(d, d, rng))
}

pub fn haar_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVec {
    let g = ginibre(d, 1, rng);
    let v = g.column(0).into_owned();
    let n = v.norm();
    v / c(n, 0.0)
}

pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let qr = ginibre(n, n, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { c(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// `rows × cols` matrix with orthonormal columns (`rows ≥ cols`).
pub fn haar_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    assert!(rows >= cols, "isometry needs rows >= cols");
    haar_unitary(rows, rng).columns(0, cols).into_owned()
}

/// Density matrix `G G† / Tr(G G†)` from a square Ginibre matrix.
pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> HermitianMatrix {
    let g = ginibre(d, d, rng);
    let p = HermitianMatrix::from_matrix_symmetrized(&g * g.adjoint());
    let t = p.trace();
    p.scaled(1.0 / t)
}

/// Haar pure state mixed with white noise at a uniformly random weight.
pub fn random_noisy_pure<R: Rng + ?Sized>(d: usize, rng: &mut R) -> HermitianMatrix {
    let psi = haar_state(d, rng);
    let w: f64 = rng.random();
    let pure = HermitianMatrix::projector(&psi);
    &pure.scaled(w) + &HermitianMatrix::maximally_mixed(d).scaled(1.0 - w)
}

/// Symmetric Dirichlet sample; `alpha = 1` is the flat distribution.
pub fn dirichlet<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

pub fn random_phase<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let t: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    C64::from_polar(1.0, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unitary_is_unitary() {
        let mut rng = rng_from_seed(5);
        for n in 1..6 {
            let u = haar_unitary(n, &mut rng);
            let err = (u.adjoint() * &u - CMat::identity(n, n)).norm();
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn dirichlet_is_normalized() {
        let mut rng = rng_from_seed(9);
        let p = dirichlet(7, 0.3, &mut rng);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "a", 1));
        assert_ne!(derive_seed(1, "a", 0), derive_seed(1, "b", 0));
        assert_eq!(derive_seed(3, "x", 4), derive_seed(3, "x", 4));
    }
}
