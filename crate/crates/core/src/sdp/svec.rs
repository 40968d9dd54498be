//! Isometric real vectorization of Hermitian matrices: the diagonal first,
//! then `√2·Re`, `√2·Im` of each strictly upper entry. Under this map
//! `Re Tr(AB)` is the ordinary dot product.

use std::f64::consts::SQRT_2;

use crate::linalg::{c, CMat};

pub(crate) fn svec_into(m: &CMat, out: &mut [f64]) {
    let d = m.nrows();
    debug_assert_eq!(out.len(), d * d);
    for i in 0..d {
        out[i] = m[(i, i)].re;
    }
    let mut k = d;
    for i in 0..d {
        for j in (i + 1)..d {
            let z = m[(i, j)];
            out[k] = SQRT_2 * z.re;
            out[k + 1] = SQRT_2 * z.im;
            k += 2;
        }
    }
}

pub(crate) fn smat(v: &[f64], d: usize) -> CMat {
    debug_assert_eq!(v.len(), d * d);
    let mut m = CMat::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = c(v[i], 0.0);
    }
    let mut k = d;
    for i in 0..d {
        for j in (i + 1)..d {
            let z = c(v[k], v[k + 1]) / SQRT_2;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// Positions of the diagonal entries inside an svec of dimension `d`.
pub(crate) fn diagonal_positions(d: usize) -> std::ops::Range<usize> {
    0..d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::HermitianMatrix;
    use crate::random;

    #[test]
    fn round_trip_and_isometry() {
        let mut rng = random::rng_from_seed(1);
        for d in 1..5 {
            let a = random::random_hermitian(d, &mut rng);
            let b = random::random_hermitian(d, &mut rng);
            let mut va = vec![0.0; d * d];
            let mut vb = vec![0.0; d * d];
            svec_into(a.matrix(), &mut va);
            svec_into(b.matrix(), &mut vb);
            let back = HermitianMatrix::from_matrix_symmetrized(smat(&va, d));
            assert!(back.frobenius_distance(&a) < 1e-14);
            let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
            assert!((dot - a.inner(&b)).abs() < 1e-12);
        }
    }
}
