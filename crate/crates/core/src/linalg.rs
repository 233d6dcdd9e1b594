//! Thin QR and SVD for the alignment solve.
//!
//! The public surface works in nalgebra matrices; the decompositions run in
//! faer (sequential, so results are bit-reproducible). The dense reference
//! path in `align` keeps nalgebra's own SVD, so the two routes share no
//! decomposition code.

use faer::Mat;
use nalgebra::DMatrix;

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn to_nalgebra(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `m = Q R` with `Q` of size `rows x k` and `R` of size `k x cols`,
/// `k = min(rows, cols)`.
pub(crate) fn thin_qr(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = to_faer(m).qr();
    (to_nalgebra(qr.compute_thin_Q().as_ref()), to_nalgebra(qr.thin_R()))
}

/// Singular value decomposition of a square matrix, singular values
/// descending: `m = U diag(s) V^T`.
pub(crate) fn svd(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let svd = to_faer(m).svd().ok()?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let (u, v) = (to_nalgebra(svd.U()), to_nalgebra(svd.V()));

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    if order.iter().enumerate().all(|(i, &j)| i == j) {
        return Some((u, s, v));
    }
    let pick = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), order.len(), |i, j| m[(i, order[j])]);
    Some((pick(&u), order.iter().map(|&j| s[j]).collect(), pick(&v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gaussian_matrix;
    use rand::SeedableRng;

    #[test]
    fn factorisations_reconstruct() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (r, c) in [(9, 4), (4, 9), (6, 6)] {
            let m = gaussian_matrix(&mut rng, r, c);
            let (q, rr) = thin_qr(&m);
            let k = r.min(c);
            assert_eq!((q.shape(), rr.shape()), ((r, k), (k, c)));
            assert!((&q * &rr - &m).amax() < 1e-12);
            assert!((q.transpose() * &q - DMatrix::identity(k, k)).amax() < 1e-12);
        }
        let m = gaussian_matrix(&mut rng, 7, 7);
        let (u, s, v) = svd(&m).unwrap();
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let rebuilt = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s)) * v.transpose();
        assert!((rebuilt - m).amax() < 1e-12);
    }
}
