//! Dense decompositions behind a small ndarray-facing surface.
//!
//! Factorisations run through faer in `f64`; inputs and outputs stay in
//! the caller's scalar type.

use faer::{Mat, Side};
use ndarray::Array2;

use crate::scalar::Real;

/// Singular values below `RANK_RTOL * sigma_max` count as zero.
pub const RANK_RTOL: f64 = 1e-10;

fn to_faer<T: Real>(a: &Array2<T>) -> Mat<f64> {
    let (r, c) = a.dim();
    Mat::from_fn(r, c, |i, j| a[[i, j]].to_f64_lossy())
}

/// Thin SVD `A = U diag(s) V^T` with `min(rows, cols)` descending singular
/// values.
struct ThinSvd {
    u: Mat<f64>,
    s: Vec<f64>,
    v: Mat<f64>,
}

fn thin_svd<T: Real>(a: &Array2<T>) -> ThinSvd {
    let svd = to_faer(a).thin_svd().expect("SVD of a finite matrix converges");
    let s = svd.S().column_vector().iter().copied().collect();
    ThinSvd { u: svd.U().to_owned(), s, v: svd.V().to_owned() }
}

/// Pseudo-inverse together with the spectrum it was built from.
#[derive(Clone, Debug)]
pub struct PseudoInverse<T> {
    pub pinv: Array2<T>,
    /// Singular values, descending; `min(rows, cols)` of them.
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

impl<T> PseudoInverse<T> {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }
}

/// Moore-Penrose pseudo-inverse with relative rank cut-off `rtol`.
pub fn pseudo_inverse<T: Real>(a: &Array2<T>, rtol: f64) -> PseudoInverse<T> {
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 {
        return PseudoInverse { pinv: Array2::zeros((cols, rows)), singular_values: vec![], rank: 0 };
    }
    let ThinSvd { u, s, v } = thin_svd(a);
    let cut = rtol * s.first().copied().unwrap_or(0.0);
    let kept: Vec<usize> = (0..s.len()).filter(|&i| s[i] > cut && s[i] > 0.0).collect();
    // pinv = V diag(1/s) U^T over the retained singular triplets
    let pinv = Array2::from_shape_fn((cols, rows), |(i, j)| {
        T::from_f64_lossy(kept.iter().map(|&k| v[(i, k)] * u[(j, k)] / s[k]).sum())
    });
    PseudoInverse { pinv, singular_values: s, rank: kept.len() }
}

/// Singular values, descending.
pub fn singular_values<T: Real>(a: &Array2<T>) -> Vec<f64> {
    if a.is_empty() {
        return vec![];
    }
    to_faer(a).singular_values().expect("SVD of a finite matrix converges")
}

/// Ridge least squares `argmin_W |X W - Y|^2 + lambda |W|^2` through the SVD
/// of `X`. With `lambda = 0` a rank-deficient `X` is an error carrying the
/// numerical rank.
pub fn ridge_solve<T: Real>(x: &Array2<T>, y: &Array2<T>, lambda: f64) -> Result<Array2<T>, usize> {
    let (n, d) = x.dim();
    let t = y.ncols();
    if n == 0 || d == 0 {
        return if lambda > 0.0 || d == 0 { Ok(Array2::zeros((d, t))) } else { Err(0) };
    }
    let ThinSvd { u, s, v } = thin_svd(x);
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&sv| sv > RANK_RTOL * smax && sv > 0.0).count();
    if lambda == 0.0 && rank < d {
        return Err(rank);
    }
    let f: Vec<f64> = s
        .iter()
        .map(|&sv| {
            if lambda == 0.0 {
                if sv > RANK_RTOL * smax { 1.0 / sv } else { 0.0 }
            } else {
                sv / (sv * sv + lambda)
            }
        })
        .collect();
    // W = V diag(f) U^T Y
    let uty = Array2::from_shape_fn((s.len(), t), |(k, c)| {
        f[k] * (0..n).map(|r| u[(r, k)] * y[[r, c]].to_f64_lossy()).sum::<f64>()
    });
    Ok(Array2::from_shape_fn((d, t), |(i, c)| {
        T::from_f64_lossy((0..s.len()).map(|k| v[(i, k)] * uty[[k, c]]).sum())
    }))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue_symmetric<T: Real>(a: &Array2<T>) -> f64 {
    let n = a.nrows();
    let m = Mat::from_fn(n, n, |i, j| 0.5 * (a[[i, j]].to_f64_lossy() + a[[j, i]].to_f64_lossy()));
    m.self_adjoint_eigenvalues(Side::Lower)
        .expect("symmetric eigensolver converges")
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pinv_of_invertible_is_inverse() {
        let a = array![[2.0f64, 1.0], [1.0, 3.0]];
        let p = pseudo_inverse(&a, RANK_RTOL);
        let id = a.dot(&p.pinv);
        assert!((id[[0, 0]] - 1.0).abs() < 1e-14 && id[[0, 1]].abs() < 1e-14);
        assert_eq!(p.rank, 2);
        assert!(p.sigma_min() > 0.0);
    }

    #[test]
    fn pinv_detects_rank_deficiency() {
        let a = array![[1.0f64, 2.0, 3.0], [2.0, 4.0, 6.0]];
        let p = pseudo_inverse(&a, RANK_RTOL);
        assert_eq!(p.rank, 1);
        // A A+ A = A still holds for the least-norm inverse
        let back = a.dot(&p.pinv).dot(&a);
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_matrix_singular_values() {
        let a = array![[3.0f32, 0.0, 0.0], [0.0, 4.0, 0.0]];
        let sv = singular_values(&a);
        assert_eq!(sv.len(), 2);
        assert!((sv[0] - 4.0).abs() < 1e-6 && (sv[1] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn ridge_matches_normal_equations() {
        let x = array![[1.0f64, 0.0], [0.0, 2.0], [1.0, 1.0]];
        let y = array![[1.0], [2.0], [0.5]];
        let w = ridge_solve(&x, &y, 0.3).unwrap();
        // (X^T X + 0.3 I) w = X^T y
        let lhs = (x.t().dot(&x) + Array2::<f64>::eye(2) * 0.3).dot(&w);
        let rhs = x.t().dot(&y);
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let dup = array![[1.0f64, 1.0], [2.0, 2.0]];
        assert_eq!(ridge_solve(&dup, &array![[1.0], [2.0]], 0.0), Err(1));
    }

    #[test]
    fn rank_deficient_tall_matrix_reconstructs() {
        // rank 2 in a 6 x 4 matrix with exact zero singular values
        let b = array![[1.0f64, 0.5], [0.2, 2.0], [3.0, 1.0], [0.0, 0.7], [1.5, 1.5], [0.3, 0.1]];
        let c = array![[1.0f64, 0.0, 2.0, 0.5], [0.0, 1.0, 1.0, 3.0]];
        let a = b.dot(&c);
        let p = pseudo_inverse(&a, RANK_RTOL);
        assert_eq!(p.rank, 2);
        let back = a.dot(&p.pinv).dot(&a);
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvalue_of_diagonal() {
        let a = array![[5.0, 0.0], [0.0, 0.5]];
        assert!((min_eigenvalue_symmetric(&a) - 0.5).abs() < 1e-14);
    }
}
