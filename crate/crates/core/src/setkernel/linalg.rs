//! Small dense linear-algebra helpers built on nalgebra's SVD.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Scalar;

/// Numerical rank with threshold `σ > rank_tol · σ_max`.
pub fn rank<T: Scalar>(m: &DMatrix<T>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(T::zero(), |a, &b| a.max(b));
    if smax == T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > T::rank_tol() * smax).count()
}

/// Orthonormal basis (columns) of the range of `m`.
pub fn orthonormal_range<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sv = svd.singular_values;
    let smax = sv.iter().fold(T::zero(), |a, &b| a.max(b));
    if smax == T::zero() {
        return DMatrix::zeros(n, 0);
    }
    let keep: Vec<usize> = (0..sv.len())
        .filter(|&i| sv[i] > T::rank_tol() * smax)
        .collect();
    let mut out = DMatrix::zeros(n, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &u.column(i));
    }
    out
}

/// Moore–Penrose pseudoinverse with the crate's rank threshold.
pub fn pinv<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(T::zero(), |a, &b| a.max(b));
    let eps = T::rank_tol() * smax;
    svd.pseudo_inverse(eps)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

/// Unit normal of the hyperplane through the origin spanned by `r − 1`
/// vectors in `R^r`, or `None` when they are linearly dependent.
pub fn hyperplane_normal<T: Scalar>(cols: &[DVector<T>], r: usize) -> Option<DVector<T>> {
    debug_assert_eq!(cols.len() + 1, r);
    let mut m = DMatrix::zeros(r, r - 1);
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    let scale = m.amax();
    if scale == T::zero() {
        return None;
    }
    let m = m / scale;
    // Generalized cross product via cofactors.
    let mut nrm = DVector::zeros(r);
    for i in 0..r {
        let minor = m.clone().remove_row(i);
        let det = if minor.nrows() == 0 {
            T::one()
        } else {
            minor.determinant()
        };
        nrm[i] = if i % 2 == 0 { det } else { -det };
    }
    let len = nrm.norm();
    if len <= T::lit(1e-9) {
        return None;
    }
    Some(nrm / len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_product_in_three_dimensions() {
        let a = DVector::from_row_slice(&[1.0, 0.0, 0.0]);
        let b = DVector::from_row_slice(&[0.0, 1.0, 0.0]);
        let n = hyperplane_normal(&[a.clone(), b], 3).unwrap();
        assert!((n.abs() - DVector::from_row_slice(&[0.0, 0.0, 1.0])).norm() < 1e-12);
        assert!(hyperplane_normal(&[a.clone(), a * 2.0], 3).is_none());
    }

    #[test]
    fn right_pseudoinverse() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, -1.0]);
        let p = pinv(&m);
        assert!((p - DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0])).amax() < 1e-12);
        assert_eq!(
            rank(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0])),
            1
        );
    }
}
