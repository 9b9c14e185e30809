use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::lp::{self, LpError};
use crate::scalar::Scalar;

use super::zonotope::Zonotope;

/// `{x : Hx ≤ h}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope<T: Scalar = f64> {
    h_mat: DMatrix<T>,
    h_vec: DVector<T>,
}

impl<T: Scalar> HPolytope<T> {
    pub fn new(h_mat: DMatrix<T>, h_vec: DVector<T>) -> Result<Self> {
        check_dim(h_mat.nrows(), h_vec.len())?;
        if h_mat.iter().chain(h_vec.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("polytope entries must be finite"));
        }
        Ok(Self { h_mat, h_vec })
    }

    /// Like [`HPolytope::new`] but rejects unbounded sets.
    pub fn bounded(h_mat: DMatrix<T>, h_vec: DVector<T>) -> Result<Self> {
        let p = Self::new(h_mat, h_vec)?;
        if !p.is_bounded() {
            return Err(Error::Unbounded);
        }
        Ok(p)
    }

    pub fn from_box(lo: &DVector<T>, hi: &DVector<T>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        let n = lo.len();
        let mut h = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            h[(i, i)] = T::one();
            b[i] = hi[i];
            h[(n + i, i)] = -T::one();
            b[n + i] = -lo[i];
        }
        Self::new(h, b)
    }

    /// A canonical empty set in `R^n`.
    pub fn empty(n: usize) -> Self {
        let mut h = DMatrix::zeros(2 * n.max(1), n);
        let mut b = DVector::zeros(2 * n.max(1));
        if n > 0 {
            h[(0, 0)] = T::one();
            h[(1, 0)] = -T::one();
        }
        b[0] = -T::one();
        b[1] = -T::one();
        Self { h_mat: h, h_vec: b }
    }

    pub fn dim(&self) -> usize {
        self.h_mat.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.h_mat.nrows()
    }

    pub fn h_mat(&self) -> &DMatrix<T> {
        &self.h_mat
    }

    pub fn h_vec(&self) -> &DVector<T> {
        &self.h_vec
    }

    /// Rows scaled to unit Euclidean norm; zero rows dropped when satisfied.
    pub fn normalized(&self) -> Self {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..self.num_rows() {
            let nrm = self.h_mat.row(i).norm();
            if nrm <= T::pivot_tol() {
                if self.h_vec[i] < T::zero() {
                    return Self::empty(self.dim());
                }
                continue;
            }
            rows.push(self.h_mat.row(i) / nrm);
            rhs.push(self.h_vec[i] / nrm);
        }
        let h = if rows.is_empty() {
            DMatrix::zeros(0, self.dim())
        } else {
            DMatrix::from_rows(&rows)
        };
        Self {
            h_mat: h,
            h_vec: DVector::from_vec(rhs),
        }
    }

    /// Inequality check with tolerance `ε_feas` scaled by the row norm.
    pub fn contains_point(&self, x: &DVector<T>) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let eps = T::feas_tol();
        (0..self.num_rows()).all(|i| {
            let row = self.h_mat.row(i);
            let lhs = row.transpose().dot(x);
            lhs <= self.h_vec[i] + eps * row.norm().max(T::one())
        })
    }

    /// Largest violation `max_i (H_i x − h_i) / ‖H_i‖` (negative inside).
    pub fn violation(&self, x: &DVector<T>) -> T {
        let mut worst = -T::max_value().unwrap_or(T::lit(1e300));
        for i in 0..self.num_rows() {
            let row = self.h_mat.row(i);
            let nrm = row.norm();
            if nrm <= T::pivot_tol() {
                continue;
            }
            worst = worst.max((row.transpose().dot(x) - self.h_vec[i]) / nrm);
        }
        worst
    }

    /// `max_{x∈P} dᵀx`, with the maximizer.
    pub fn support_point(&self, d: &DVector<T>) -> Result<(T, DVector<T>)> {
        check_dim(self.dim(), d.len())?;
        match lp::minimize(&(-d), &self.h_mat, &self.h_vec) {
            Ok(sol) => Ok((-sol.value, sol.x)),
            Err(LpError::Infeasible) => Err(Error::EmptySet),
            Err(LpError::Unbounded) => Err(Error::Unbounded),
            Err(e) => Err(e.into()),
        }
    }

    pub fn support(&self, d: &DVector<T>) -> Result<T> {
        self.support_point(d).map(|(v, _)| v)
    }

    pub fn is_empty(&self) -> bool {
        matches!(
            lp::feasible_point(&self.h_mat, &self.h_vec),
            Err(LpError::Infeasible)
        )
    }

    pub fn is_bounded(&self) -> bool {
        self.bounding_box().is_ok() || self.is_empty()
    }

    /// Tight axis-aligned bounding box.
    pub fn bounding_box(&self) -> Result<(DVector<T>, DVector<T>)> {
        let n = self.dim();
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = T::one();
            hi[i] = self.support(&e)?;
            lo[i] = -self.support(&(-e))?;
        }
        Ok((lo, hi))
    }

    /// Center and radius of the largest inscribed ball.
    pub fn chebyshev_center(&self) -> Result<(DVector<T>, T)> {
        let p = self.normalized();
        let n = p.dim();
        let q = p.num_rows();
        let mut a = DMatrix::zeros(q + 1, n + 1);
        let mut b = DVector::zeros(q + 1);
        for i in 0..q {
            for j in 0..n {
                a[(i, j)] = p.h_mat[(i, j)];
            }
            a[(i, n)] = T::one();
            b[i] = p.h_vec[i];
        }
        // r ≥ 0 keeps the LP infeasible exactly when P is empty.
        a[(q, n)] = -T::one();
        let mut c = DVector::zeros(n + 1);
        c[n] = -T::one();
        match lp::minimize(&c, &a, &b) {
            Ok(sol) => Ok((sol.x.rows(0, n).into_owned(), sol.x[n])),
            Err(LpError::Infeasible) => Err(Error::EmptySet),
            Err(LpError::Unbounded) => Err(Error::Unbounded),
            Err(e) => Err(e.into()),
        }
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        let n = self.dim();
        let (qa, qb) = (self.num_rows(), other.num_rows());
        let mut h = DMatrix::zeros(qa + qb, n);
        h.view_mut((0, 0), (qa, n)).copy_from(&self.h_mat);
        h.view_mut((qa, 0), (qb, n)).copy_from(&other.h_mat);
        let mut b = DVector::zeros(qa + qb);
        b.rows_mut(0, qa).copy_from(&self.h_vec);
        b.rows_mut(qa, qb).copy_from(&other.h_vec);
        Self::new(h, b)
    }

    /// `P × Q` in stacked coordinates.
    pub fn cartesian(&self, other: &Self) -> Self {
        let (n, m) = (self.dim(), other.dim());
        let (qa, qb) = (self.num_rows(), other.num_rows());
        let mut h = DMatrix::zeros(qa + qb, n + m);
        h.view_mut((0, 0), (qa, n)).copy_from(&self.h_mat);
        h.view_mut((qa, n), (qb, m)).copy_from(&other.h_mat);
        let mut b = DVector::zeros(qa + qb);
        b.rows_mut(0, qa).copy_from(&self.h_vec);
        b.rows_mut(qa, qb).copy_from(&other.h_vec);
        Self { h_mat: h, h_vec: b }
    }

    /// Drops duplicate and LP-redundant rows. Rows come back normalized.
    pub fn prune_redundant(&self) -> Self {
        let p = self.normalized();
        let q = p.num_rows();
        if q == 0 || p.is_empty() {
            return p;
        }
        // Exact duplicates (same normal): keep the tightest offset.
        let mut keep: Vec<usize> = Vec::with_capacity(q);
        'rows: for i in 0..q {
            for k in keep.iter_mut() {
                let diff = (p.h_mat.row(i) - p.h_mat.row(*k)).amax();
                if diff <= T::lit(1e-12) {
                    if p.h_vec[i] < p.h_vec[*k] {
                        *k = i;
                    }
                    continue 'rows;
                }
            }
            keep.push(i);
        }
        let mut cur: Vec<usize> = keep;
        let mut idx = 0;
        while idx < cur.len() {
            let i = cur[idx];
            let others: Vec<usize> = cur.iter().copied().filter(|&k| k != i).collect();
            if others.is_empty() {
                break;
            }
            let sub = p.select(&others);
            let d = p.h_mat.row(i).transpose();
            let redundant = match sub.support(&d) {
                Ok(v) => v <= p.h_vec[i] + T::feas_tol(),
                Err(_) => false,
            };
            if redundant {
                cur.remove(idx);
            } else {
                idx += 1;
            }
        }
        p.select(&cur)
    }

    fn select(&self, rows: &[usize]) -> Self {
        let n = self.dim();
        let mut h = DMatrix::zeros(rows.len(), n);
        let mut b = DVector::zeros(rows.len());
        for (k, &i) in rows.iter().enumerate() {
            h.set_row(k, &self.h_mat.row(i));
            b[k] = self.h_vec[i];
        }
        Self { h_mat: h, h_vec: b }
    }

    /// Exact `Z ⊆ P` test: support of `Z` on every facet normal.
    pub fn contains_zonotope(&self, z: &Zonotope<T>) -> bool {
        if z.dim() != self.dim() {
            return false;
        }
        let eps = T::feas_tol();
        (0..self.num_rows()).all(|i| {
            let row = self.h_mat.row(i).transpose();
            z.support(&row) <= self.h_vec[i] + eps * row.norm().max(T::one())
        })
    }

    /// `other ⊆ self` by one LP per row of `self`.
    pub fn contains_hpolytope(&self, other: &Self) -> Result<bool> {
        check_dim(self.dim(), other.dim())?;
        if other.is_empty() {
            return Ok(true);
        }
        for i in 0..self.num_rows() {
            let row = self.h_mat.row(i).transpose();
            let s = match other.support(&row) {
                Ok(s) => s,
                Err(Error::Unbounded) => return Ok(false),
                Err(e) => return Err(e),
            };
            if s > self.h_vec[i] + T::feas_tol() * row.norm().max(T::one()) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn translate(&self, v: &DVector<T>) -> Result<Self> {
        check_dim(self.dim(), v.len())?;
        Ok(Self {
            h_vec: &self.h_vec + &self.h_mat * v,
            h_mat: self.h_mat.clone(),
        })
    }

    /// Vertices by brute-force basis enumeration (`n ≤ 4`). Planar
    /// polygons come back in counter-clockwise order.
    pub fn vertices(&self) -> Result<Vec<DVector<T>>> {
        let n = self.dim();
        if n == 0 {
            return Ok(vec![DVector::zeros(0)]);
        }
        if n > 4 {
            return Err(Error::invalid("vertex enumeration is limited to n <= 4"));
        }
        let p = self.prune_redundant();
        if p.is_empty() {
            return Err(Error::EmptySet);
        }
        if !p.is_bounded() {
            return Err(Error::Unbounded);
        }
        let q = p.num_rows();
        let mut out: Vec<DVector<T>> = Vec::new();
        let mut idx: Vec<usize> = (0..n).collect();
        let tol = T::lit(1e-7);
        if q >= n {
            loop {
                let mut a = DMatrix::zeros(n, n);
                let mut b = DVector::zeros(n);
                for (k, &i) in idx.iter().enumerate() {
                    a.set_row(k, &p.h_mat.row(i));
                    b[k] = p.h_vec[i];
                }
                if let Some(x) = a.clone().lu().solve(&b) {
                    if x.iter().all(|v| v.is_finite())
                        && p.violation(&x) <= T::feas_tol() * T::lit(10.0)
                        && !out.iter().any(|v| (v - &x).amax() <= tol)
                    {
                        out.push(x);
                    }
                }
                if !next_combination(&mut idx, q) {
                    break;
                }
            }
        }
        if out.is_empty() {
            // Degenerate (lower-dimensional) set: fall back to a support point.
            let (_, x) = p.support_point(&DVector::from_element(n, T::one()))?;
            out.push(x);
        }
        if n == 2 {
            sort_ccw(&mut out);
        }
        Ok(out)
    }
}

pub fn next_combination(idx: &mut [usize], q: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < q - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

pub fn sort_ccw<T: Scalar>(pts: &mut [DVector<T>]) {
    if pts.is_empty() {
        return;
    }
    let n = T::of_usize(pts.len());
    let cx = pts.iter().fold(T::zero(), |s, p| s + p[0]) / n;
    let cy = pts.iter().fold(T::zero(), |s, p| s + p[1]) / n;
    pts.sort_by(|a, b| {
        let ta = (a[1] - cy).atan2(a[0] - cx);
        let tb = (b[1] - cy).atan2(b[0] - cx);
        ta.partial_cmp(&tb).unwrap_or(std::cmp::Ordering::Equal)
    });
}
