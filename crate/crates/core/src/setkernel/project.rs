//! Orthogonal projection of H-polytopes.
//!
//! Planar targets use an exact support walk driven by LPs over the lifted
//! polytope; everything else goes through Fourier–Motzkin elimination with
//! LP redundancy pruning after each eliminated variable.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::hpolytope::{sort_ccw, HPolytope};

/// Projection of `p` onto the coordinates `dims` (in that order).
pub fn project<T: Scalar>(p: &HPolytope<T>, dims: &[usize]) -> Result<HPolytope<T>> {
    let n = p.dim();
    if dims.iter().any(|&d| d >= n) {
        return Err(Error::invalid("projection index out of range"));
    }
    if p.is_empty() {
        return Ok(HPolytope::empty(dims.len()));
    }
    for &d in dims {
        let mut e = DVector::zeros(n);
        e[d] = T::one();
        p.support(&e)?;
        p.support(&(-e))?;
    }
    if dims.len() == 2 {
        let verts = project_polygon(p, dims)?;
        return polygon_to_hpolytope(&verts);
    }
    fourier_motzkin(p, dims)
}

/// Vertices (counter-clockwise) of the projection of `p` onto two coordinates.
pub fn project_polygon<T: Scalar>(p: &HPolytope<T>, dims: &[usize]) -> Result<Vec<DVector<T>>> {
    assert_eq!(dims.len(), 2, "planar projection needs two coordinates");
    let n = p.dim();
    let lift = |d: &DVector<T>| {
        let mut full = DVector::zeros(n);
        full[dims[0]] = d[0];
        full[dims[1]] = d[1];
        full
    };
    let drop = |x: &DVector<T>| DVector::from_row_slice(&[x[dims[0]], x[dims[1]]]);
    let query = |d: &DVector<T>| -> Result<(T, DVector<T>)> {
        let (v, x) = p.support_point(&lift(d))?;
        Ok((v, drop(&x)))
    };

    let mut pts: Vec<DVector<T>> = Vec::new();
    for k in 0..8 {
        let t = T::lit(k as f64 * std::f64::consts::FRAC_PI_4);
        let d = DVector::from_row_slice(&[t.cos(), t.sin()]);
        let (_, x) = query(&d)?;
        pts.push(x);
    }
    let (lo, hi) = p.bounding_box()?;
    let scale = (0..2)
        .map(|i| hi[dims[i]].abs().max(lo[dims[i]].abs()))
        .fold(T::one(), |a, b| a.max(b));
    let tol = T::lit(1e-9) * scale;
    dedup(&mut pts, tol);
    if pts.len() < 3 {
        return Ok(pts);
    }
    sort_ccw(&mut pts);
    let mut guard = 0;
    loop {
        let mut inserted = false;
        let mut i = 0;
        while i < pts.len() {
            let a = pts[i].clone();
            let b = pts[(i + 1) % pts.len()].clone();
            let edge = &b - &a;
            let len = edge.norm();
            if len <= tol {
                i += 1;
                continue;
            }
            let normal = DVector::from_row_slice(&[edge[1] / len, -edge[0] / len]);
            let (val, x) = query(&normal)?;
            if val > normal.dot(&a) + tol && pts.iter().all(|q| (q - &x).norm() > tol) {
                pts.insert(i + 1, x);
                inserted = true;
                i += 2;
            } else {
                i += 1;
            }
        }
        guard += 1;
        if !inserted || guard > 200 {
            break;
        }
    }
    remove_collinear(&mut pts, tol);
    Ok(pts)
}

fn dedup<T: Scalar>(pts: &mut Vec<DVector<T>>, tol: T) {
    let mut out: Vec<DVector<T>> = Vec::with_capacity(pts.len());
    for p in pts.drain(..) {
        if out.iter().all(|q| (q - &p).norm() > tol) {
            out.push(p);
        }
    }
    *pts = out;
}

fn remove_collinear<T: Scalar>(pts: &mut Vec<DVector<T>>, tol: T) {
    let mut changed = true;
    while changed && pts.len() > 3 {
        changed = false;
        for i in 0..pts.len() {
            let a = &pts[(i + pts.len() - 1) % pts.len()];
            let b = &pts[i];
            let c = &pts[(i + 1) % pts.len()];
            let ac = c - a;
            let len = ac.norm();
            if len <= tol {
                continue;
            }
            let ab = b - a;
            let dist = (ac[0] * ab[1] - ac[1] * ab[0]).abs() / len;
            if dist <= tol {
                pts.remove(i);
                changed = true;
                break;
            }
        }
    }
}

/// Halfspace form of a convex polygon given by its vertices. Points and
/// segments produce degenerate (flat) polytopes.
pub fn polygon_to_hpolytope<T: Scalar>(verts: &[DVector<T>]) -> Result<HPolytope<T>> {
    match verts.len() {
        0 => Ok(HPolytope::empty(2)),
        1 => HPolytope::from_box(&verts[0], &verts[0]),
        2 => {
            let (a, b) = (&verts[0], &verts[1]);
            let e = b - a;
            let len = e.norm();
            let u = &e / len;
            let nrm = DVector::from_row_slice(&[-u[1], u[0]]);
            let rows = [nrm.clone(), -nrm.clone(), u.clone(), -u.clone()];
            let rhs = [nrm.dot(a), -nrm.dot(a), u.dot(b), -u.dot(a)];
            let h = DMatrix::from_fn(4, 2, |i, j| rows[i][j]);
            HPolytope::new(h, DVector::from_row_slice(&rhs))
        }
        k => {
            let mut pts = verts.to_vec();
            sort_ccw(&mut pts);
            let mut h = DMatrix::zeros(k, 2);
            let mut b = DVector::zeros(k);
            for i in 0..k {
                let a = &pts[i];
                let c = &pts[(i + 1) % k];
                let e = c - a;
                let len = e.norm();
                let nrm = DVector::from_row_slice(&[e[1] / len, -e[0] / len]);
                h[(i, 0)] = nrm[0];
                h[(i, 1)] = nrm[1];
                b[i] = nrm.dot(a);
            }
            HPolytope::new(h, b)
        }
    }
}

/// Fourier–Motzkin elimination of every coordinate not listed in `keep`.
pub fn fourier_motzkin<T: Scalar>(p: &HPolytope<T>, keep: &[usize]) -> Result<HPolytope<T>> {
    let n = p.dim();
    let mut cur = p.prune_redundant();
    let mut alive: Vec<usize> = (0..n).collect();
    for var in (0..n).rev() {
        if keep.contains(&var) {
            continue;
        }
        let col = alive.iter().position(|&v| v == var).expect("live column");
        cur = eliminate(&cur, col)?.prune_redundant();
        alive.remove(col);
    }
    // Reorder columns to match `keep`.
    let perm: Vec<usize> = keep
        .iter()
        .map(|k| alive.iter().position(|v| v == k).expect("kept column"))
        .collect();
    let h = DMatrix::from_fn(cur.num_rows(), keep.len(), |i, j| cur.h_mat()[(i, perm[j])]);
    HPolytope::new(h, cur.h_vec().clone())
}

fn eliminate<T: Scalar>(p: &HPolytope<T>, col: usize) -> Result<HPolytope<T>> {
    let h = p.h_mat();
    let b = p.h_vec();
    let tol = T::lit(1e-12);
    let (mut pos, mut neg, mut zero) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..p.num_rows() {
        let a = h[(i, col)];
        if a > tol {
            pos.push(i);
        } else if a < -tol {
            neg.push(i);
        } else {
            zero.push(i);
        }
    }
    let n = p.dim();
    let mut rows: Vec<Vec<T>> = Vec::new();
    let mut rhs: Vec<T> = Vec::new();
    let strip = |i: usize, s: T| -> (Vec<T>, T) {
        let row = (0..n)
            .filter(|&j| j != col)
            .map(|j| h[(i, j)] * s)
            .collect();
        (row, b[i] * s)
    };
    for &i in &zero {
        let (r, v) = strip(i, T::one());
        rows.push(r);
        rhs.push(v);
    }
    for &i in &pos {
        for &k in &neg {
            let (ri, vi) = strip(i, T::one() / h[(i, col)]);
            let (rk, vk) = strip(k, T::one() / (-h[(k, col)]));
            rows.push(ri.iter().zip(&rk).map(|(a, c)| *a + *c).collect());
            rhs.push(vi + vk);
        }
    }
    let m = DMatrix::from_fn(rows.len(), n - 1, |i, j| rows[i][j]);
    HPolytope::new(m, DVector::from_vec(rhs))
}
