use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::{self, LpError};
use crate::scalar::Scalar;

use super::hpolytope::HPolytope;
use super::zonotope::Zonotope;

/// Zonotopic inner approximation of a bounded, nonempty polytope.
///
/// Generator directions are the coordinate axes plus `n` shape directions
/// (the longest edges for polygons, principal axes of support points
/// otherwise). Center and generator lengths are LP variables: first the
/// largest uniform length is found, then the total length is maximized
/// with every generator kept at least at that uniform length.
pub fn inner_zonotope<T: Scalar>(p: &HPolytope<T>) -> Result<Zonotope<T>> {
    let p = p.prune_redundant();
    if p.is_empty() {
        return Err(Error::EmptySet);
    }
    if !p.is_bounded() {
        return Err(Error::Unbounded);
    }
    let n = p.dim();
    let dirs = template(&p)?;
    let g = dirs.len();
    let q = p.num_rows();
    let h = p.h_mat();
    // |H_r d_i| coefficients.
    let coef = DMatrix::from_fn(q, g, |r, i| h.row(r).transpose().dot(&dirs[i]).abs());

    // Stage 1: variables (c, λ); H c + λ Σ_i |H_r d_i| ≤ h.
    let mut a = DMatrix::zeros(q + 1, n + 1);
    let mut b = DVector::zeros(q + 1);
    for r in 0..q {
        for j in 0..n {
            a[(r, j)] = h[(r, j)];
        }
        a[(r, n)] = coef.row(r).sum();
        b[r] = p.h_vec()[r];
    }
    a[(q, n)] = -T::one();
    let mut cost = DVector::zeros(n + 1);
    cost[n] = -T::one();
    let stage1 = lp::minimize(&cost, &a, &b).map_err(lp_err)?;
    let lambda = stage1.x[n].max(T::zero()) * (T::one() - T::lit(1e-9));

    // Stage 2: variables (c, s_1..s_g); maximize Σ s_i with s_i ≥ λ.
    let nv = n + g;
    let mut a = DMatrix::zeros(q + g, nv);
    let mut b = DVector::zeros(q + g);
    for r in 0..q {
        for j in 0..n {
            a[(r, j)] = h[(r, j)];
        }
        for i in 0..g {
            a[(r, n + i)] = coef[(r, i)];
        }
        b[r] = p.h_vec()[r];
    }
    for i in 0..g {
        a[(q + i, n + i)] = -T::one();
        b[q + i] = -lambda;
    }
    let mut cost = DVector::zeros(nv);
    for i in 0..g {
        cost[n + i] = -T::one();
    }
    let (center, lens) = match lp::minimize(&cost, &a, &b) {
        Ok(sol) => (sol.x.rows(0, n).into_owned(), sol.x.rows(n, g).into_owned()),
        // Numerical trouble in stage 2: fall back to the uniform solution.
        Err(_) => (
            stage1.x.rows(0, n).into_owned(),
            DVector::from_element(g, lambda),
        ),
    };
    let mut gens = DMatrix::zeros(n, g);
    for i in 0..g {
        gens.set_column(i, &(&dirs[i] * lens[i].max(T::zero())));
    }
    let z = Zonotope::new(center, gens)?.compact();
    // Round-off guard: shrink slightly if any facet is violated.
    if p.contains_zonotope(&z) {
        Ok(z)
    } else {
        let shrunk = Zonotope::new(z.center().clone(), z.generators() * T::lit(1.0 - 1e-7))?;
        Ok(shrunk)
    }
}

fn lp_err(e: LpError) -> Error {
    match e {
        LpError::Infeasible => Error::EmptySet,
        LpError::Unbounded => Error::Unbounded,
        other => other.into(),
    }
}

fn template<T: Scalar>(p: &HPolytope<T>) -> Result<Vec<DVector<T>>> {
    let n = p.dim();
    let mut dirs: Vec<DVector<T>> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = T::one();
            e
        })
        .collect();
    let extra: Vec<DVector<T>> = if n == 2 {
        longest_edges(p, n)?
    } else {
        principal_axes(p)?
    };
    for d in extra {
        let len = d.norm();
        if len <= T::lit(1e-12) {
            continue;
        }
        let u = d / len;
        if dirs
            .iter()
            .all(|e| e.dot(&u).abs() < T::one() - T::lit(1e-9))
        {
            dirs.push(u);
        }
    }
    Ok(dirs)
}

fn longest_edges<T: Scalar>(p: &HPolytope<T>, k: usize) -> Result<Vec<DVector<T>>> {
    let vs = p.vertices()?;
    if vs.len() < 3 {
        return Ok(Vec::new());
    }
    let mut edges: Vec<DVector<T>> = (0..vs.len())
        .map(|i| &vs[(i + 1) % vs.len()] - &vs[i])
        .collect();
    edges.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    edges.truncate(k);
    Ok(edges)
}

fn principal_axes<T: Scalar>(p: &HPolytope<T>) -> Result<Vec<DVector<T>>> {
    let n = p.dim();
    let mut pts: Vec<DVector<T>> = Vec::new();
    for i in 0..n {
        for s in [T::one(), -T::one()] {
            let mut e = DVector::zeros(n);
            e[i] = s;
            pts.push(p.support_point(&e)?.1);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut e = DVector::zeros(n);
                e[i] = T::lit(si);
                e[j] = T::lit(sj);
                pts.push(p.support_point(&e)?.1);
            }
        }
    }
    let k = T::of_usize(pts.len());
    let mean = pts.iter().fold(DVector::zeros(n), |s, x| s + x) / k;
    let mut cov = DMatrix::zeros(n, n);
    for x in &pts {
        let d = x - &mean;
        cov += &d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    Ok(eig
        .eigenvectors
        .column_iter()
        .map(|c| c.into_owned())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setkernel::sample::volume_estimate;
    use crate::setkernel::Set;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn box_is_recovered_exactly() {
        let p = HPolytope::from_box(&v(&[-1.0, -1.0]), &v(&[1.0, 1.0])).unwrap();
        let z = inner_zonotope(&p).unwrap();
        let (lo, hi) = z.interval_hull();
        assert!((lo - v(&[-1.0, -1.0])).amax() < 1e-6);
        assert!((hi - v(&[1.0, 1.0])).amax() < 1e-6);
        assert!(p.contains_zonotope(&z));
    }

    #[test]
    fn triangle_keeps_a_quarter_of_the_area() {
        let tri = HPolytope::new(
            DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            v(&[0.0, 0.0, 1.0]),
        )
        .unwrap();
        let z = inner_zonotope(&tri).unwrap();
        assert!(tri.contains_zonotope(&z));
        let vol = volume_estimate(&Set::Zonotope(z), 100_000, 3).unwrap();
        assert!(vol.volume >= 0.25 * 0.5, "{}", vol.volume);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(
            inner_zonotope(&HPolytope::<f64>::empty(2)),
            Err(Error::EmptySet)
        ));
    }

    #[test]
    fn three_dimensional_polytope() {
        let h = DMatrix::from_row_slice(
            4,
            3,
            &[
                -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 1.0, 1.0,
            ],
        );
        let p = HPolytope::new(h, v(&[0.0, 0.0, 0.0, 1.0])).unwrap();
        let z = inner_zonotope(&p).unwrap();
        assert!(p.contains_zonotope(&z));
        assert!(z.is_full_dimensional());
    }
}
