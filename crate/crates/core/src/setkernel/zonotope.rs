use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::lp;
use crate::scalar::Scalar;

use super::hpolytope::HPolytope;
use super::linalg::{hyperplane_normal, orthonormal_range};

/// Above this many generators, point membership goes through the
/// cutting-plane dual instead of one large LP.
const CUTTING_PLANE_MIN_GENERATORS: usize = 32;
const CUTTING_PLANE_ROUNDS: usize = 2000;

/// `G sign(Gᵀl)`, the polar facet active at `l`.
fn facet<T: Scalar>(g: &DMatrix<T>, l: &DVector<T>) -> DVector<T> {
    let s = (g.transpose() * l).map(|v| if v >= T::zero() { T::one() } else { -T::one() });
    g * s
}

/// `{c + Gβ : ‖β‖∞ ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope<T: Scalar = f64> {
    center: DVector<T>,
    generators: DMatrix<T>,
}

impl<T: Scalar> Zonotope<T> {
    pub fn new(center: DVector<T>, generators: DMatrix<T>) -> Result<Self> {
        check_dim(center.len(), generators.nrows())?;
        if center
            .iter()
            .chain(generators.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("zonotope entries must be finite"));
        }
        Ok(Self { center, generators })
    }

    /// Singleton `{c}`.
    pub fn point(center: DVector<T>) -> Self {
        let n = center.len();
        Self {
            center,
            generators: DMatrix::zeros(n, 0),
        }
    }

    /// Axis-aligned box `[lo, hi]`.
    pub fn from_box(lo: &DVector<T>, hi: &DVector<T>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
            return Err(Error::EmptySet);
        }
        let two = T::lit(2.0);
        let center = (lo + hi) / two;
        let radii = (hi - lo) / two;
        Self::new(center, DMatrix::from_diagonal(&radii))
    }

    /// Box centered at `center` with half-widths `radii`.
    pub fn centered_box(center: DVector<T>, radii: &DVector<T>) -> Result<Self> {
        check_dim(center.len(), radii.len())?;
        Self::new(center, DMatrix::from_diagonal(radii))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn center(&self) -> &DVector<T> {
        &self.center
    }

    pub fn generators(&self) -> &DMatrix<T> {
        &self.generators
    }

    pub fn minkowski_sum(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        let n = self.dim();
        let (ga, gb) = (self.num_generators(), other.num_generators());
        let mut g = DMatrix::zeros(n, ga + gb);
        g.view_mut((0, 0), (n, ga)).copy_from(&self.generators);
        g.view_mut((0, ga), (n, gb)).copy_from(&other.generators);
        Ok(Self {
            center: &self.center + &other.center,
            generators: g,
        })
    }

    /// Image `{Mx : x ∈ Z}`.
    pub fn linear_map(&self, m: &DMatrix<T>) -> Result<Self> {
        check_dim(self.dim(), m.ncols())?;
        Ok(Self {
            center: m * &self.center,
            generators: m * &self.generators,
        })
    }

    pub fn translate(&self, v: &DVector<T>) -> Result<Self> {
        check_dim(self.dim(), v.len())?;
        Ok(Self {
            center: &self.center + v,
            generators: self.generators.clone(),
        })
    }

    /// Cartesian product `Z × other`.
    pub fn cartesian(&self, other: &Self) -> Self {
        let (n, m) = (self.dim(), other.dim());
        let (ga, gb) = (self.num_generators(), other.num_generators());
        let mut c = DVector::zeros(n + m);
        c.rows_mut(0, n).copy_from(&self.center);
        c.rows_mut(n, m).copy_from(&other.center);
        let mut g = DMatrix::zeros(n + m, ga + gb);
        g.view_mut((0, 0), (n, ga)).copy_from(&self.generators);
        g.view_mut((n, ga), (m, gb)).copy_from(&other.generators);
        Self {
            center: c,
            generators: g,
        }
    }

    /// Support function `max_{x∈Z} dᵀx`.
    pub fn support(&self, d: &DVector<T>) -> T {
        let proj = self.generators.tr_mul(d);
        d.dot(&self.center) + proj.iter().fold(T::zero(), |s, v| s + v.abs())
    }

    /// Half-widths of the interval hull.
    pub fn radii(&self) -> DVector<T> {
        DVector::from_iterator(
            self.dim(),
            self.generators
                .row_iter()
                .map(|r| r.iter().fold(T::zero(), |s, v| s + v.abs())),
        )
    }

    pub fn interval_hull(&self) -> (DVector<T>, DVector<T>) {
        let r = self.radii();
        (&self.center - &r, &self.center + &r)
    }

    /// Membership by LP: minimize ‖β‖∞ subject to `Gβ = x − c`.
    pub fn contains_point(&self, x: &DVector<T>) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let eps = T::feas_tol();
        let d = x - &self.center;
        let g = self.num_generators();
        if g == 0 {
            return d.amax() <= eps;
        }
        // Cheap rejection by interval hull.
        let r = self.radii();
        if (0..d.len()).any(|i| d[i].abs() > r[i] + eps) {
            return false;
        }
        if g > CUTTING_PLANE_MIN_GENERATORS {
            if let Some(inside) = self.contains_by_cuts(&d) {
                return inside;
            }
        }
        self.contains_by_lp(&d)
    }

    /// Dual of `min ‖β‖∞ s.t. Gβ = d`: `max dᵀl s.t. ‖Gᵀl‖₁ ≤ 1`, solved
    /// by adding one facet `(G sign(Gᵀl))ᵀ l ≤ 1` of the polar per round.
    /// Every LP has `n` variables, so this scales with the dimension
    /// rather than the generator count. `None` when it fails to settle.
    fn contains_by_cuts(&self, d: &DVector<T>) -> Option<bool> {
        let n = self.dim();
        let eps = T::feas_tol();
        let scale = self.generators.amax();
        if scale <= T::zero() {
            return Some(d.amax() <= eps);
        }
        let gs = &self.generators / scale;
        let ds = d / scale;
        let bound = T::lit(1e6);
        let mut rows: Vec<DVector<T>> = Vec::new();
        let mut rhs: Vec<T> = Vec::new();
        for j in 0..n {
            for sgn in [T::one(), -T::one()] {
                let mut e = DVector::zeros(n);
                e[j] = sgn;
                rows.push(e.clone());
                rhs.push(bound);
                rows.push(facet(&gs, &e));
                rhs.push(T::one());
            }
        }
        rows.push(facet(&gs, &ds));
        rhs.push(T::one());
        for _ in 0..CUTTING_PLANE_ROUNDS {
            let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
            let b = DVector::from_column_slice(&rhs);
            let l = lp::minimize(&-&ds, &a, &b).ok()?.x;
            let value = ds.dot(&l);
            // The relaxation bounds the optimum from above.
            if value <= T::one() + eps {
                return Some(true);
            }
            let h = (gs.transpose() * &l).abs().sum();
            // l / h is dual feasible, which bounds it from below.
            if h > T::zero() && value / h > T::one() + eps {
                return Some(false);
            }
            rows.push(facet(&gs, &l));
            rhs.push(T::one());
        }
        None
    }

    fn contains_by_lp(&self, d: &DVector<T>) -> bool {
        let eps = T::feas_tol();
        let g = self.num_generators();
        let n = self.dim();
        // Variables (β, t); rows: ±(Gβ − d) ≤ slack, ±β − t ≤ 0.
        let slack = eps * T::lit(0.1);
        let nv = g + 1;
        let mut a = DMatrix::zeros(2 * n + 2 * g, nv);
        let mut b = DVector::zeros(2 * n + 2 * g);
        for i in 0..n {
            for j in 0..g {
                a[(i, j)] = self.generators[(i, j)];
                a[(n + i, j)] = -self.generators[(i, j)];
            }
            b[i] = d[i] + slack;
            b[n + i] = -d[i] + slack;
        }
        for j in 0..g {
            a[(2 * n + j, j)] = T::one();
            a[(2 * n + j, g)] = -T::one();
            a[(2 * n + g + j, j)] = -T::one();
            a[(2 * n + g + j, g)] = -T::one();
        }
        let mut c = DVector::zeros(nv);
        c[g] = T::one();
        match lp::minimize(&c, &a, &b) {
            Ok(sol) => sol.value <= T::one() + eps,
            Err(_) => false,
        }
    }

    /// True iff `other ⊆ self` (exact: `self` is converted to halfspaces).
    pub fn contains_zonotope(&self, other: &Self) -> Result<bool> {
        Ok(self.to_hpolytope()?.contains_zonotope(other))
    }

    /// Removes zero generators and merges parallel ones (an exact rewrite).
    pub fn compact(&self) -> Self {
        let n = self.dim();
        let scale = self
            .generators
            .column_iter()
            .fold(T::zero(), |m, c| m.max(c.norm()));
        let tiny = scale * T::lit(1e-14);
        let mut dirs: Vec<(DVector<T>, DVector<T>)> = Vec::new();
        'outer: for col in self.generators.column_iter() {
            let norm = col.norm();
            if norm <= tiny || norm == T::zero() {
                continue;
            }
            let mut unit: DVector<T> = col.into_owned() / norm;
            // Canonical orientation: first significant entry positive.
            if let Some(k) = unit.iter().position(|v| v.abs() > T::lit(1e-12)) {
                if unit[k] < T::zero() {
                    unit = -unit;
                }
            }
            let col = col.into_owned();
            for (u, acc) in dirs.iter_mut() {
                let along = col.dot(u);
                // Merge only when the orthogonal residue is at round-off level.
                if (&col - &*u * along).norm() <= tiny {
                    *acc += &*u * along.abs();
                    continue 'outer;
                }
            }
            let len = col.dot(&unit).abs();
            dirs.push((unit.clone(), unit * len));
        }
        let mut g = DMatrix::zeros(n, dirs.len());
        for (k, (_, acc)) in dirs.iter().enumerate() {
            g.set_column(k, acc);
        }
        Self {
            center: self.center.clone(),
            generators: g,
        }
    }

    /// Girard order reduction: keeps the `max_gens − n` generators with the
    /// largest `‖g‖₁ − ‖g‖∞` and boxes the rest. The result contains `self`.
    pub fn reduce(&self, max_gens: usize) -> Self {
        let z = self.compact();
        let n = z.dim();
        let g = z.num_generators();
        if g <= max_gens || max_gens < n {
            return z;
        }
        let keep = max_gens - n;
        let mut score: Vec<(usize, T)> = z
            .generators
            .column_iter()
            .enumerate()
            .map(|(j, c)| (j, c.lp_norm(1) - c.amax()))
            .collect();
        score.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        let mut kept = DMatrix::zeros(n, keep + n);
        let mut boxed = DVector::zeros(n);
        for (rank, &(j, _)) in score.iter().enumerate() {
            let col = z.generators.column(j);
            if rank < keep {
                kept.set_column(rank, &col);
            } else {
                boxed += col.abs();
            }
        }
        for i in 0..n {
            kept[(i, keep + i)] = boxed[i];
        }
        Self {
            center: z.center,
            generators: kept,
        }
        .compact()
    }

    /// Rank of the generator matrix.
    pub fn rank(&self) -> usize {
        orthonormal_range(&self.generators).ncols()
    }

    pub fn is_full_dimensional(&self) -> bool {
        self.rank() == self.dim()
    }

    /// Halfspace representation. Flat zonotopes get equality pairs for the
    /// directions orthogonal to their span.
    pub fn to_hpolytope(&self) -> Result<HPolytope<T>> {
        let z = self.compact();
        let n = z.dim();
        if n == 0 {
            return HPolytope::new(DMatrix::zeros(0, 0), DVector::zeros(0));
        }
        let basis = orthonormal_range(&z.generators);
        let r = basis.ncols();
        let mut rows: Vec<DVector<T>> = Vec::new();
        let mut rhs: Vec<T> = Vec::new();
        // Complement directions: equalities.
        let complement = complement_basis(&basis, n);
        for q in complement.column_iter() {
            let q = q.into_owned();
            let off = q.dot(&z.center);
            rows.push(q.clone());
            rhs.push(off);
            rows.push(-q);
            rhs.push(-off);
        }
        if r > 0 {
            // Work in span coordinates y = Uᵀ(x − c).
            let gy = basis.tr_mul(&z.generators);
            let facets = zonotope_facets(&gy);
            for nrm in facets {
                let off = gy.tr_mul(&nrm).iter().fold(T::zero(), |s, v| s + v.abs());
                let full = &basis * &nrm;
                rhs.push(full.dot(&z.center) + off);
                rows.push(full);
            }
        }
        let mut h = DMatrix::zeros(rows.len(), n);
        for (i, row) in rows.iter().enumerate() {
            h.set_row(i, &row.transpose());
        }
        HPolytope::new(h, DVector::from_vec(rhs))
    }

    /// Vertices (a superset of the extreme points when `n > 2`).
    pub fn vertices(&self) -> Result<Vec<DVector<T>>> {
        let z = self.compact();
        let n = z.dim();
        let g = z.num_generators();
        if g == 0 {
            return Ok(vec![z.center.clone()]);
        }
        if n == 2 {
            return Ok(z.polygon_vertices());
        }
        if g <= 14 {
            let mut out = Vec::with_capacity(1 << g);
            for mask in 0u32..(1u32 << g) {
                let mut v = z.center.clone();
                for j in 0..g {
                    let s = if mask & (1 << j) != 0 {
                        T::one()
                    } else {
                        -T::one()
                    };
                    v += z.generators.column(j) * s;
                }
                out.push(v);
            }
            return Ok(out);
        }
        z.to_hpolytope()?.vertices()
    }

    /// Counter-clockwise vertex list of a planar zonotope.
    fn polygon_vertices(&self) -> Vec<DVector<T>> {
        let g = self.num_generators();
        let mut gens: Vec<DVector<T>> = self
            .generators
            .column_iter()
            .map(|c| {
                let c = c.into_owned();
                // Orient into the upper half plane.
                if c[1] < T::zero() || (c[1] == T::zero() && c[0] < T::zero()) {
                    -c
                } else {
                    c
                }
            })
            .collect();
        gens.sort_by(|a, b| {
            let ta = a[1].atan2(a[0]);
            let tb = b[1].atan2(b[0]);
            ta.partial_cmp(&tb).unwrap_or(std::cmp::Ordering::Equal)
        });
        let sum = gens.iter().fold(DVector::zeros(2), |s, v| s + v);
        let mut p = &self.center - &sum;
        let mut out = Vec::with_capacity(2 * g);
        let two = T::lit(2.0);
        for v in gens.iter() {
            out.push(p.clone());
            p += v * two;
        }
        for v in gens.iter() {
            out.push(p.clone());
            p -= v * two;
        }
        out
    }
}

fn complement_basis<T: Scalar>(basis: &DMatrix<T>, n: usize) -> DMatrix<T> {
    let r = basis.ncols();
    if r == n {
        return DMatrix::zeros(n, 0);
    }
    // Project the identity onto the orthogonal complement and orthonormalize.
    let proj = DMatrix::identity(n, n) - basis * basis.transpose();
    let comp = orthonormal_range(&proj);
    comp.columns(0, (n - r).min(comp.ncols())).into_owned()
}

/// Facet normals (unit, both orientations) of a full-dimensional zonotope
/// with generator matrix `g` (r × p).
fn zonotope_facets<T: Scalar>(g: &DMatrix<T>) -> Vec<DVector<T>> {
    let r = g.nrows();
    let p = g.ncols();
    if r == 1 {
        return vec![
            DVector::from_element(1, T::one()),
            DVector::from_element(1, -T::one()),
        ];
    }
    let mut normals: Vec<DVector<T>> = Vec::new();
    let mut push = |nrm: DVector<T>| {
        for existing in normals.iter() {
            if (existing - &nrm).amax() <= T::lit(1e-10) {
                return;
            }
        }
        normals.push(nrm);
    };
    let k = r - 1;
    let mut idx: Vec<usize> = (0..k).collect();
    if p < k {
        return Vec::new();
    }
    loop {
        let cols: Vec<DVector<T>> = idx.iter().map(|&j| g.column(j).into_owned()).collect();
        if let Some(nrm) = hyperplane_normal(&cols, r) {
            push(nrm.clone());
            push(-nrm);
        }
        // Next combination.
        let mut i = k;
        loop {
            if i == 0 {
                return normals;
            }
            i -= 1;
            if idx[i] < p - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
            if i == 0 {
                return normals;
            }
        }
    }
}
