//! Offline synthesis: Voronoi partition of the safe region, terminal robust
//! invariant sets, and per-cell families of robust one-step controllable sets
//! with their augmented `(x, u)` descriptions.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::lp;
use crate::setkernel::sample::{draw_box, stream_rng};
use crate::setkernel::{self, inner_zonotope, project, project_polygon, Set};
use crate::{HPolytope, MatrixZonotope, Zonotope};

// ---------------------------------------------------------------------------
// Voronoi partition

/// Cells `X_η ∩ {x : 2(x_j − x_l)ᵀx ≤ ‖x_j‖² − ‖x_l‖², j ≠ l}`.
pub fn voronoi_partition(x_eta: &HPolytope, seeds: &[DVector<f64>]) -> Result<Vec<HPolytope>> {
    let n = x_eta.dim();
    for (i, a) in seeds.iter().enumerate() {
        check_dim(n, a.len())?;
        if seeds[..i].iter().any(|b| (a - b).norm() == 0.0) {
            return Err(Error::invalid("duplicate Voronoi seeds"));
        }
    }
    let mut cells = Vec::with_capacity(seeds.len());
    for (l, xl) in seeds.iter().enumerate() {
        let others: Vec<&DVector<f64>> = seeds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != l)
            .map(|(_, x)| x)
            .collect();
        let mut h = DMatrix::zeros(others.len(), n);
        let mut b = DVector::zeros(others.len());
        for (r, xj) in others.iter().enumerate() {
            h.set_row(r, &(((*xj - xl) * 2.0).transpose()));
            b[r] = xj.norm_squared() - xl.norm_squared();
        }
        let cell = x_eta.intersect(&HPolytope::new(h, b)?)?.prune_redundant();
        cells.push(cell);
    }
    Ok(cells)
}

/// Index of the nearest seed; ties go to the lowest index.
pub fn classify(seeds: &[DVector<f64>], x: &DVector<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (l, s) in seeds.iter().enumerate() {
        let d = (x - s).norm_squared();
        if d < best_d {
            best = l;
            best_d = d;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Equilibria and terminal sets

/// Nearest point to `target` among equilibria `(x, u)` of the center model
/// with `u ∈ u_set` and `x ∈ x_set`. Solved by Frank–Wolfe over `u` with an
/// LP oracle.
pub fn admissible_equilibrium(
    m: &MatrixZonotope,
    target: &DVector<f64>,
    x_set: &HPolytope,
    u_set: &HPolytope,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = target.len();
    let (a, b) = crate::sysid::split_ab(m.center(), n);
    let mu = u_set.dim();
    // x = (I − A)⁻¹ B u =: S u
    let ia = DMatrix::identity(n, n) - &a;
    let s = ia
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Synthesis("center model has an eigenvalue at 1".into()))?;
    // Feasible region in u: u_set ∩ {u : H_x S u ≤ h_x}.
    let region = u_set.intersect(&HPolytope::new(x_set.h_mat() * &s, x_set.h_vec().clone())?)?;
    let mut u = region
        .chebyshev_center()
        .map_err(|_| Error::Synthesis("no admissible equilibrium in the requested region".into()))?
        .0;
    for it in 0..500 {
        let grad = s.transpose() * (&s * &u - target) * 2.0;
        let vertex = match lp::minimize(&grad, region.h_mat(), region.h_vec()) {
            Ok(sol) => sol.x,
            Err(_) => break,
        };
        let d = &vertex - &u;
        let gap = -grad.dot(&d);
        if gap <= 1e-12 {
            break;
        }
        // Exact line search for the quadratic.
        let sd = &s * &d;
        let denom = 2.0 * sd.norm_squared();
        let step = if denom > 0.0 {
            (gap / denom).min(1.0)
        } else {
            1.0
        };
        u += d * step;
        if it > 10 && step < 1e-10 {
            break;
        }
    }
    let _ = mu;
    Ok((&s * &u, u))
}

/// Spectral radius of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct RciOptions {
    /// Closed-loop pole locations tried (in order) for the gain
    /// `K = −B̂⁺(Â − λI)` on the center model.
    pub lambdas: Vec<f64>,
    /// Skip the search and use this gain.
    pub gain: Option<DMatrix<f64>>,
    /// Generator budget for the matrix-zonotope vertex enumeration.
    pub g_max: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RciOptions {
    fn default() -> Self {
        Self {
            lambdas: vec![0.5, 0.6, 0.4, 0.7, 0.3, 0.8, 0.2, 0.0, 0.9],
            gain: None,
            g_max: 8,
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

/// Result of the terminal-set synthesis.
#[derive(Debug, Clone)]
pub struct RciResult {
    pub gain: DMatrix<f64>,
    pub t0: Zonotope,
    pub max_spectral_radius: f64,
}

/// Terminal gain and robust invariant box around `(x_e, u_e)`.
///
/// The error `e = x − x_e` obeys `e⁺ = (Â + B̂K)e + r̂ + w` for each vertex
/// `[Â, B̂]`, where `r̂ = Âx_e + B̂u_e − x_e` is the equilibrium residual. The
/// interval hull of that recursion is iterated to its fixed point and then
/// checked: one-step images of the box under all vertices must stay inside,
/// the box must lie in `x_set`, and `K(T₀ − x_e) + u_e ⊆ u_set`.
pub fn synthesize_rci(
    m: &MatrixZonotope,
    x_e: &DVector<f64>,
    u_e: &DVector<f64>,
    w: &Zonotope,
    u_set: &HPolytope,
    x_set: &HPolytope,
    opts: &RciOptions,
) -> Result<RciResult> {
    let n = x_e.len();
    check_dim(m.shape().0, n)?;
    check_dim(m.shape().1, n + u_e.len())?;
    let verts = m.vertices(opts.g_max);
    let (ac, bc) = crate::sysid::split_ab(m.center(), n);
    let mut gains: Vec<DMatrix<f64>> = Vec::new();
    if let Some(k) = &opts.gain {
        gains.push(k.clone());
    } else {
        let bp = setkernel::linalg::pinv(&bc);
        for &lam in &opts.lambdas {
            gains.push(-(&bp * (&ac - DMatrix::identity(n, n) * lam)));
        }
    }
    let mut last_err = Error::Synthesis("no candidate gain".into());
    for k in gains {
        match try_gain(&verts, &k, x_e, u_e, w, u_set, x_set, opts) {
            Ok(r) => return Ok(r),
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

#[allow(clippy::too_many_arguments)]
fn try_gain(
    verts: &[DMatrix<f64>],
    k: &DMatrix<f64>,
    x_e: &DVector<f64>,
    u_e: &DVector<f64>,
    w: &Zonotope,
    u_set: &HPolytope,
    x_set: &HPolytope,
    opts: &RciOptions,
) -> Result<RciResult> {
    let n = x_e.len();
    let mut closed = Vec::with_capacity(verts.len());
    let mut rho: f64 = 0.0;
    for v in verts {
        let (a, b) = crate::sysid::split_ab(v, n);
        let acl = &a + &b * k;
        rho = rho.max(spectral_radius(&acl));
        let r = &a * x_e + &b * u_e - x_e;
        closed.push((acl, r));
    }
    if rho >= 1.0 {
        return Err(Error::Synthesis(format!(
            "gain does not stabilize every vertex model (spectral radius {rho:.4})"
        )));
    }
    let (wlo, whi) = w.interval_hull();
    let step = |lo: &DVector<f64>, hi: &DVector<f64>| {
        let mut nlo = DVector::from_element(n, f64::INFINITY);
        let mut nhi = DVector::from_element(n, f64::NEG_INFINITY);
        let c = (lo + hi) * 0.5;
        let rad = (hi - lo) * 0.5;
        for (acl, r) in &closed {
            let cc = acl * &c + r;
            let rr = acl.abs() * &rad;
            for i in 0..n {
                nlo[i] = nlo[i].min(cc[i] - rr[i] + wlo[i]);
                nhi[i] = nhi[i].max(cc[i] + rr[i] + whi[i]);
            }
        }
        (nlo, nhi)
    };
    let mut lo = DVector::zeros(n);
    let mut hi = DVector::zeros(n);
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let (nlo, nhi) = step(&lo, &hi);
        let nlo = nlo.zip_map(&lo, f64::min);
        let nhi = nhi.zip_map(&hi, f64::max);
        let inc = (&nlo - &lo).amax().max((&nhi - &hi).amax());
        lo = nlo;
        hi = nhi;
        if !lo.iter().chain(hi.iter()).all(|v| v.is_finite()) || hi.amax() > 1e6 {
            break;
        }
        if inc <= opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Synthesis("terminal set iteration diverged".into()));
    }
    let invariant = |lo: &DVector<f64>, hi: &DVector<f64>| {
        let (nlo, nhi) = step(lo, hi);
        (0..n).all(|i| nlo[i] >= lo[i] - 1e-12 && nhi[i] <= hi[i] + 1e-12)
    };
    if !invariant(&lo, &hi) {
        // Inflate around the center until the box is invariant.
        let c = (&lo + &hi) * 0.5;
        let rad = (&hi - &lo) * 0.5;
        let mut ok = false;
        for f in [1.001, 1.01, 1.05, 1.1, 1.25, 1.5] {
            let r = rad.map(|v| v * f + 1e-9);
            let (l2, h2) = (&c - &r, &c + &r);
            if invariant(&l2, &h2) {
                lo = l2;
                hi = h2;
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Synthesis("terminal box is not invariant".into()));
        }
    }
    let t0 = Zonotope::from_box(&(x_e + &lo), &(x_e + &hi))?.compact();
    if !x_set.contains_zonotope(&t0) {
        return Err(Error::Synthesis(
            "terminal set leaves the safe region".into(),
        ));
    }
    let u_image = t0.translate(&(-x_e))?.linear_map(k)?.translate(u_e)?;
    if !u_set.contains_zonotope(&u_image) {
        return Err(Error::Synthesis(
            "terminal law exceeds the input constraints".into(),
        ));
    }
    Ok(RciResult {
        gain: k.clone(),
        t0,
        max_spectral_radius: rho,
    })
}

// ---------------------------------------------------------------------------
// One-step controllable sets

/// `h_r − max_{w∈W} H_r w` for every row.
pub fn tilde_h(hc: &DMatrix<f64>, h: &DVector<f64>, w: &Zonotope) -> DVector<f64> {
    DVector::from_iterator(
        h.len(),
        (0..h.len()).map(|r| h[r] - w.support(&hc.row(r).transpose())),
    )
}

#[derive(Debug, Clone)]
pub struct RoscOptions {
    /// Extra tightening of every target row (absorbs LP round-off online).
    pub margin: f64,
    /// Replace the augmented set by a zonotopic inner approximation before
    /// projecting.
    pub use_inner: bool,
    /// Simplify planar projections from the inside to at most this many
    /// vertices (0 = exact).
    pub max_vertices: usize,
}

impl Default for RoscOptions {
    fn default() -> Self {
        Self {
            margin: 1e-6,
            use_inner: false,
            max_vertices: 24,
        }
    }
}

impl RoscOptions {
    /// No tightening beyond the disturbance and no simplification.
    pub fn exact() -> Self {
        Self {
            margin: 0.0,
            use_inner: false,
            max_vertices: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RoscStep {
    /// Augmented `(x, u)` set.
    pub xi: HPolytope,
    /// Its projection onto `x`.
    pub c: HPolytope,
}

/// One backward step against an explicit list of vertex matrices.
pub fn rosc_step(
    target: &HPolytope,
    vertices: &[DMatrix<f64>],
    x_set: &HPolytope,
    u_set: &HPolytope,
    w: &Zonotope,
    opts: &RoscOptions,
) -> Result<RoscStep> {
    if vertices.is_empty() {
        return Err(Error::invalid("vertex list is empty"));
    }
    let target = prepare_target(target, w, opts)?;
    let n = x_set.dim();
    let p = n + u_set.dim();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for v in vertices {
        check_dim(n, v.nrows())?;
        check_dim(p, v.ncols())?;
        let hm = target.h_mat() * v;
        for r in 0..hm.nrows() {
            rows.push(hm.row(r).transpose());
            rhs.push(target.h_vec()[r]);
        }
    }
    finish(rows, rhs, x_set, u_set, opts)
}

/// One backward step against a matrix zonotope. Each target row becomes
/// `a₀z + Σ_k |a_k z| ≤ h̃` with parallel `a_k` merged, expanded into its
/// sign patterns. This equals the intersection over all vertex matrices.
pub fn rosc_step_mz(
    target: &HPolytope,
    m: &MatrixZonotope,
    x_set: &HPolytope,
    u_set: &HPolytope,
    w: &Zonotope,
    opts: &RoscOptions,
) -> Result<RoscStep> {
    let target = prepare_target(target, w, opts)?;
    let n = x_set.dim();
    let p = n + u_set.dim();
    check_dim(n, m.shape().0)?;
    check_dim(p, m.shape().1)?;
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for r in 0..target.num_rows() {
        let hr = target.h_mat().row(r);
        let a0 = (hr * m.center()).transpose();
        let mut g = DMatrix::zeros(p, m.num_generators());
        for (i, gi) in m.generators().iter().enumerate() {
            g.set_column(i, &(hr * gi).transpose());
        }
        let merged = Zonotope::new(DVector::zeros(p), g)?.compact();
        let k = merged.num_generators();
        if k > 12 {
            return Err(Error::invalid(
                "matrix zonotope too rich for sign expansion; reduce it first",
            ));
        }
        for mask in 0u32..(1u32 << k) {
            let mut a = a0.clone();
            for j in 0..k {
                if mask & (1 << j) != 0 {
                    a += merged.generators().column(j);
                } else {
                    a -= merged.generators().column(j);
                }
            }
            rows.push(a);
            rhs.push(target.h_vec()[r]);
        }
    }
    finish(rows, rhs, x_set, u_set, opts)
}

fn prepare_target(target: &HPolytope, w: &Zonotope, opts: &RoscOptions) -> Result<HPolytope> {
    let t = target.normalized();
    if t.num_rows() == 0 {
        return Err(Error::Unbounded);
    }
    if t.is_empty() {
        return Err(Error::EmptySet);
    }
    let th = tilde_h(t.h_mat(), t.h_vec(), w).add_scalar(-opts.margin);
    HPolytope::new(t.h_mat().clone(), th)
}

fn finish(
    rows: Vec<DVector<f64>>,
    rhs: Vec<f64>,
    x_set: &HPolytope,
    u_set: &HPolytope,
    opts: &RoscOptions,
) -> Result<RoscStep> {
    let n = x_set.dim();
    let p = n + u_set.dim();
    let dyn_rows = HPolytope::new(
        DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]),
        DVector::from_vec(rhs),
    )?;
    let xi = x_set
        .cartesian(u_set)
        .intersect(&dyn_rows)?
        .prune_redundant();
    if xi.is_empty() {
        return Err(Error::EmptySet);
    }
    let dims: Vec<usize> = (0..n).collect();
    let c = if opts.use_inner {
        let z = inner_zonotope(&xi)?;
        let proj = DMatrix::from_fn(n, p, |i, j| if i == j { 1.0 } else { 0.0 });
        z.linear_map(&proj)?.to_hpolytope()?.prune_redundant()
    } else if n == 2 {
        let mut verts = project_polygon(&xi, &dims)?;
        if opts.max_vertices >= 3 {
            simplify_polygon(&mut verts, opts.max_vertices);
        }
        setkernel::polygon_to_hpolytope(&verts)?.prune_redundant()
    } else {
        project(&xi, &dims)?
    };
    Ok(RoscStep { xi, c })
}

/// Drops vertices (smallest cut-off triangle first) until at most `max`
/// remain. The result is contained in the original polygon.
pub fn simplify_polygon(verts: &mut Vec<DVector<f64>>, max: usize) {
    while verts.len() > max.max(3) {
        let k = verts.len();
        let mut best = 0;
        let mut best_area = f64::INFINITY;
        for i in 0..k {
            let a = &verts[(i + k - 1) % k];
            let b = &verts[i];
            let c = &verts[(i + 1) % k];
            let area = ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs();
            if area < best_area {
                best_area = area;
                best = i;
            }
        }
        verts.remove(best);
    }
}

// ---------------------------------------------------------------------------
// Families

/// An equilibrium, its terminal law and invariant set, and its Voronoi cell.
#[derive(Debug, Clone)]
pub struct EquilibriumCell {
    pub index: usize,
    /// Voronoi generator.
    pub seed: DVector<f64>,
    /// Terminal equilibrium (center of `t0`).
    pub x_e: DVector<f64>,
    pub u_e: DVector<f64>,
    pub gain: DMatrix<f64>,
    pub t0: Zonotope,
    pub cell: HPolytope,
}

impl EquilibriumCell {
    /// Terminal law `K(x − x_e) + u_e`.
    pub fn terminal_input(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.gain * (x - &self.x_e) + &self.u_e
    }
}

/// Nested one-step controllable sets of one cell. Levels beyond `n_main`
/// extend the family so that other cells' terminal sets are covered; they
/// obey the same one-step contract.
#[derive(Debug, Clone)]
pub struct RoscFamily {
    pub cell: EquilibriumCell,
    /// `c[0]` is the box of the terminal set.
    pub c: Vec<HPolytope>,
    /// `xi[j − 1]` is the augmented set of level `j`.
    pub xi: Vec<HPolytope>,
    /// Levels needed to reach the coverage target (or the last level built
    /// before stalling or hitting the cap).
    pub n_main: usize,
    pub coverage: f64,
    pub stalled: bool,
}

impl RoscFamily {
    pub fn levels(&self) -> usize {
        self.c.len()
    }

    /// Smallest `j` with `x ∈ C_j`.
    pub fn level_of(&self, x: &DVector<f64>) -> Option<usize> {
        self.c.iter().position(|c| c.contains_point(x))
    }
}

#[derive(Debug, Clone)]
pub struct FamilyOptions {
    pub coverage_target: f64,
    pub j_max: usize,
    pub coverage_samples: usize,
    /// Cap on extra levels built to cover other terminal sets.
    pub j_aux_max: usize,
    pub seed: u64,
    /// The model is boxed to this many generators before the sign expansion.
    pub g_max: usize,
    pub rosc: RoscOptions,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        Self {
            coverage_target: 0.99,
            j_max: 50,
            coverage_samples: 10_000,
            j_aux_max: 80,
            seed: 7,
            g_max: 8,
            rosc: RoscOptions::default(),
        }
    }
}

/// Grows the family from the terminal set until the sampled coverage of
/// the cell reaches the target, the union stops growing, or `j_max`. Then
/// keeps going (up to `j_aux_max` levels in total) until every set in
/// `extra_targets` is covered.
pub fn build_family(
    cell: EquilibriumCell,
    m: &MatrixZonotope,
    x_set: &HPolytope,
    u_set: &HPolytope,
    w: &Zonotope,
    extra_targets: &[Zonotope],
    opts: &FamilyOptions,
) -> Result<RoscFamily> {
    let (blo, bhi) = cell.cell.bounding_box()?;
    let mut rng = stream_rng(opts.seed, cell.index as u64);
    let mut samples: Vec<DVector<f64>> = Vec::with_capacity(opts.coverage_samples);
    let mut guard = 0;
    while samples.len() < opts.coverage_samples && guard < 100 * opts.coverage_samples {
        let x = draw_box(&mut rng, &blo, &bhi);
        if cell.cell.contains_point(&x) {
            samples.push(x);
        }
        guard += 1;
    }
    let mut covered = vec![false; samples.len()];
    let c0 = cell.t0.to_hpolytope()?.prune_redundant();
    let mut c = vec![c0];
    let mut xi = Vec::new();
    let update = |set: &HPolytope, covered: &mut [bool]| -> usize {
        let mut fresh = 0;
        for (i, x) in samples.iter().enumerate() {
            if !covered[i] && set.contains_point(x) {
                covered[i] = true;
                fresh += 1;
            }
        }
        fresh
    };
    update(&c[0], &mut covered);
    let frac = |covered: &[bool]| {
        if covered.is_empty() {
            1.0
        } else {
            covered.iter().filter(|&&b| b).count() as f64 / covered.len() as f64
        }
    };
    let mut stalled = false;
    let mut quiet = 0;
    let mut n_main = None;
    let extra_pts: Vec<Vec<DVector<f64>>> = extra_targets
        .iter()
        .map(|z| z.vertices().unwrap_or_else(|_| vec![z.center().clone()]))
        .collect();
    let extras_done = |c: &[HPolytope]| {
        extra_pts
            .iter()
            .all(|pts| pts.iter().all(|x| c.iter().any(|s| s.contains_point(x))))
    };
    let m = m.compact().reduce(opts.g_max);
    loop {
        let j = c.len();
        let cov = frac(&covered);
        if n_main.is_none() && (cov >= opts.coverage_target || stalled || j > opts.j_max) {
            n_main = Some(j - 1);
        }
        if n_main.is_some() && (extras_done(&c) || stalled || j > opts.j_aux_max) {
            break;
        }
        let target = c.last().expect("nonempty").clone();
        let step = match rosc_step_mz(&target, &m, x_set, u_set, w, &opts.rosc) {
            Ok(s) => s,
            Err(Error::EmptySet) => {
                stalled = true;
                continue;
            }
            Err(e) => return Err(e),
        };
        let fresh = update(&step.c, &mut covered);
        let grew = !target.contains_hpolytope(&step.c)? || fresh > 0;
        c.push(step.c);
        xi.push(step.xi);
        if fresh == 0 && !grew {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if quiet >= 2 {
            stalled = true;
        }
    }
    let coverage = frac(&covered);
    Ok(RoscFamily {
        cell,
        c,
        xi,
        n_main: n_main.unwrap_or(0),
        coverage,
        stalled,
    })
}

/// Convenience bundle: one cell per seed, each with its terminal set.
pub struct CellSpec {
    pub seed: DVector<f64>,
    /// Preferred equilibrium; `None` means "nearest admissible to the seed".
    pub x_e: Option<DVector<f64>>,
    pub u_e: Option<DVector<f64>>,
}

/// Builds equilibrium cells: Voronoi cells from the seeds, terminal
/// equilibria (nearest admissible equilibrium inside the cell, with inputs
/// kept `u_margin` inside the input box), gains and invariant sets.
pub fn build_cells(
    m: &MatrixZonotope,
    specs: &[CellSpec],
    x_eta: &HPolytope,
    u_set: &HPolytope,
    w: &Zonotope,
    u_margin: f64,
    rci: &RciOptions,
) -> Result<Vec<EquilibriumCell>> {
    let seeds: Vec<DVector<f64>> = specs.iter().map(|s| s.seed.clone()).collect();
    let cells = voronoi_partition(x_eta, &seeds)?;
    let u_tight = shrink(u_set, u_margin);
    let mut out = Vec::new();
    for (l, (spec, cell)) in specs.iter().zip(cells).enumerate() {
        let (x_e, u_e) = match (&spec.x_e, &spec.u_e) {
            (Some(x), Some(u)) => (x.clone(), u.clone()),
            _ => {
                // Stay a little inside the cell so the terminal set fits.
                let inside = shrink(&cell, 0.5);
                let region = if inside.is_empty() {
                    cell.clone()
                } else {
                    inside
                };
                admissible_equilibrium(m, &spec.seed, &region, &u_tight)?
            }
        };
        let r = synthesize_rci(m, &x_e, &u_e, w, u_set, x_eta, rci)
            .map_err(|e| Error::Synthesis(format!("cell {}: {e}", l + 1)))?;
        out.push(EquilibriumCell {
            index: l,
            seed: spec.seed.clone(),
            x_e,
            u_e,
            gain: r.gain,
            t0: r.t0,
            cell,
        });
    }
    Ok(out)
}

/// Moves every (normalized) facet inward by `d`.
pub fn shrink(p: &HPolytope, d: f64) -> HPolytope {
    let q = p.normalized();
    HPolytope::new(q.h_mat().clone(), q.h_vec().add_scalar(-d)).expect("finite")
}

/// Everything `rosc_step` guarantees, checked on one state: returns the
/// input found for `x` at `level`, or `None` when none exists.
pub fn feasible_input(xi: &HPolytope, x: &DVector<f64>) -> Option<DVector<f64>> {
    let (hx, hu, h) = slice_inputs(xi, x);
    lp::feasible_point(&hu, &(h - hx)).ok()
}

/// Splits `[H_x H_u] [x; u] ≤ h` at a fixed `x` into `(H_x x, H_u, h)`.
pub fn slice_inputs(
    xi: &HPolytope,
    x: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let n = x.len();
    let p = xi.dim();
    let hx = xi.h_mat().columns(0, n) * x;
    let hu = xi.h_mat().columns(n, p - n).into_owned();
    (hx, hu, xi.h_vec().clone())
}

/// Convenience: sets as `Set` for sampling helpers.
pub fn as_set(p: &HPolytope) -> Set {
    Set::HPolytope(p.clone())
}
