//! Dense two-phase simplex.
//!
//! Problems of the form `min cᵀx  s.t.  Ax ≤ b` with free `x` are solved through
//! their dual `min bᵀλ  s.t.  Aᵀλ = −c, λ ≥ 0`. The dual tableau has one row per
//! primal variable, and every LP in this crate has a handful of variables and
//! many constraints, so pivots stay cheap. The primal optimum is read back from
//! the optimal dual basis (the active constraint set).
//!
//! Pricing is Dantzig's rule; after a run of degenerate pivots the solver falls
//! back to Bland's rule, which cannot cycle.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T: Scalar> {
    pub x: DVector<T>,
    pub value: T,
}

/// Degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_BUDGET: usize = 40;

struct Tableau<T> {
    rows: usize,
    width: usize,
    data: Vec<T>,
    basis: Vec<usize>,
    locked: Vec<bool>,
    bland: bool,
    degenerate: usize,
    tol: T,
}

enum RunError {
    Unbounded,
    IterationLimit,
}

impl<T: Scalar> Tableau<T> {
    #[inline]
    fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.width + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> T {
        self.data[r * self.width + self.width - 1]
    }

    fn obj_row(&self) -> usize {
        self.rows
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.at(r, c);
        let inv = T::one() / p;
        for j in 0..w {
            self.data[r * w + j] *= inv;
        }
        self.data[r * w + c] = T::one();
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        let eliminate = |row: &mut [T]| {
            let f = row[c];
            if f != T::zero() {
                for j in 0..w {
                    row[j] -= f * prow[j];
                }
                row[c] = T::zero();
            }
        };
        before.chunks_mut(w).for_each(eliminate);
        after.chunks_mut(w).for_each(eliminate);
        self.basis[r] = c;
    }

    fn entering(&self) -> Option<usize> {
        let obj = self.obj_row();
        let ncols = self.width - 1;
        let mut best: Option<(usize, T)> = None;
        for j in 0..ncols {
            if self.locked[j] {
                continue;
            }
            let d = self.at(obj, j);
            if d < -self.tol {
                if self.bland {
                    return Some(j);
                }
                match best {
                    Some((_, bd)) if bd <= d => {}
                    _ => best = Some((j, d)),
                }
            }
        }
        best.map(|(j, _)| j)
    }

    fn leaving(&self, c: usize) -> Option<usize> {
        let mut best: Option<(usize, T, T)> = None;
        for r in 0..self.rows {
            let a = self.at(r, c);
            if a > self.tol {
                let ratio = self.rhs(r).max(T::zero()) / a;
                best = match best {
                    None => Some((r, ratio, a)),
                    Some((br, bratio, ba)) => {
                        let slack = self.tol * (T::one() + bratio.abs());
                        if ratio < bratio - slack {
                            Some((r, ratio, a))
                        } else if ratio <= bratio + slack {
                            let better = if self.bland {
                                self.basis[r] < self.basis[br]
                            } else {
                                a > ba
                            };
                            if better {
                                Some((r, ratio, a))
                            } else {
                                Some((br, bratio, ba))
                            }
                        } else {
                            Some((br, bratio, ba))
                        }
                    }
                };
            }
        }
        best.map(|(r, _, _)| r)
    }

    fn run(&mut self, max_iter: usize) -> Result<(), RunError> {
        for _ in 0..max_iter {
            let Some(c) = self.entering() else {
                return Ok(());
            };
            let Some(r) = self.leaving(c) else {
                return Err(RunError::Unbounded);
            };
            if self.rhs(r) <= self.tol {
                self.degenerate += 1;
                if self.degenerate > DEGENERATE_BUDGET {
                    self.bland = true;
                }
            }
            self.pivot(r, c);
        }
        Err(RunError::IterationLimit)
    }
}

struct StandardSolution<T> {
    basis: Vec<usize>,
    /// Simplex multipliers of the equality rows.
    multipliers: Vec<T>,
    structural: usize,
}

enum StandardOutcome<T> {
    Optimal(StandardSolution<T>),
    Infeasible,
    Unbounded,
}

/// Solves `min costᵀy  s.t.  E y = f, y ≥ 0`.
fn solve_standard<T: Scalar>(
    e: &DMatrix<T>,
    f: &[T],
    cost: &[T],
) -> Result<StandardOutcome<T>, LpError> {
    let p = e.nrows();
    let q = e.ncols();
    let width = q + p + 1;
    let tol = T::pivot_tol();
    let mut data = vec![T::zero(); (p + 1) * width];
    let mut signs = vec![T::one(); p];
    for i in 0..p {
        if f[i] < T::zero() {
            signs[i] = -T::one();
        }
        for j in 0..q {
            data[i * width + j] = signs[i] * e[(i, j)];
        }
        data[i * width + q + i] = T::one();
        data[i * width + width - 1] = signs[i] * f[i];
    }
    let obj = p * width;
    for i in 0..p {
        for j in 0..q {
            let v = data[i * width + j];
            data[obj + j] -= v;
        }
        let rhs = data[i * width + width - 1];
        data[obj + width - 1] -= rhs;
    }
    let fscale = f.iter().fold(T::one(), |m, v| m.max(v.abs()));
    let mut tab = Tableau {
        rows: p,
        width,
        data,
        basis: (q..q + p).collect(),
        locked: vec![false; q + p],
        bland: false,
        degenerate: 0,
        tol,
    };
    let max_iter = 50 * (p + q) + 1000;
    match tab.run(max_iter) {
        Ok(()) => {}
        Err(RunError::IterationLimit) => return Err(LpError::IterationLimit),
        // Phase one is bounded below by zero.
        Err(RunError::Unbounded) => return Err(LpError::IterationLimit),
    }
    let phase1 = -tab.rhs(tab.obj_row());
    if phase1 > T::lit(1e3) * tol * fscale.max(T::one()) + T::feas_tol() * fscale {
        return Ok(StandardOutcome::Infeasible);
    }
    // Drive artificial variables out of the basis where possible.
    for r in 0..p {
        if tab.basis[r] >= q {
            let mut best: Option<(usize, T)> = None;
            for j in 0..q {
                let a = tab.at(r, j).abs();
                if a > T::lit(1e3) * tol && best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            if let Some((j, _)) = best {
                tab.pivot(r, j);
            }
        }
    }
    for j in q..q + p {
        tab.locked[j] = true;
    }
    // Phase two objective row.
    for j in 0..width {
        let base = if j < q { cost[j] } else { T::zero() };
        let mut d = if j == width - 1 { T::zero() } else { base };
        for r in 0..p {
            let b = tab.basis[r];
            let cb = if b < q { cost[b] } else { T::zero() };
            if cb != T::zero() {
                d -= cb * tab.at(r, j);
            }
        }
        tab.data[obj + j] = d;
    }
    tab.degenerate = 0;
    tab.bland = false;
    match tab.run(max_iter) {
        Ok(()) => {}
        Err(RunError::Unbounded) => return Ok(StandardOutcome::Unbounded),
        Err(RunError::IterationLimit) => return Err(LpError::IterationLimit),
    }
    let multipliers = (0..p)
        .map(|i| -tab.at(tab.obj_row(), q + i) * signs[i])
        .collect();
    Ok(StandardOutcome::Optimal(StandardSolution {
        basis: tab.basis.clone(),
        multipliers,
        structural: q,
    }))
}

/// Minimizes `cᵀx` subject to `Ax ≤ b`, `x` free.
///
/// Panics when the shapes of `c`, `a` and `b` disagree.
pub fn minimize<T: Scalar>(
    c: &DVector<T>,
    a: &DMatrix<T>,
    b: &DVector<T>,
) -> Result<LpSolution<T>, LpError> {
    let n = c.len();
    assert_eq!(a.ncols(), n, "constraint matrix width must match the cost");
    assert_eq!(a.nrows(), b.len(), "one right-hand side per constraint");

    // Row normalization; empty rows are either trivially true or infeasible.
    let mut rows: Vec<usize> = Vec::with_capacity(a.nrows());
    let mut norms: Vec<T> = Vec::with_capacity(a.nrows());
    for i in 0..a.nrows() {
        let norm = a.row(i).norm();
        if norm <= T::pivot_tol() {
            if b[i] < -T::feas_tol() {
                return Err(LpError::Infeasible);
            }
            continue;
        }
        rows.push(i);
        norms.push(norm);
    }
    let m = rows.len();
    let cscale = c.amax();
    if m == 0 {
        return if cscale <= T::pivot_tol() {
            Ok(LpSolution {
                x: DVector::zeros(n),
                value: T::zero(),
            })
        } else {
            Err(LpError::Unbounded)
        };
    }
    let cscale = if cscale > T::zero() { cscale } else { T::one() };
    let mut an = DMatrix::zeros(m, n);
    let mut bn = vec![T::zero(); m];
    for (k, (&i, &norm)) in rows.iter().zip(&norms).enumerate() {
        for j in 0..n {
            an[(k, j)] = a[(i, j)] / norm;
        }
        bn[k] = b[i] / norm;
    }
    let e = an.transpose();
    let f: Vec<T> = c.iter().map(|&v| -v / cscale).collect();

    match solve_standard(&e, &f, &bn)? {
        StandardOutcome::Optimal(sol) => {
            let x = recover_primal(&an, &bn, &sol);
            let value = c.dot(&x);
            Ok(LpSolution { x, value })
        }
        StandardOutcome::Unbounded => Err(LpError::Infeasible),
        StandardOutcome::Infeasible => {
            if primal_feasible(&an, &bn)? {
                Err(LpError::Unbounded)
            } else {
                Err(LpError::Infeasible)
            }
        }
    }
}

/// Finds any point of `{x : Ax ≤ b}`.
pub fn feasible_point<T: Scalar>(a: &DMatrix<T>, b: &DVector<T>) -> Result<DVector<T>, LpError> {
    minimize(&DVector::zeros(a.ncols()), a, b).map(|s| s.x)
}

fn recover_primal<T: Scalar>(an: &DMatrix<T>, bn: &[T], sol: &StandardSolution<T>) -> DVector<T> {
    let n = an.ncols();
    let mut x = DVector::from_vec(sol.multipliers.clone());
    // Refine from the active set when the optimal basis is fully structural.
    if sol.basis.iter().all(|&j| j < sol.structural) && sol.basis.len() == n {
        let mut ab = DMatrix::zeros(n, n);
        let mut bb = DVector::zeros(n);
        for (k, &j) in sol.basis.iter().enumerate() {
            ab.set_row(k, &an.row(j));
            bb[k] = bn[j];
        }
        if let Some(refined) = ab.lu().solve(&bb) {
            let worst = |v: &DVector<T>| {
                let r = an * v;
                (0..r.len()).fold(T::zero(), |m, i| m.max(r[i] - bn[i]))
            };
            if refined.iter().all(|v| v.is_finite()) && worst(&refined) <= worst(&x) + T::feas_tol()
            {
                x = refined;
            }
        }
    }
    x
}

/// Farkas test: `Ax ≤ b` is feasible iff no `λ ≥ 0` has `Aᵀλ = 0`, `bᵀλ < 0`.
fn primal_feasible<T: Scalar>(an: &DMatrix<T>, bn: &[T]) -> Result<bool, LpError> {
    let (m, n) = an.shape();
    let mut e = DMatrix::zeros(n + 1, m);
    e.view_mut((0, 0), (n, m)).copy_from(&an.transpose());
    for j in 0..m {
        e[(n, j)] = T::one();
    }
    let mut f = vec![T::zero(); n + 1];
    f[n] = T::one();
    match solve_standard(&e, &f, bn)? {
        StandardOutcome::Optimal(sol) => {
            // Optimal value equals the last multiplier (cost of the normalization row).
            let value = sol.multipliers[n];
            Ok(value >= -T::feas_tol())
        }
        StandardOutcome::Infeasible => Ok(true),
        StandardOutcome::Unbounded => Ok(false),
    }
}
