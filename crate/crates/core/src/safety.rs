//! Plant-side safety verification and the emergency controller.
//!
//! Every received input is checked against the input box and against the
//! worst-case one-step image of the true state. A rejected input latches the
//! emergency controller, which walks the state down the nested one-step
//! controllable sets of its cell until the terminal set is reached.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ctrlsets::{classify, slice_inputs, RoscFamily};
use crate::lp;
use crate::reach::rors_point;
use crate::{HPolytope, MatrixZonotope, Zonotope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Safe,
    /// The received input is outside the input set.
    UnsafeInput,
    /// The worst-case successor leaves the safe region.
    UnsafeReach,
}

impl Verdict {
    pub fn is_safe(self) -> bool {
        self == Verdict::Safe
    }

    pub fn code(self) -> &'static str {
        match self {
            Verdict::Safe => "safe",
            Verdict::UnsafeInput => "unsafe_input",
            Verdict::UnsafeReach => "unsafe_reach",
        }
    }
}

/// Accepts `u_recv` iff it lies in `u_set` and `M[x; u_recv] ⊕ W ⊆ X_η`.
pub fn verify(
    u_recv: &DVector<f64>,
    x: &DVector<f64>,
    m: &MatrixZonotope,
    u_set: &HPolytope,
    x_eta: &HPolytope,
    w: &Zonotope,
) -> Verdict {
    if u_recv.iter().any(|v| !v.is_finite()) || !u_set.contains_point(u_recv) {
        return Verdict::UnsafeInput;
    }
    match rors_point(m, x, u_recv, w) {
        Ok(z) if x_eta.contains_zonotope(&z) => Verdict::Safe,
        _ => Verdict::UnsafeReach,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyState {
    /// `true` when tracking inputs may be applied.
    pub f: bool,
    pub active_cell: Option<usize>,
    pub level: Option<usize>,
}

impl SafetyState {
    pub fn tracking() -> Self {
        Self {
            f: true,
            active_cell: None,
            level: None,
        }
    }
}

/// What the emergency controller did at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct EcOutput {
    pub u: DVector<f64>,
    pub cell: usize,
    pub level: usize,
    /// The state was in no controllable set and the least-violating level
    /// was used instead.
    pub alarm: bool,
}

/// Everything the plant-side module needs.
#[derive(Debug, Clone)]
pub struct Guard<'a> {
    pub model: &'a MatrixZonotope,
    pub w: &'a Zonotope,
    pub u_set: &'a HPolytope,
    pub x_eta: &'a HPolytope,
    pub families: &'a [RoscFamily],
    /// Frank–Wolfe iterations of the online program.
    pub fw_steps: usize,
}

impl Guard<'_> {
    fn seeds(&self) -> Vec<DVector<f64>> {
        self.families.iter().map(|f| f.cell.seed.clone()).collect()
    }

    /// One emergency-controller step.
    pub fn ec_step(&self, x: &DVector<f64>, st: &SafetyState) -> (EcOutput, SafetyState) {
        let cell = st.active_cell.unwrap_or_else(|| classify(&self.seeds(), x));
        // Own family first, then any other family that covers x.
        let mut found = self.families[cell].level_of(x).map(|j| (cell, j));
        if found.is_none() {
            found = self
                .families
                .iter()
                .enumerate()
                .filter_map(|(l, f)| f.level_of(x).map(|j| (l, j)))
                .min_by_key(|&(_, j)| j);
        }
        let (out, alarm) = match found {
            Some((l, 0)) => {
                let u = self.families[l].cell.terminal_input(x);
                return (
                    EcOutput {
                        u,
                        cell: l,
                        level: 0,
                        alarm: false,
                    },
                    SafetyState::tracking(),
                );
            }
            Some((l, j)) => match self.solve_level(x, l, j) {
                Some(u) => ((l, j, u), false),
                None => (self.fallback(x), true),
            },
            None => (self.fallback(x), true),
        };
        let (l, j, u) = out;
        (
            EcOutput {
                u,
                cell: l,
                level: j,
                alarm,
            },
            SafetyState {
                f: false,
                active_cell: Some(l),
                level: Some(j),
            },
        )
    }

    /// `argmin ‖u − u_term(x)‖²` over the slice of `Ξ_j` at `x`.
    fn solve_level(&self, x: &DVector<f64>, l: usize, j: usize) -> Option<DVector<f64>> {
        let fam = &self.families[l];
        let (hx, hu, h) = slice_inputs(&fam.xi[j - 1], x);
        let b = h - hx;
        let goal = fam.cell.terminal_input(x);
        let slice = HPolytope::new(hu.clone(), b.clone()).ok()?;
        if slice.contains_point(&goal) {
            return Some(goal);
        }
        let mut u = slice.chebyshev_center().ok()?.0;
        for _ in 0..self.fw_steps {
            let grad = (&u - &goal) * 2.0;
            let Ok(sol) = lp::minimize(&grad, &hu, &b) else {
                break;
            };
            let d = sol.x - &u;
            let gap = -grad.dot(&d);
            if gap <= 1e-6 {
                break;
            }
            let step = (gap / (2.0 * d.norm_squared())).min(1.0);
            u += d * step;
        }
        Some(u)
    }

    /// Least constraint violation over all levels `j ≥ 1` of all families.
    fn fallback(&self, x: &DVector<f64>) -> (usize, usize, DVector<f64>) {
        let mut best: Option<(f64, usize, usize, DVector<f64>)> = None;
        for (l, fam) in self.families.iter().enumerate() {
            for (j0, xi) in fam.xi.iter().enumerate() {
                if let Some((s, u)) = slack_lp(xi, x) {
                    if best.as_ref().is_none_or(|b| s < b.0) {
                        best = Some((s, l, j0 + 1, u));
                    }
                }
            }
        }
        match best {
            Some((_, l, j, u)) => (l, j, u),
            None => {
                let l = classify(&self.seeds(), x);
                (l, 0, self.families[l].cell.terminal_input(x))
            }
        }
    }

    /// One plant-side step: the applied input, the verdict on the
    /// received one, the EC output when it ran, and the next state.
    pub fn plant_side_step(
        &self,
        u_recv: &DVector<f64>,
        x: &DVector<f64>,
        st: &SafetyState,
    ) -> (DVector<f64>, Verdict, Option<EcOutput>, SafetyState) {
        let verdict = verify(u_recv, x, self.model, self.u_set, self.x_eta, self.w);
        if st.f && verdict.is_safe() {
            return (u_recv.clone(), verdict, None, st.clone());
        }
        let (ec, next) = self.ec_step(x, st);
        (ec.u.clone(), verdict, Some(ec), next)
    }
}

/// `min s` subject to `Ξ [x; u] ≤ h + s·1`; returns `(s, u)`.
fn slack_lp(xi: &HPolytope, x: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
    let (hx, hu, h) = slice_inputs(xi, x);
    let m = hu.ncols();
    let rows = hu.nrows();
    let mut a = DMatrix::zeros(rows + 1, m + 1);
    a.view_mut((0, 0), (rows, m)).copy_from(&hu);
    for r in 0..rows {
        a[(r, m)] = -1.0;
    }
    // s ≥ −1 keeps the LP bounded.
    a[(rows, m)] = -1.0;
    let mut b = DVector::zeros(rows + 1);
    b.rows_mut(0, rows).copy_from(&(h - hx));
    b[rows] = 1.0;
    let mut c = DVector::zeros(m + 1);
    c[m] = 1.0;
    let sol = lp::minimize(&c, &a, &b).ok()?;
    Some((sol.x[m], sol.x.rows(0, m).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctrlsets::{EquilibriumCell, RoscFamily};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn scalar_setup() -> (MatrixZonotope, Zonotope, HPolytope, HPolytope) {
        let m = MatrixZonotope::singleton(DMatrix::from_row_slice(1, 2, &[0.5, 1.0]));
        let w = Zonotope::from_box(&v(&[-0.01]), &v(&[0.01])).unwrap();
        let u = HPolytope::from_box(&v(&[-1.0]), &v(&[1.0])).unwrap();
        let x = HPolytope::from_box(&v(&[-2.0]), &v(&[2.0])).unwrap();
        (m, w, u, x)
    }

    #[test]
    fn verdicts() {
        let (m, w, u, x) = scalar_setup();
        assert_eq!(
            verify(&v(&[1.5]), &v(&[0.0]), &m, &u, &x, &w),
            Verdict::UnsafeInput
        );
        assert_eq!(
            verify(&v(&[0.0]), &v(&[0.5]), &m, &u, &x, &w),
            Verdict::Safe
        );
        // 0.5·2 + 1 + 0.01 > 2
        assert_eq!(
            verify(&v(&[1.0]), &v(&[2.0]), &m, &u, &x, &w),
            Verdict::UnsafeReach
        );
        assert_eq!(
            verify(&v(&[f64::NAN]), &v(&[0.0]), &m, &u, &x, &w),
            Verdict::UnsafeInput
        );
    }

    fn scalar_family() -> RoscFamily {
        let (m, w, u, x) = scalar_setup();
        let cell = EquilibriumCell {
            index: 0,
            seed: v(&[0.0]),
            x_e: v(&[0.0]),
            u_e: v(&[0.0]),
            gain: DMatrix::from_element(1, 1, -0.5),
            t0: Zonotope::from_box(&v(&[-0.05]), &v(&[0.05])).unwrap(),
            cell: x.clone(),
        };
        crate::ctrlsets::build_family(cell, &m, &x, &u, &w, &[], &Default::default()).unwrap()
    }

    #[test]
    fn ec_terminal_branch_sets_the_flag() {
        let (m, w, u, x) = scalar_setup();
        let fams = vec![scalar_family()];
        let g = Guard {
            model: &m,
            w: &w,
            u_set: &u,
            x_eta: &x,
            families: &fams,
            fw_steps: 3,
        };
        let (out, st) = g.ec_step(&v(&[0.04]), &SafetyState::default());
        assert_eq!(out.level, 0);
        assert!(st.f);
        assert!((out.u[0] + 0.02).abs() < 1e-12);
    }

    #[test]
    fn ec_levels_decrease_to_terminal() {
        let (m, w, u, x) = scalar_setup();
        let fams = vec![scalar_family()];
        assert!(fams[0].levels() > 1);
        let g = Guard {
            model: &m,
            w: &w,
            u_set: &u,
            x_eta: &x,
            families: &fams,
            fw_steps: 3,
        };
        let mut xk = v(&[1.9]);
        let mut st = SafetyState::default();
        let mut prev = usize::MAX;
        for k in 0..50 {
            let (out, next) = g.ec_step(&xk, &st);
            assert!(out.level < prev, "level did not decrease at step {k}");
            assert!(!out.alarm);
            prev = out.level;
            st = next;
            if out.level == 0 {
                break;
            }
            // Worst-case disturbance away from the origin.
            xk = v(&[0.5 * xk[0] + out.u[0] + 0.01 * xk[0].signum()]);
        }
        assert!(st.f && prev == 0);
    }

    #[test]
    fn latch_holds_until_terminal() {
        let (m, w, u, x) = scalar_setup();
        let fams = vec![scalar_family()];
        let g = Guard {
            model: &m,
            w: &w,
            u_set: &u,
            x_eta: &x,
            families: &fams,
            fw_steps: 3,
        };
        let st = SafetyState {
            f: false,
            active_cell: Some(0),
            level: Some(3),
        };
        let (ua, verdict, ec, next) = g.plant_side_step(&v(&[0.0]), &v(&[1.0]), &st);
        assert!(verdict.is_safe());
        assert!(ec.is_some());
        assert!(!next.f);
        assert_eq!(ua, ec.unwrap().u);
        let (ua, _, ec, _) = g.plant_side_step(&v(&[0.1]), &v(&[0.5]), &SafetyState::tracking());
        assert!(ec.is_none());
        assert_eq!(ua[0], 0.1);
    }
}
