//! Scalar abstraction shared by the set kernel, identification and reachability code.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the geometric kernel.
///
/// Implemented for `f32` and `f64`. Tolerances scale with the precision of the
/// type so that the same algorithms behave sensibly in both.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Feasibility tolerance for membership and subset tests.
    fn feas_tol() -> Self;
    /// Pivot / reduced-cost tolerance inside the simplex method.
    fn pivot_tol() -> Self;
    /// Relative singular-value threshold for rank decisions and pseudoinverses.
    fn rank_tol() -> Self;

    /// Converts an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite literal")
    }

    /// Lossy conversion to `f64` (for sampling and reporting).
    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::lit(v as f64)
    }
}

impl Scalar for f64 {
    fn feas_tol() -> Self {
        1e-9
    }
    fn pivot_tol() -> Self {
        1e-11
    }
    fn rank_tol() -> Self {
        1e-10
    }
}

impl Scalar for f32 {
    fn feas_tol() -> Self {
        2e-4
    }
    fn pivot_tol() -> Self {
        1e-6
    }
    fn rank_tol() -> Self {
        1e-5
    }
}
