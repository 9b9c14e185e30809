//! Convex sets (zonotopes, H-polytopes, matrix zonotopes) and the geometric
//! and LP operations the rest of the crate is built on.

mod hpolytope;
mod inner;
pub mod json;
pub mod linalg;
mod matzono;
mod project;
pub mod sample;
mod zonotope;

use nalgebra::DVector;

pub use hpolytope::HPolytope;
pub use inner::inner_zonotope;
pub use matzono::MatrixZonotope;
pub use project::{fourier_motzkin, polygon_to_hpolytope, project, project_polygon};
pub use sample::{
    sample_uniform, sup_distance, sup_distance_bounds, volume_estimate, VolumeEstimate,
};
pub use zonotope::Zonotope;

use crate::error::{check_dim, Result};
use crate::lp::{self, LpError, LpSolution};
use crate::scalar::Scalar;

/// Either set representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Set<T: Scalar = f64> {
    Zonotope(Zonotope<T>),
    HPolytope(HPolytope<T>),
}

impl<T: Scalar> Set<T> {
    pub fn dim(&self) -> usize {
        match self {
            Set::Zonotope(z) => z.dim(),
            Set::HPolytope(p) => p.dim(),
        }
    }

    pub fn contains_point(&self, x: &DVector<T>) -> bool {
        match self {
            Set::Zonotope(z) => z.contains_point(x),
            Set::HPolytope(p) => p.contains_point(x),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Set::Zonotope(_) => false,
            Set::HPolytope(p) => p.is_empty(),
        }
    }

    pub fn bounding_box(&self) -> Result<(DVector<T>, DVector<T>)> {
        match self {
            Set::Zonotope(z) => Ok(z.interval_hull()),
            Set::HPolytope(p) => p.bounding_box(),
        }
    }

    pub fn vertices(&self) -> Result<Vec<DVector<T>>> {
        match self {
            Set::Zonotope(z) => z.vertices(),
            Set::HPolytope(p) => p.vertices(),
        }
    }

    pub fn to_hpolytope(&self) -> Result<HPolytope<T>> {
        match self {
            Set::Zonotope(z) => z.to_hpolytope(),
            Set::HPolytope(p) => Ok(p.clone()),
        }
    }
}

impl<T: Scalar> From<Zonotope<T>> for Set<T> {
    fn from(z: Zonotope<T>) -> Self {
        Set::Zonotope(z)
    }
}

impl<T: Scalar> From<HPolytope<T>> for Set<T> {
    fn from(p: HPolytope<T>) -> Self {
        Set::HPolytope(p)
    }
}

/// `inner ⊆ outer`, exact. A zonotopic `outer` is converted to halfspaces.
pub fn contains_set<T: Scalar>(outer: &Set<T>, inner: &Zonotope<T>) -> Result<bool> {
    check_dim(outer.dim(), inner.dim())?;
    Ok(match outer {
        Set::HPolytope(p) => p.contains_zonotope(inner),
        Set::Zonotope(z) => z.to_hpolytope()?.contains_zonotope(inner),
    })
}

/// `min cᵀx` over an H-polytope.
pub fn solve_lp<T: Scalar>(c: &DVector<T>, p: &HPolytope<T>) -> Result<LpSolution<T>, LpError> {
    lp::minimize(c, p.h_mat(), p.h_vec())
}
