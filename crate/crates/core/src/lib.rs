//! Data-driven set-theoretic control under false-data-injection attacks.
//!
//! The geometric kernel ([`setkernel`]), identification ([`sysid`]) and
//! reachability ([`reach`]) layers are generic over the scalar type
//! ([`Scalar`], implemented for `f32` and `f64`). Offline synthesis and the
//! closed-loop machinery work in `f64`; the aliases below fix that choice.

pub mod ctrlsets;
pub mod error;
pub mod lp;
pub mod reach;
pub mod safety;
pub mod scalar;
pub mod setkernel;
pub mod sim;
pub mod supervisor;
pub mod sysid;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Zonotope = setkernel::Zonotope<f64>;
pub type HPolytope = setkernel::HPolytope<f64>;
pub type MatrixZonotope = setkernel::MatrixZonotope<f64>;
pub type Set = setkernel::Set<f64>;
