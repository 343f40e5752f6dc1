//! Homogenized flow models for a Carreau fluid in a very thin porous film.
//!
//! The film is perforated by a periodic array of vertical obstacles whose
//! period is much larger than the film thickness. In the thin limit the flow
//! reduces to a two-dimensional Darcy problem whose effective law is built
//! from pressure-only cell problems on the perforated unit square:
//!
//! * [`params`] classifies the scaling regime and the limit model,
//! * [`constitutive`] holds the Carreau law and its one-dimensional inverses,
//! * [`cellmesh`] and [`cellsolve`] discretize and solve the cell problems,
//! * [`macro_darcy`] solves the macroscopic pressure problem,
//! * [`reconstruct`] rebuilds through-thickness velocity profiles,
//! * [`oracle`] contains independent brute-force reference solvers.

pub mod cellmesh;
pub mod cellsolve;
pub mod constitutive;
pub mod error;
pub mod export;
pub mod linalg;
pub mod macro_darcy;
pub mod oracle;
pub mod params;
pub mod quadrature;
pub mod reconstruct;

pub use error::{Error, Result};

/// Two-dimensional vector in the film plane.
pub type Vec2 = [f64; 2];

#[inline]
pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}
