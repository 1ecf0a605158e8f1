//! equiflow: a numerical laboratory for equivariant geometric flows from the
//! hyperbolic plane into the sphere or the hyperbolic plane.
//!
//! The crate certifies linearized stability of the explicit equivariant
//! harmonic map families by banded spectral computation, evolves the harmonic
//! map heat flow and the Schroedinger maps flow at desk scale, constructs the
//! caloric gauge along computed heat flows, and verifies the structural
//! identities of the problem (Bogomoln'yi factorization, Cauchy-Riemann
//! relations, gauge reconstruction, equations of motion, dispersive-norm
//! boundedness) as testable discrete properties.

pub mod accept;
pub mod band;
pub mod caloric;
pub mod error;
pub mod flows;
pub mod frame;
pub mod geometry;
pub mod heat;
pub mod linop;
pub mod norms;
pub mod target;
pub mod testfields;

pub use error::{Error, Result};
