//! Symplectic shadows of embedded balls, contact multipliers on odd spheres and
//! minimal-action estimates for convex bodies.

pub mod contact;
pub mod embedding;
pub mod error;
pub mod linalg;
pub mod ode;
pub mod poly;
pub mod quadrature;
pub mod shadow;
pub mod symplectic;

pub use error::{Error, Result};
