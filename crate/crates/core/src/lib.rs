//! Transformation media toolkit.
//!
//! A coordinate map between physical space and a transformed ("primed")
//! space induces a bi-anisotropic medium
//!
//! ```text
//! eps = J Jᵀ / det J · eps',   mu = J Jᵀ / det J · mu',   J = ∂x/∂x'
//! ```
//!
//! in which Maxwell's equations for the covector potential `A = J⁻ᵀ A'` are
//! the flat-space equations of the primed background. The crate is split
//! along that chain:
//!
//! - [`coordmaps`]: maps, preimages and Jacobian/metric data
//! - [`media`]: material tensors from Jacobians, plus structural validation
//! - [`fields`]: grids, analytic sources, field transport and covariant
//!   difference operators
//! - [`modes`]: the conserved mode scalar product, Gram matrices, coefficient
//!   extraction and the energy functional
//! - [`fdfd`]: an independent 2D TM frequency-domain solver used to check
//!   that generated media behave as the transformation predicts

pub mod coordmaps;
pub mod error;
pub mod fdfd;
pub mod fields;
pub mod media;
pub mod modes;

pub use error::{Error, Result};

/// Complex scalar used for all field amplitudes.
pub type C64 = num_complex::Complex64;
/// Complex 3-vector (one field sample).
pub type CVec3 = nalgebra::Vector3<C64>;
