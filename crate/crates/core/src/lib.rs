//! Mesh-free Helmholtz-Hodge decompositions of vector fields sampled at
//! scattered nodes, built from matrix-valued Matérn kernels that split into
//! divergence-free and curl-free parts.
//!
//! * [`kernels`]: scalar profile and the kernels `Φ`, `Φ_div`, `Φ_curl`.
//! * [`geometry`]: node sets, node files, annulus node generation, mesh norms.
//! * [`fields`]: analytic test fields and sampled fields.
//! * [`solver`]: saddle-system assembly and solution, interpolant evaluation,
//!   potentials and the two-step decomposition.
//! * [`harness`]: error metrics, order fitting and convergence studies.
//! * [`output`]: CSV and SVG emission.

pub mod error;
pub mod fields;
pub mod geometry;
pub mod harness;
pub mod kernels;
pub mod output;
pub mod solver;

pub use error::{Error, Result};
