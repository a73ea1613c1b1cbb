//! Partially supervised sparse-and-smooth Bayesian factor model.
//!
//! A feature matrix `X` (mixed continuous / binary / count columns) and
//! sparsely observed dose-response curves `Y` share a latent factor block
//! `η`. Curves load on `η` through GP-smooth columns of `Λ`, features load
//! on `η` through horseshoe-sparse `Θ` and on feature-only factors `ν`
//! through MGP-shrunk `Ξ`:
//!
//! ```text
//! z_i = μ^z + Θ η_i + Ξ ν_i + e_i
//! y_i = μ^y + Λ η_i + ε_i
//! ```
//!
//! The crate is `no_std` (it needs `alloc`). File formats, threading and the
//! command line live in the `dosefactor` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod align;
pub mod data;
pub mod distance;
mod error;
pub mod fit;
pub mod gibbs;
pub mod kernel;
pub mod linalg;
pub mod math;
pub mod model;
pub mod posterior;
pub mod random;
pub mod simulate;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
