//! Dimers on the Aztec diamond with Fock's theta-function weights.
//!
//! The crate builds the Kasteleyn matrix of the Aztec diamond from train-track
//! angles on a genus 0 or genus 1 M-curve, evaluates its inverse through an
//! explicit double contour integral, computes partition functions by
//! determinant, product recurrence and closed forms, and derives Boltzmann
//! marginals, exact samples and arctic curves.
#![doc = include_str!("../../../book/src/quickstart.md")]

pub mod curve;
pub mod inverse;
pub mod kasteleyn;
pub mod kernelforms;
pub mod lattice;
pub mod limitshape;
pub mod measures;
pub mod verify;

pub use num_complex::Complex64 as C64;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/lattice.md")]
    pub struct Lattice;
    #[doc = include_str!("../../../book/src/weights.md")]
    pub struct Weights;
    #[doc = include_str!("../../../book/src/inverse.md")]
    pub struct Inverse;
    #[doc = include_str!("../../../book/src/measures.md")]
    pub struct Measures;
    #[doc = include_str!("../../../book/src/limitshape.md")]
    pub struct LimitShape;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
    #[doc = include_str!("../../../book/src/verification.md")]
    pub struct Verification;
}
