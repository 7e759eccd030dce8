//! Numerical laboratory for exterior-value problems of the fractional
//! Laplacian: spectral grids and Sobolev geometry, dense operators, exterior
//! Dirichlet and source solvers, Dirichlet-to-Neumann maps, the harmonic
//! extension to the upper half-space, SVD-based approximate controls, and
//! reproducible stability experiments.

pub mod error;
pub mod fft;
pub mod grid;
pub mod par;
pub mod sobolev;
pub mod special;

pub mod fracop;
pub mod lab;

pub mod exterior;

pub mod dn;

pub mod control;
pub mod cs;

pub mod config;
pub mod export;

pub use error::{Error, Result};
