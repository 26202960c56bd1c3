//! Metastable layer dynamics for the damped-wave (hyperbolic) Allen-Cahn equation
//!
//! `tau u_tt + g(u, tau) u_t = eps^2 u_xx - f(u)` on (0, 1) with Neumann ends.
//!
//! The crate is `no_std` (it needs `alloc`). File formats and the command line live in
//! the companion `hypac` crate.
#![no_std]
extern crate alloc;

pub mod error;
pub mod grid;
pub mod linalg;
pub mod manifold;
pub mod model;
pub mod pde;
pub mod poly;
pub mod profile;
pub mod quad;
pub mod reduced;
pub mod solve;

pub use error::{Error, Result};
