//! Numerical laboratory for the degenerate parabolic equation
//! y_t = (x^alpha y_x)_x on (0,1): spectral solvers, measurable observation
//! sets with exact measures, observability-constant estimation,
//! Stackelberg-Nash follower games with bang-bang equilibria, and
//! norm-optimal leader control through a dual variational problem.

pub mod bessel;
pub mod cli;
pub mod game;
pub mod geometry;
pub mod linalg;
pub mod normopt;
pub mod observability;
pub mod pde;
pub mod rational;
pub mod rng;
pub mod spectral;
