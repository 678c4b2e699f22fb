//! Convex solvers shared by the exponent computations.

pub mod barrier;
pub mod line;
pub mod simplex;
pub mod tilt;
