//! Error-exponent laboratory for source coding with side information.
//!
//! Discrete quantities are in bits, Gaussian quantities in nats.

pub mod convex;
pub mod erasure;
pub mod error;
pub mod ext;
pub mod gaussian;
pub mod grid;
pub mod info;

pub use error::{Error, Result};
pub use ext::ExtReal;
pub use grid::{enumerate_simplex, GridSpec};
pub use info::{CondDist, FiniteDist, JointDist};
pub mod report;
pub mod sccsi;
pub mod sim;
pub mod wz;
