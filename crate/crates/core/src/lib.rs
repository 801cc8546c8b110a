//! Numerical spectral geometry on weighted manifolds: drift-Laplacian
//! eigenvalue problems, Bakry-Emery curvature, hypersurface stability, and
//! a harness that checks eigenvalue bounds and identities with reported
//! margins.

pub mod chart;
pub mod discretize;
pub mod eigensolve;
pub mod exprlang;
pub mod geometry;
pub mod hypersurface;
pub mod jet;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod verify;

pub use exprlang::{parse, Expr};
pub use geometry::WeightedManifold;
pub use jet::{Jet, Jet3, Real};
