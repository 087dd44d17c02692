//! Built-in benchmark: Stokes flow past a parametrized rectangular obstacle
//! in a 2D channel, discretized with P2–P1 Taylor–Hood elements.

pub mod fem;
pub mod mesh;
pub mod space;
pub mod truth;

pub use mesh::{BoundaryTag, Geometry, Mesh};
pub use space::TaylorHoodSpace;
pub use truth::{TruthDiscretization, TruthSolution};
