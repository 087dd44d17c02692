//! Numerical kernels shared by every other module: sparse storage, direct
//! solvers and extremal eigenvalues of symmetric pencils.

pub mod eigen;
pub mod solve;
pub mod sparse;

pub use eigen::{dense_pencil_extreme, eig_extreme, eig_max_below, pencil_extreme, EigenOptions, EigenResult, Extreme, MatrixPencil, Pencil, pencil_min_max};
pub use solve::{solve_saddle, solve_spd, LuFactor, SaddleFactor, SpdFactor};
pub use sparse::{axpy, dot, norm2, SparseMatrix, TripletBuilder};
