pub mod affine;
pub mod bounds;
pub mod constants;
pub mod error;
pub mod experiment;
pub mod greedy;
pub mod rb_online;
pub mod rb_space;
pub mod numerics;
pub mod stokes;

pub use error::{Error, Result};
