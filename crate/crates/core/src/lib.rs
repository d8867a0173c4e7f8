//! Anti-integrable limit toolkit for 3D quadratic maps: limit relations,
//! symbolic construction of limit states, hyperbolicity certificates,
//! Newton continuation to genuine periodic orbits, and the 3D map itself.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod continuation;
pub mod error;
pub mod hyperbolicity;
pub mod map3d;
pub mod relation;
pub mod symbolic;

pub use error::{Error, Result};
