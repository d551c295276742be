//! Decoding-failure-rate modelling for `(v, w)`-regular LDPC/MDPC codes under
//! a parallel bit-flipping decoder, plus a Monte Carlo simulator to check it.

pub mod cli;
pub mod code;
pub mod config;
pub mod decoder;
pub mod dist;
pub mod error;
pub mod geometry;
pub mod iter1;
pub mod iter2;
pub mod mc;
pub mod pmf;
pub mod real;
pub mod rng;
pub mod syndrome;

pub use error::{Error, Result};
pub use pmf::Pmf;
pub use real::{Precision, Real};
