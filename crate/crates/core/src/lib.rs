//! Vehicle model, LPV reduction and robust state-feedback synthesis along a
//! collision-avoidance maneuver.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command-line driver
//! and parallel sweeps live in the companion `lpv-cli` crate.

#![no_std]
// `!(x > 0.0)` is used deliberately so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod linearize;
pub mod lmi;
pub mod pipeline;
pub mod sdp;
pub mod sim;
pub mod tire;
pub mod vehicle;

pub use error::{Error, Result};
pub use nalgebra;
