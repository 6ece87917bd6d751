#![no_std]
extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

#[allow(unused_imports)]
mod prelude;

pub mod corrupt;
pub mod discriminators;
pub mod error;
pub mod gate;
pub mod gmm;
pub mod gradcheck;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod pid;
pub mod synth;
pub mod table;

pub use error::{Error, Result};
