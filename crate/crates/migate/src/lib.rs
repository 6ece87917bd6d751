//! File formats, IO and the command-line front end for `migate-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod export;
pub mod image_io;
pub mod jsonl;
pub mod mifs;

pub use error::{Error, Result};
pub use migate_core;
