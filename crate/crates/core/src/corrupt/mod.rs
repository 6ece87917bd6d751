//! Graded corruption of images (Gaussian, shot and impulse noise) and of
//! text (character insertion, deletion and replacement).

pub mod image;
pub mod text;

pub use image::{
    corrupt_image, corrupt_sample_image, gaussian_noise, impulse_noise, shot_noise, ImageBuffer, NoiseKind, MAX_LEVEL,
};
pub use text::{
    corrupt_sample_text, corrupt_text, ngram_cosine, NgramCosine, SimilarityOracle, TextCorruption, TextOp,
    MAX_ATTEMPTS, MIN_SIMILARITY, TEXT_RATES,
};

use crate::gate::hash_seed;
use crate::prelude::*;

/// Seed for one `(sample, kind, level)` cell, independent of processing order.
pub fn sample_seed(seed: u64, sample_id: &str, kind: &str, level: u8) -> u64 {
    hash_seed(
        &format!("{sample_id}\u{1f}{kind}\u{1f}{level}"),
        &format!("{seed}\u{1f}"),
    )
}
