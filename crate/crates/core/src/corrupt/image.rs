use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::corrupt::sample_seed;
use crate::error::{Error, Result};
use crate::prelude::*;

pub const MAX_LEVEL: u8 = 10;

const GAUSSIAN_SIGMA: [f64; 5] = [0.08, 0.12, 0.18, 0.26, 0.38];
const SHOT_LAMBDA: [f64; 5] = [60.0, 25.0, 12.0, 5.0, 3.0];
const IMPULSE_P: [f64; 5] = [0.03, 0.06, 0.09, 0.17, 0.27];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageBuffer {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "images need 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::dim("image bytes", height * width * channels, data.len()));
        }
        Ok(ImageBuffer {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Self {
        ImageBuffer {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Mean absolute difference per byte.
    pub fn mean_abs_diff(&self, other: &ImageBuffer) -> f64 {
        let total: u64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs() as u64)
            .sum();
        total as f64 / self.data.len().max(1) as f64
    }

    /// Number of pixels with at least one changed channel.
    pub fn changed_pixels(&self, other: &ImageBuffer) -> usize {
        self.data
            .chunks_exact(self.channels)
            .zip(other.data.chunks_exact(other.channels))
            .filter(|(a, b)| a != b)
            .count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Shot,
    Impulse,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Gaussian, NoiseKind::Shot, NoiseKind::Impulse];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Shot => "shot",
            NoiseKind::Impulse => "impulse",
        }
    }

    /// Distortion parameter of a level in `1..=MAX_LEVEL`: the noise standard
    /// deviation, the photon count λ, or the corrupted-pixel fraction.
    ///
    /// Levels past 5 continue the last increment of levels 4–5. For shot
    /// noise that increment is taken on `1/λ`, since λ itself would turn
    /// negative.
    pub fn severity(self, level: u8) -> Result<f64> {
        if level == 0 || level > MAX_LEVEL {
            return Err(Error::InvalidArgument(format!(
                "severity level {level} is outside 1..={MAX_LEVEL}"
            )));
        }
        let i = level as usize - 1;
        let extend = |t: &[f64; 5]| {
            if i < 5 {
                t[i]
            } else {
                t[4] + (i - 4) as f64 * (t[4] - t[3])
            }
        };
        Ok(match self {
            NoiseKind::Gaussian => extend(&GAUSSIAN_SIGMA),
            NoiseKind::Impulse => extend(&IMPULSE_P),
            NoiseKind::Shot => {
                let inv = SHOT_LAMBDA.map(|l| 1.0 / l);
                1.0 / extend(&inv)
            }
        })
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown noise kind {s:?}")))
    }
}

fn quantize(v: f64) -> u8 {
    libm::round(v.clamp(0.0, 1.0) * 255.0) as u8
}

/// Additive Gaussian noise with standard deviation `sigma` on the `[0, 1]` scale.
pub fn gaussian_noise_with(img: &ImageBuffer, sigma: f64, rng: &mut impl Rng) -> Result<ImageBuffer> {
    let mut out = img.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(format!("{e}")))?;
    for v in out.data.iter_mut() {
        *v = quantize(*v as f64 / 255.0 + normal.sample(rng));
    }
    Ok(out)
}

/// Poisson resampling with photon count `lambda`.
pub fn shot_noise_with(img: &ImageBuffer, lambda: f64, rng: &mut impl Rng) -> Result<ImageBuffer> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "photon count must be positive, got {lambda}"
        )));
    }
    let mut out = img.clone();
    for v in out.data.iter_mut() {
        let rate = *v as f64 / 255.0 * lambda;
        let draw = if rate > 0.0 {
            Poisson::new(rate)
                .map_err(|e| Error::InvalidArgument(format!("{e}")))?
                .sample(rng)
        } else {
            0.0
        };
        *v = quantize(draw / lambda);
    }
    Ok(out)
}

/// Sets a fraction `p` of pixels (all channels) to black or white with equal odds.
pub fn impulse_noise_with(img: &ImageBuffer, p: f64, rng: &mut impl Rng) -> Result<ImageBuffer> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "impulse fraction {p} is outside [0, 1]"
        )));
    }
    let mut out = img.clone();
    if p == 0.0 {
        return Ok(out);
    }
    let channels = out.channels;
    for px in out.data.chunks_exact_mut(channels) {
        if rng.random::<f64>() < p {
            let value = if rng.random::<bool>() { 255 } else { 0 };
            px.fill(value);
        }
    }
    Ok(out)
}

fn level_rng(sample_id: &str, kind: NoiseKind, level: u8, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sample_seed(seed, sample_id, kind.name(), level))
}

pub fn gaussian_noise(img: &ImageBuffer, level: u8, seed: u64) -> Result<ImageBuffer> {
    corrupt_image(img, NoiseKind::Gaussian, level, seed)
}

pub fn shot_noise(img: &ImageBuffer, level: u8, seed: u64) -> Result<ImageBuffer> {
    corrupt_image(img, NoiseKind::Shot, level, seed)
}

pub fn impulse_noise(img: &ImageBuffer, level: u8, seed: u64) -> Result<ImageBuffer> {
    corrupt_image(img, NoiseKind::Impulse, level, seed)
}

/// Applies one noise kind at a table level. The random stream depends only
/// on `(seed, kind, level)`.
pub fn corrupt_image(img: &ImageBuffer, kind: NoiseKind, level: u8, seed: u64) -> Result<ImageBuffer> {
    corrupt_sample_image(img, "", kind, level, seed)
}

/// As [`corrupt_image`] with the random stream keyed by `(seed, sample_id,
/// kind, level)`, so each sample of a dataset gets its own noise regardless
/// of processing order.
pub fn corrupt_sample_image(
    img: &ImageBuffer,
    sample_id: &str,
    kind: NoiseKind,
    level: u8,
    seed: u64,
) -> Result<ImageBuffer> {
    let param = kind.severity(level)?;
    let mut rng = level_rng(sample_id, kind, level, seed);
    match kind {
        NoiseKind::Gaussian => gaussian_noise_with(img, param, &mut rng),
        NoiseKind::Shot => shot_noise_with(img, param, &mut rng),
        NoiseKind::Impulse => impulse_noise_with(img, param, &mut rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(h: usize, w: usize) -> ImageBuffer {
        let data = (0..h * w * 3).map(|i| ((i * 37) % 256) as u8).collect();
        ImageBuffer::new(h, w, 3, data).unwrap()
    }

    #[test]
    fn tables_match_levels_one_to_five() {
        assert_eq!(NoiseKind::Gaussian.severity(1).unwrap(), 0.08);
        assert_eq!(NoiseKind::Gaussian.severity(5).unwrap(), 0.38);
        assert_eq!(NoiseKind::Shot.severity(2).unwrap(), 25.0);
        assert_eq!(NoiseKind::Impulse.severity(4).unwrap(), 0.17);
        assert!(NoiseKind::Impulse.severity(0).is_err());
        assert!(NoiseKind::Impulse.severity(11).is_err());
    }

    #[test]
    fn tables_are_strictly_monotone_through_level_ten() {
        for kind in NoiseKind::ALL {
            let p: Vec<f64> = (1..=MAX_LEVEL).map(|l| kind.severity(l).unwrap()).collect();
            for w in p.windows(2) {
                match kind {
                    NoiseKind::Shot => assert!(w[1] < w[0] && w[1] > 0.0, "{kind}: {p:?}"),
                    _ => assert!(w[1] > w[0], "{kind}: {p:?}"),
                }
            }
        }
        assert!((NoiseKind::Impulse.severity(6).unwrap() - 0.37).abs() < 1e-12);
        assert!((NoiseKind::Gaussian.severity(6).unwrap() - 0.50).abs() < 1e-12);
    }

    #[test]
    fn zero_parameters_are_identity() {
        let img = gradient(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(gaussian_noise_with(&img, 0.0, &mut rng).unwrap(), img);
        assert_eq!(impulse_noise_with(&img, 0.0, &mut rng).unwrap(), img);
    }

    #[test]
    fn black_stays_black_under_shot_noise() {
        let img = ImageBuffer::filled(16, 16, 1, 0);
        for level in 1..=MAX_LEVEL {
            assert_eq!(shot_noise(&img, level, 9).unwrap(), img);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let img = gradient(16, 16);
        for kind in NoiseKind::ALL {
            let a = corrupt_image(&img, kind, 3, 11).unwrap();
            assert_eq!(a, corrupt_image(&img, kind, 3, 11).unwrap());
            assert_ne!(a, corrupt_image(&img, kind, 3, 12).unwrap());
        }
    }

    #[test]
    fn buffer_size_is_checked() {
        assert!(ImageBuffer::new(2, 2, 3, vec![0; 11]).is_err());
        assert!(ImageBuffer::new(2, 2, 2, vec![0; 8]).is_err());
    }
}
