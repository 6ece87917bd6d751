//! Synthetic two-bit benchmarks with known interactions.
//!
//! Each modality carries one symbol that is embedded as a 2-D anchor point
//! plus Gaussian jitter. Text symbols are parsed back from their string form,
//! so appending a caption `v=<bit>` changes the text embedding exactly the
//! way re-extracting features from captioned text would.

use alloc::collections::BTreeMap;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gate::{hash_seed, hash_unit, CaptionProvider, CAPTION_SEPARATOR};
use crate::pid::DiscreteJointDistribution;
use crate::prelude::*;
use crate::table::{FeatureRecord, FeatureTable, Split, TextManifestRecord};

pub const EMBED_DIM: usize = 2;
pub const DEFAULT_JITTER: f64 = 0.05;
/// Text symbols: `b_t` alone, or `b_t + 2(1 + b_v)` once a caption is attached.
pub const TEXT_SYMBOLS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicGate {
    Xor,
    Copy,
    UniqueV,
    UniqueVNoise,
}

impl LogicGate {
    pub const ALL: [LogicGate; 4] = [
        LogicGate::Xor,
        LogicGate::Copy,
        LogicGate::UniqueV,
        LogicGate::UniqueVNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LogicGate::Xor => "xor",
            LogicGate::Copy => "copy",
            LogicGate::UniqueV => "unique_v",
            LogicGate::UniqueVNoise => "unique_v_noise",
        }
    }

    /// `(v, t, y)` for two independent fair bits `a`, `b`.
    pub fn symbols(self, a: usize, b: usize) -> (usize, usize, usize) {
        match self {
            LogicGate::Xor => (a, b, a ^ b),
            LogicGate::Copy => (a, a, a),
            LogicGate::UniqueV => (a, 0, a),
            LogicGate::UniqueVNoise => (a, b, a),
        }
    }

    /// Exact distribution over `(visual symbol, text symbol, label)`.
    pub fn distribution(self) -> DiscreteJointDistribution {
        self.distribution_with(|_, t| t)
    }

    /// Distribution after attaching the visual bit as a caption to every text.
    pub fn captioned_distribution(self) -> DiscreteJointDistribution {
        self.distribution_with(|v, t| captioned_symbol(t, v))
    }

    fn distribution_with(self, text: impl Fn(usize, usize) -> usize) -> DiscreteJointDistribution {
        let mut w = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                let (v, t, y) = self.symbols(a, b);
                w.push(((v, text(v, t), y), 0.25));
            }
        }
        DiscreteJointDistribution::from_weights(2, TEXT_SYMBOLS, 2, &w).expect("valid gate")
    }
}

impl fmt::Display for LogicGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for LogicGate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LogicGate::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown gate {s:?}")))
    }
}

pub fn captioned_symbol(text_bit: usize, visual_bit: usize) -> usize {
    text_bit + 2 * (1 + visual_bit)
}

/// Anchor of a symbol: indices 0–3 on the unit circle at multiples of 90°,
/// 4–7 on the radius-2 circle offset by 45°.
pub fn anchor(symbol: usize) -> [f64; EMBED_DIM] {
    let (radius, angle) = if symbol < 4 {
        (1.0, symbol as f64 * FRAC_PI_2)
    } else {
        (2.0, FRAC_PI_4 + (symbol - 4) as f64 * FRAC_PI_2)
    };
    let (s, c) = (libm::sin(angle), libm::cos(angle));
    // snap the exact axis points so anchors 0–3 are exactly one-hot style
    let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    [snap(radius * c), snap(radius * s)]
}

pub fn text_string(text_bit: usize) -> String {
    format!("t={text_bit}")
}

pub fn caption_string(visual_bit: usize) -> String {
    format!("v={visual_bit}")
}

fn parse_bit(s: &str, prefix: &str) -> Option<usize> {
    match s.strip_prefix(prefix)? {
        "0" => Some(0),
        "1" => Some(1),
        _ => None,
    }
}

/// Symbol index of a synthetic text, with or without an attached caption.
pub fn text_symbol(text: &str) -> Result<usize> {
    let bad = || Error::Schema(format!("not a synthetic text: {text:?}"));
    match text.split_once(CAPTION_SEPARATOR) {
        None => parse_bit(text, "t=").ok_or_else(bad),
        Some((t, v)) => {
            let t = parse_bit(t, "t=").ok_or_else(bad)?;
            let v = parse_bit(v, "v=").ok_or_else(bad)?;
            Ok(captioned_symbol(t, v))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterMode {
    /// One noise vector per sample, added to both modalities.
    Shared,
    /// Separate noise vectors for the two modalities.
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub gate: LogicGate,
    pub n: usize,
    pub jitter: f64,
    pub seed: u64,
    pub jitter_mode: JitterMode,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            gate: LogicGate::Xor,
            n: 1000,
            jitter: DEFAULT_JITTER,
            seed: 42,
            jitter_mode: JitterMode::Shared,
        }
    }
}

/// Noise vector of one modality of one sample, a pure function of the
/// generator seed and the sample id.
pub fn jitter(seed: u64, sample_id: &str, sigma: f64, mode: JitterMode, text: bool) -> [f64; EMBED_DIM] {
    let salt = match (mode, text) {
        (JitterMode::Independent, true) => format!("jitter-text:{seed}:"),
        _ => format!("jitter:{seed}:"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(hash_seed(sample_id, &salt));
    let mut out = [0.0; EMBED_DIM];
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = sigma * z;
    }
    out
}

fn embed(symbol: usize, noise: [f64; EMBED_DIM]) -> Vec<f32> {
    anchor(symbol).iter().zip(noise).map(|(a, e)| (a + e) as f32).collect()
}

/// 80/10/10 split from the sample id's hash.
pub fn split_for(sample_id: &str) -> Split {
    let u = hash_unit(sample_id, "split:");
    if u < 0.8 {
        Split::Train
    } else if u < 0.9 {
        Split::Val
    } else {
        Split::Test
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub table: FeatureTable,
    pub manifest: Vec<TextManifestRecord>,
    /// `(visual symbol, text symbol, label)` per record.
    pub symbols: Vec<(usize, usize, usize)>,
}

impl SyntheticDataset {
    /// Text features recomputed from rewritten texts (keyed by sample id),
    /// keeping every sample's jitter.
    pub fn reembed(&self, texts: &[(String, String)]) -> Result<FeatureTable> {
        let mut table = self.table.clone();
        let by_id: BTreeMap<&str, &str> = texts.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        for rec in table.records.iter_mut() {
            let text = by_id
                .get(rec.sample_id.as_str())
                .ok_or_else(|| Error::Schema(format!("no text for sample {:?}", rec.sample_id)))?;
            rec.text = embed_text(text, &rec.sample_id, &self.config)?;
        }
        Ok(table)
    }

    /// Empirical distribution of the generated symbols.
    pub fn empirical_distribution(&self) -> Result<DiscreteJointDistribution> {
        let w: Vec<_> = self.symbols.iter().map(|&s| (s, 1.0)).collect();
        DiscreteJointDistribution::from_weights(2, TEXT_SYMBOLS, 2, &w)
    }
}

pub fn embed_text(text: &str, sample_id: &str, cfg: &SyntheticConfig) -> Result<Vec<f32>> {
    let symbol = text_symbol(text)?;
    Ok(embed(
        symbol,
        jitter(cfg.seed, sample_id, cfg.jitter, cfg.jitter_mode, true),
    ))
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    if !(cfg.jitter >= 0.0) || !cfg.jitter.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "jitter must be a finite non-negative number, got {}",
            cfg.jitter
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = FeatureTable::new(EMBED_DIM, EMBED_DIM, 2);
    let mut manifest = Vec::with_capacity(cfg.n);
    let mut symbols = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let a = rng.random_range(0..2usize);
        let b = rng.random_range(0..2usize);
        let (v, t, y) = cfg.gate.symbols(a, b);
        let sample_id = format!("{}-{i:06}", cfg.gate.name());
        let text = text_string(t);
        table.records.push(FeatureRecord {
            split: split_for(&sample_id),
            visual: embed(v, jitter(cfg.seed, &sample_id, cfg.jitter, cfg.jitter_mode, false)),
            text: embed_text(&text, &sample_id, cfg)?,
            label: y as u32,
            sample_id: sample_id.clone(),
        });
        manifest.push(TextManifestRecord {
            sample_id,
            text,
            caption: None,
        });
        symbols.push((v, t, y));
    }
    Ok(SyntheticDataset {
        config: *cfg,
        table,
        manifest,
        symbols,
    })
}

/// Captions an image by decoding the nearest visual anchor into `v=<bit>`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SyntheticCaptioner;

impl CaptionProvider for SyntheticCaptioner {
    fn provider_id(&self) -> &str {
        "synthetic-nearest-anchor"
    }

    fn caption(&mut self, _sample_id: &str, visual: &[f32]) -> core::result::Result<String, String> {
        if visual.len() != EMBED_DIM {
            return Err(format!("expected {EMBED_DIM} visual features, got {}", visual.len()));
        }
        let dist = |s: usize| {
            let a = anchor(s);
            (visual[0] as f64 - a[0]).powi(2) + (visual[1] as f64 - a[1]).powi(2)
        };
        let bit = if dist(1) < dist(0) { 1 } else { 0 };
        Ok(caption_string(bit))
    }
}
