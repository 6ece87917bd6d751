//! Interaction gate: picks visually dominant samples up to a fraction `τ`
//! of the dataset, orders them by a salted SHA-256 tier, and appends a
//! caption of the image to their text.

use alloc::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pid::PointwiseInteraction;
use crate::prelude::*;
use crate::table::{FeatureTable, TextManifestRecord};

pub const CAPTION_SEPARATOR: &str = "\n";
/// Absorbs binary rounding in `τ·N` (e.g. `0.29 · 100 = 28.999…`).
const FLOOR_GUARD: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    InteractionGated,
    UniformTier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub tau: f64,
    pub mode: GateMode,
    pub hash_salt: String,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            tau: 0.25,
            mode: GateMode::InteractionGated,
            hash_salt: String::new(),
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.tau) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("tau = {} is outside [0, 1]", self.tau)))
        }
    }
}

/// Leading 64 bits of `SHA-256(salt ‖ id)` mapped into `[0, 1)`. Only the top
/// 53 bits are kept so the conversion to `f64` is exact and never reaches 1.
pub fn hash_unit(sample_id: &str, salt: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update(sample_id.as_bytes());
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    let u = u64::from_be_bytes(head);
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The leading 64 bits of `SHA-256(salt ‖ id)` as an integer seed.
pub fn hash_seed(sample_id: &str, salt: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update(sample_id.as_bytes());
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(head)
}

/// Indices whose `u_V` is (tie-inclusively) the largest interaction.
pub fn select_valid(values: &[PointwiseInteraction]) -> Vec<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.visual_dominant())
        .map(|(i, _)| i)
        .collect()
}

/// `min(⌊τN⌋, valid)`.
pub fn caption_count(n: usize, tau: f64, valid: usize) -> usize {
    let k = libm::floor(tau * n as f64 + FLOOR_GUARD);
    (k.max(0.0) as usize).min(valid)
}

/// The `k` valid indices with the smallest tier, ties broken by sample id;
/// returned in that order.
pub fn choose_caption_set(valid: &[usize], n: usize, tau: f64, tiers: &[f64], ids: &[&str]) -> Vec<usize> {
    let k = caption_count(n, tau, valid.len());
    let mut ordered = valid.to_vec();
    ordered.sort_by(|&a, &b| tiers[a].total_cmp(&tiers[b]).then_with(|| ids[a].cmp(ids[b])));
    ordered.truncate(k);
    ordered
}

/// Source of image captions.
pub trait CaptionProvider {
    /// Stable identifier used as part of the memoization key.
    fn provider_id(&self) -> &str;

    fn caption(&mut self, sample_id: &str, visual: &[f32]) -> core::result::Result<String, String>;
}

/// Captions remembered per `(provider id, sample id)`, so a larger `τ`
/// reuses exactly the captions produced for a smaller one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CaptionCache {
    entries: BTreeMap<(String, String), String>,
}

impl CaptionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, provider: &str, sample_id: &str) -> Option<&str> {
        self.entries
            .get(&(provider.to_string(), sample_id.to_string()))
            .map(String::as_str)
    }

    pub fn caption_with(
        &mut self,
        provider: &mut dyn CaptionProvider,
        sample_id: &str,
        visual: &[f32],
    ) -> core::result::Result<String, String> {
        let key = (provider.provider_id().to_string(), sample_id.to_string());
        if let Some(c) = self.entries.get(&key) {
            return Ok(c.clone());
        }
        let c = provider.caption(sample_id, visual)?;
        self.entries.insert(key, c.clone());
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub sample_id: String,
    pub selected: bool,
    pub tier: f64,
    pub caption: Option<String>,
    pub augmented_text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSummary {
    pub n: usize,
    pub valid: usize,
    pub k: usize,
    pub tau: f64,
    pub selected: usize,
    pub failed: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateOutcome {
    pub records: Vec<AugmentedRecord>,
    pub summary: GateSummary,
}

pub fn augment_text(text: &str, caption: &str) -> String {
    let mut s = String::with_capacity(text.len() + CAPTION_SEPARATOR.len() + caption.len());
    s.push_str(text);
    s.push_str(CAPTION_SEPARATOR);
    s.push_str(caption);
    s
}

/// Runs the gate over a table and its text manifest. In interaction-gated
/// mode `values` must hold one interaction per record in table order; in
/// uniform-tier mode it is ignored and every sample whose tier is below `τ`
/// is captioned.
pub fn run_gate(
    table: &FeatureTable,
    manifest: &[TextManifestRecord],
    values: Option<&[PointwiseInteraction]>,
    cfg: &GateConfig,
    provider: &mut dyn CaptionProvider,
    cache: &mut CaptionCache,
) -> Result<GateOutcome> {
    cfg.validate()?;
    let n = table.len();
    let texts: BTreeMap<&str, &str> = manifest
        .iter()
        .map(|r| (r.sample_id.as_str(), r.text.as_str()))
        .collect();
    if texts.len() != manifest.len() {
        let dup = crate::table::duplicate_manifest_id(manifest).unwrap_or_default();
        return Err(Error::Schema(format!("duplicate sample_id {dup:?} in text manifest")));
    }
    let ids: Vec<&str> = table.records.iter().map(|r| r.sample_id.as_str()).collect();
    for id in &ids {
        if !texts.contains_key(id) {
            return Err(Error::Schema(format!("sample {id:?} has no text manifest entry")));
        }
    }
    let tiers: Vec<f64> = ids.iter().map(|id| hash_unit(id, &cfg.hash_salt)).collect();

    let (valid_count, chosen) = match cfg.mode {
        GateMode::InteractionGated => {
            let values =
                values.ok_or_else(|| Error::InvalidArgument("interaction-gated mode needs a decomposition".into()))?;
            if values.len() != n {
                return Err(Error::dim("decomposition rows", n, values.len()));
            }
            let valid = select_valid(values);
            (valid.len(), choose_caption_set(&valid, n, cfg.tau, &tiers, &ids))
        }
        GateMode::UniformTier => {
            let mut chosen: Vec<usize> = (0..n).filter(|&i| tiers[i] < cfg.tau).collect();
            chosen.sort_by(|&a, &b| tiers[a].total_cmp(&tiers[b]).then_with(|| ids[a].cmp(ids[b])));
            (n, chosen)
        }
    };
    let k = chosen.len();

    let mut captions: Vec<Option<String>> = vec![None; n];
    let mut failed = Vec::new();
    for &i in &chosen {
        match cache.caption_with(provider, ids[i], &table.records[i].visual) {
            Ok(c) => captions[i] = Some(c),
            Err(e) => {
                log::warn!("caption provider failed for {}: {e}", ids[i]);
                failed.push(ids[i].to_string());
            }
        }
    }
    if k > 0 && failed.len() == k {
        return Err(Error::Gate { failed });
    }

    let records: Vec<AugmentedRecord> = (0..n)
        .map(|i| {
            let text = texts[ids[i]];
            let caption = captions[i].take();
            AugmentedRecord {
                sample_id: ids[i].to_string(),
                selected: caption.is_some(),
                tier: tiers[i],
                augmented_text: match &caption {
                    Some(c) => augment_text(text, c),
                    None => text.to_string(),
                },
                caption,
            }
        })
        .collect();
    let selected = records.iter().filter(|r| r.selected).count();
    Ok(GateOutcome {
        records,
        summary: GateSummary {
            n,
            valid: valid_count,
            k,
            tau: cfg.tau,
            selected,
            failed,
        },
    })
}

/// Temperature-scaled mixture weights `W_i = N_i^τ`.
pub fn mixture_weights(counts: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if let Some(c) = counts.iter().find(|&&c| !(c > 0.0)) {
        return Err(Error::Domain(format!("dataset sizes must be positive, got {c}")));
    }
    Ok(counts.iter().map(|&c| libm::pow(c, temperature)).collect())
}
