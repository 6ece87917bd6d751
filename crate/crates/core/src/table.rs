//! Paired multimodal feature tables and text manifests.

use alloc::collections::BTreeSet;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_byte(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Split::Train),
            1 => Some(Split::Val),
            2 => Some(Split::Test),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub sample_id: String,
    pub split: Split,
    pub visual: Vec<f32>,
    pub text: Vec<f32>,
    pub label: u32,
}

/// A dataset of paired visual/text feature vectors. The record count is the
/// header's `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub visual_dim: usize,
    pub text_dim: usize,
    pub classes: usize,
    pub records: Vec<FeatureRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rule {
    DuplicateId,
    VisualDim { expected: usize, got: usize },
    TextDim { expected: usize, got: usize },
    LabelRange { label: u32, classes: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub sample_id: String,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rule {
            Rule::DuplicateId => write!(f, "{}: duplicate sample_id", self.sample_id),
            Rule::VisualDim { expected, got } => {
                write!(
                    f,
                    "{}: visual features have length {got}, expected {expected}",
                    self.sample_id
                )
            }
            Rule::TextDim { expected, got } => {
                write!(
                    f,
                    "{}: text features have length {got}, expected {expected}",
                    self.sample_id
                )
            }
            Rule::LabelRange { label, classes } => {
                write!(f, "{}: label {label} is not below C = {classes}", self.sample_id)
            }
        }
    }
}

impl FeatureTable {
    pub fn new(visual_dim: usize, text_dim: usize, classes: usize) -> Self {
        FeatureTable {
            visual_dim,
            text_dim,
            classes,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn visual_matrix(&self) -> Matrix<f32> {
        let mut data = Vec::with_capacity(self.len() * self.visual_dim);
        for r in &self.records {
            data.extend_from_slice(&r.visual);
        }
        Matrix::from_vec(self.len(), self.visual_dim, data).expect("validated table")
    }

    pub fn text_matrix(&self) -> Matrix<f32> {
        let mut data = Vec::with_capacity(self.len() * self.text_dim);
        for r in &self.records {
            data.extend_from_slice(&r.text);
        }
        Matrix::from_vec(self.len(), self.text_dim, data).expect("validated table")
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label as usize).collect()
    }

    /// Checks the table invariants, returning an error listing every violation.
    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate_table(self);
        if violations.is_empty() {
            return Ok(());
        }
        let listed: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
        Err(Error::Schema(format!(
            "{} table violation(s): {}",
            violations.len(),
            listed.join("; ")
        )))
    }
}

/// Reports every broken invariant; an empty list means the table is valid.
pub fn validate_table(table: &FeatureTable) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for r in &table.records {
        if !seen.insert(r.sample_id.as_str()) {
            out.push(Violation {
                sample_id: r.sample_id.clone(),
                rule: Rule::DuplicateId,
            });
        }
        if r.visual.len() != table.visual_dim {
            out.push(Violation {
                sample_id: r.sample_id.clone(),
                rule: Rule::VisualDim {
                    expected: table.visual_dim,
                    got: r.visual.len(),
                },
            });
        }
        if r.text.len() != table.text_dim {
            out.push(Violation {
                sample_id: r.sample_id.clone(),
                rule: Rule::TextDim {
                    expected: table.text_dim,
                    got: r.text.len(),
                },
            });
        }
        if r.label as usize >= table.classes {
            out.push(Violation {
                sample_id: r.sample_id.clone(),
                rule: Rule::LabelRange {
                    label: r.label,
                    classes: table.classes,
                },
            });
        }
    }
    out
}

/// Records of one split, in their original order.
pub fn select_split(table: &FeatureTable, split: Split) -> FeatureTable {
    FeatureTable {
        visual_dim: table.visual_dim,
        text_dim: table.text_dim,
        classes: table.classes,
        records: table.records.iter().filter(|r| r.split == split).cloned().collect(),
    }
}

/// The same table with the visual and text features exchanged.
pub fn swap_modalities(table: &FeatureTable) -> FeatureTable {
    FeatureTable {
        visual_dim: table.text_dim,
        text_dim: table.visual_dim,
        classes: table.classes,
        records: table
            .records
            .iter()
            .map(|r| FeatureRecord {
                visual: r.text.clone(),
                text: r.visual.clone(),
                ..r.clone()
            })
            .collect(),
    }
}

/// Raw text of a sample and, once captioned, its caption.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextManifestRecord {
    pub sample_id: String,
    pub text: String,
    #[serde(default)]
    pub caption: Option<String>,
}

/// Returns the first duplicated sample id, if any.
pub fn duplicate_manifest_id(records: &[TextManifestRecord]) -> Option<&str> {
    let mut seen = BTreeSet::new();
    records
        .iter()
        .find(|r| !seen.insert(r.sample_id.as_str()))
        .map(|r| r.sample_id.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, split: Split, label: u32) -> FeatureRecord {
        FeatureRecord {
            sample_id: id.into(),
            split,
            visual: vec![0.0, 1.0],
            text: vec![1.0, 0.0, 0.5],
            label,
        }
    }

    fn fixture() -> FeatureTable {
        let mut t = FeatureTable::new(2, 3, 2);
        t.records = vec![
            record("a", Split::Train, 0),
            record("b", Split::Val, 1),
            record("c", Split::Train, 1),
            record("d", Split::Test, 0),
            record("e", Split::Train, 0),
            record("f", Split::Val, 1),
        ];
        t
    }

    #[test]
    fn well_formed_fixture_has_no_violations() {
        assert!(validate_table(&fixture()).is_empty());
    }

    #[test]
    fn duplicate_id_is_named() {
        let mut t = fixture();
        t.records[3].sample_id = "a".into();
        let v = validate_table(&t);
        assert_eq!(
            v,
            vec![Violation {
                sample_id: "a".into(),
                rule: Rule::DuplicateId
            }]
        );
    }

    #[test]
    fn label_equal_to_class_count_is_out_of_range() {
        let mut t = fixture();
        t.records[1].label = 2;
        let v = validate_table(&t);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::LabelRange { label: 2, classes: 2 });
    }

    #[test]
    fn split_selection_preserves_order_and_partitions() {
        let t = fixture();
        let train = select_split(&t, Split::Train);
        assert_eq!(train.len(), 3);
        let ids: Vec<_> = train.records.iter().map(|r| r.sample_id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "e"]);
        let total: usize = Split::ALL.iter().map(|&s| select_split(&t, s).len()).sum();
        assert_eq!(total, t.len());
    }

    #[test]
    fn absent_split_is_empty() {
        let mut t = fixture();
        t.records.retain(|r| r.split != Split::Test);
        assert_eq!(select_split(&t, Split::Test).len(), 0);
    }
}
