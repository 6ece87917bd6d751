//! Pointwise partial information decomposition.
//!
//! For each modality `m ∈ {V, T, J}` a sample carries a specificity
//! `i⁺ = h(x_m)` and an ambiguity `i⁻ = h(x_m | y)`. Redundancy takes the
//! minimum of each over the two single modalities; uniqueness and synergy
//! follow from the chain identities.

pub mod estimator;
pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::discriminators::Head;
use crate::error::{Error, Result};
use crate::prelude::*;

pub use estimator::{
    aggregate_by_split, estimate, EstimatorConfig, FittedEstimator, ModalityTransform, SampleInteraction,
};
pub use oracle::{exact_oracle, DiscreteJointDistribution, OracleOutcome, OracleResult};

/// `i⁺` and `i⁻` for the visual, text and joint views of one sample, indexed
/// by [`Head::index`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointwiseTerms {
    pub i_plus: [f64; 3],
    pub i_minus: [f64; 3],
}

impl PointwiseTerms {
    /// Builds the terms from pointwise entropies `h`, the label's log prior
    /// and its log posterior under each head:
    /// `i⁻ = h + log P(y) − log P(y | x)`.
    pub fn from_models(entropy: [f64; 3], log_prior: f64, log_posterior: [f64; 3]) -> Self {
        let mut i_minus = [0.0; 3];
        for m in 0..3 {
            i_minus[m] = entropy[m] + log_prior - log_posterior[m];
        }
        PointwiseTerms {
            i_plus: entropy,
            i_minus,
        }
    }

    /// Pointwise mutual information `i(x_m; y) = i⁺ − i⁻`.
    pub fn information(&self, head: Head) -> f64 {
        let m = head.index();
        self.i_plus[m] - self.i_minus[m]
    }

    /// The same sample with the roles of the two modalities exchanged.
    pub fn swapped(&self) -> Self {
        PointwiseTerms {
            i_plus: [self.i_plus[1], self.i_plus[0], self.i_plus[2]],
            i_minus: [self.i_minus[1], self.i_minus[0], self.i_minus[2]],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointwiseInteraction {
    pub r_plus: f64,
    pub r_minus: f64,
    pub r: f64,
    pub u_v: f64,
    pub u_t: f64,
    pub s: f64,
}

impl PointwiseInteraction {
    pub fn from_terms(t: &PointwiseTerms) -> Self {
        let (v, tx) = (Head::Visual.index(), Head::Text.index());
        let r_plus = t.i_plus[v].min(t.i_plus[tx]);
        let r_minus = t.i_minus[v].min(t.i_minus[tx]);
        let r = r_plus - r_minus;
        let u_v = t.information(Head::Visual) - r;
        let u_t = t.information(Head::Text) - r;
        let s = t.information(Head::Joint) - r - u_v - u_t;
        PointwiseInteraction {
            r_plus,
            r_minus,
            r,
            u_v,
            u_t,
            s,
        }
    }

    /// `u_V` attains the maximum of `(r, u_V, u_T, s)`; ties count.
    pub fn visual_dominant(&self) -> bool {
        self.u_v >= self.r && self.u_v >= self.u_t && self.u_v >= self.s
    }
}

/// Per-sample terms and the interactions derived from them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointwiseDecomposition {
    pub terms: Vec<PointwiseTerms>,
    pub values: Vec<PointwiseInteraction>,
}

impl PointwiseDecomposition {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn decompose(terms: &[PointwiseTerms]) -> PointwiseDecomposition {
    PointwiseDecomposition {
        terms: terms.to_vec(),
        values: terms.iter().map(PointwiseInteraction::from_terms).collect(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateInteractions {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "U_V")]
    pub u_v: f64,
    #[serde(rename = "U_T")]
    pub u_t: f64,
    #[serde(rename = "S")]
    pub s: f64,
}

impl AggregateInteractions {
    pub fn as_array(&self) -> [f64; 4] {
        [self.r, self.u_v, self.u_t, self.s]
    }

    pub const NAMES: [&'static str; 4] = ["R", "U_V", "U_T", "S"];

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Arithmetic means of the pointwise values.
pub fn aggregate(values: &[PointwiseInteraction]) -> Result<AggregateInteractions> {
    if values.is_empty() {
        return Err(Error::Empty("decomposition"));
    }
    let n = values.len() as f64;
    let mut out = AggregateInteractions::default();
    for v in values {
        out.r += v.r;
        out.u_v += v.u_v;
        out.u_t += v.u_t;
        out.s += v.s;
    }
    out.r /= n;
    out.u_v /= n;
    out.u_t /= n;
    out.s /= n;
    Ok(out)
}

/// Percent change of each component; `None` where the baseline is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeChange {
    #[serde(rename = "R")]
    pub r: Option<f64>,
    #[serde(rename = "U_V")]
    pub u_v: Option<f64>,
    #[serde(rename = "U_T")]
    pub u_t: Option<f64>,
    #[serde(rename = "S")]
    pub s: Option<f64>,
}

pub fn percent_change(before: f64, after: f64) -> Option<f64> {
    if before == 0.0 {
        None
    } else {
        Some(100.0 * (after - before) / before.abs())
    }
}

pub fn relative_change(before: &AggregateInteractions, after: &AggregateInteractions) -> RelativeChange {
    RelativeChange {
        r: percent_change(before.r, after.r),
        u_v: percent_change(before.u_v, after.u_v),
        u_t: percent_change(before.u_t, after.u_t),
        s: percent_change(before.s, after.s),
    }
}
