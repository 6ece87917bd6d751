//! Exact pointwise decomposition of a finite joint distribution `p(v, t, y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pid::{AggregateInteractions, PointwiseInteraction, PointwiseTerms};
use crate::prelude::*;

/// Probability tensor over `(x_V, x_T, y)` stored row-major as `[v][t][y]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJointDistribution {
    visual: usize,
    text: usize,
    labels: usize,
    p: Vec<f64>,
}

impl DiscreteJointDistribution {
    pub fn new(visual: usize, text: usize, labels: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != visual * text * labels {
            return Err(Error::dim("joint distribution", visual * text * labels, p.len()));
        }
        if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("probabilities must be finite and non-negative".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(DiscreteJointDistribution {
            visual,
            text,
            labels,
            p,
        })
    }

    /// Normalizes non-negative weights over the given alphabet sizes.
    pub fn from_weights(
        visual: usize,
        text: usize,
        labels: usize,
        weights: &[((usize, usize, usize), f64)],
    ) -> Result<Self> {
        let mut p = vec![0.0; visual * text * labels];
        for &((v, t, y), w) in weights {
            if v >= visual || t >= text || y >= labels {
                return Err(Error::InvalidArgument(format!(
                    "outcome ({v}, {t}, {y}) outside the alphabets"
                )));
            }
            if !(w >= 0.0) {
                return Err(Error::Domain(format!("negative weight {w}")));
            }
            p[(v * text + t) * labels + y] += w;
        }
        let total: f64 = p.iter().sum();
        if total <= 0.0 {
            return Err(Error::Empty("distribution weights"));
        }
        p.iter_mut().for_each(|x| *x /= total);
        // renormalization can leave a rounding residue; absorb it
        let residue = 1.0 - p.iter().sum::<f64>();
        if let Some(m) = p.iter_mut().filter(|x| **x > 0.0).last() {
            *m += residue;
        }
        Self::new(visual, text, labels, p)
    }

    pub fn alphabet_sizes(&self) -> (usize, usize, usize) {
        (self.visual, self.text, self.labels)
    }

    pub fn prob(&self, v: usize, t: usize, y: usize) -> f64 {
        self.p[(v * self.text + t) * self.labels + y]
    }

    /// Swaps the roles of the two modalities.
    pub fn transposed(&self) -> Self {
        let mut p = vec![0.0; self.p.len()];
        for v in 0..self.visual {
            for t in 0..self.text {
                for y in 0..self.labels {
                    p[(t * self.visual + v) * self.labels + y] = self.prob(v, t, y);
                }
            }
        }
        DiscreteJointDistribution {
            visual: self.text,
            text: self.visual,
            labels: self.labels,
            p,
        }
    }

    /// Relabels the symbols of each alphabet by the given permutations.
    pub fn relabeled(&self, pv: &[usize], pt: &[usize], py: &[usize]) -> Result<Self> {
        let mut weights = Vec::with_capacity(self.p.len());
        for v in 0..self.visual {
            for t in 0..self.text {
                for y in 0..self.labels {
                    weights.push(((pv[v], pt[t], py[y]), self.prob(v, t, y)));
                }
            }
        }
        Self::from_weights(self.visual, self.text, self.labels, &weights)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub v: usize,
    pub t: usize,
    pub y: usize,
    pub probability: f64,
    pub terms: PointwiseTerms,
    pub interaction: PointwiseInteraction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Every outcome with positive probability, in `(v, t, y)` order.
    pub outcomes: Vec<OracleOutcome>,
    /// Probability-weighted means.
    pub aggregates: AggregateInteractions,
}

/// Applies the pointwise definitions with exact probabilities:
/// `i⁺ = −log p(x_m)`, `i⁻ = −log p(x_m | y)`.
pub fn exact_oracle(dist: &DiscreteJointDistribution) -> OracleResult {
    let (nv, nt, ny) = dist.alphabet_sizes();
    let mut p_y = vec![0.0; ny];
    let mut p_v = vec![0.0; nv];
    let mut p_t = vec![0.0; nt];
    let mut p_vt = vec![0.0; nv * nt];
    let mut p_vy = vec![0.0; nv * ny];
    let mut p_ty = vec![0.0; nt * ny];
    for v in 0..nv {
        for t in 0..nt {
            for y in 0..ny {
                let p = dist.prob(v, t, y);
                p_y[y] += p;
                p_v[v] += p;
                p_t[t] += p;
                p_vt[v * nt + t] += p;
                p_vy[v * ny + y] += p;
                p_ty[t * ny + y] += p;
            }
        }
    }
    let mut outcomes = Vec::new();
    let mut agg = AggregateInteractions::default();
    for v in 0..nv {
        for t in 0..nt {
            for y in 0..ny {
                let p = dist.prob(v, t, y);
                if p <= 0.0 {
                    continue;
                }
                let ln = libm::log;
                let terms = PointwiseTerms {
                    i_plus: [-ln(p_v[v]), -ln(p_t[t]), -ln(p_vt[v * nt + t])],
                    i_minus: [
                        -ln(p_vy[v * ny + y] / p_y[y]),
                        -ln(p_ty[t * ny + y] / p_y[y]),
                        -ln(p / p_y[y]),
                    ],
                };
                let interaction = PointwiseInteraction::from_terms(&terms);
                agg.r += p * interaction.r;
                agg.u_v += p * interaction.u_v;
                agg.u_t += p * interaction.u_t;
                agg.s += p * interaction.s;
                outcomes.push(OracleOutcome {
                    v,
                    t,
                    y,
                    probability: p,
                    terms,
                    interaction,
                });
            }
        }
    }
    OracleResult {
        outcomes,
        aggregates: agg,
    }
}
