//! End-to-end interaction estimator: mixture entropy models for `h(x_m)`,
//! jointly trained discriminators for `log P(y | x_m)`, and the empirical
//! class prior.

use alloc::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::discriminators::{train_set, ClassPrior, DiscriminatorSet, Head, HeadData, HIDDEN_UNITS};
use crate::error::{Error, Result};
use crate::gmm::{fit_joint, GmmData, GmmEntropyModel, GmmScratch, DEFAULT_COMPONENTS};
use crate::linalg::Matrix;
use crate::nn::pca::{pca_fit, PcaModel};
use crate::nn::train::{TrainConfig, TrainReport};
use crate::pid::{aggregate, AggregateInteractions, PointwiseInteraction, PointwiseTerms};
use crate::prelude::*;
use crate::table::{select_split, FeatureTable, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Mixture components per entropy model.
    pub components: usize,
    pub hidden_units: usize,
    pub classifier: TrainConfig,
    pub entropy: TrainConfig,
    /// Per-dimension standardization using training-split statistics.
    pub standardize: bool,
    /// Project each modality onto this many principal components first.
    pub pca_dim: Option<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            components: DEFAULT_COMPONENTS,
            hidden_units: HIDDEN_UNITS,
            classifier: TrainConfig::classifier(),
            entropy: TrainConfig::entropy(),
            standardize: false,
            pca_dim: None,
        }
    }
}

impl EstimatorConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.classifier.seed = seed;
        self.entropy.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 || self.hidden_units == 0 || self.pca_dim == Some(0) {
            return Err(Error::InvalidArgument(
                "components, hidden_units and pca_dim must be positive".into(),
            ));
        }
        self.classifier.validate()?;
        self.entropy.validate()
    }
}

/// Feature preprocessing for one modality, fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityTransform {
    pub pca: Option<PcaModel>,
    /// `(mean, std)` per output dimension.
    pub standardize: Option<(Vec<f64>, Vec<f64>)>,
}

impl ModalityTransform {
    fn fit(x: &Matrix<f64>, cfg: &EstimatorConfig) -> Result<Self> {
        let pca = match cfg.pca_dim {
            Some(k) if k < x.cols() => Some(pca_fit(x, k)?),
            _ => None,
        };
        let projected;
        let base = match &pca {
            Some(p) => {
                projected = crate::nn::pca::pca_transform(p, x)?;
                &projected
            }
            None => x,
        };
        let standardize = cfg.standardize.then(|| {
            let (n, d) = (base.rows() as f64, base.cols());
            let mut mean = vec![0.0; d];
            let mut var = vec![0.0; d];
            for i in 0..base.rows() {
                for (m, v) in mean.iter_mut().zip(base.row(i)) {
                    *m += v / n;
                }
            }
            for i in 0..base.rows() {
                for ((s, v), m) in var.iter_mut().zip(base.row(i)).zip(&mean) {
                    *s += (v - m) * (v - m) / n;
                }
            }
            let std = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
            (mean, std)
        });
        Ok(ModalityTransform { pca, standardize })
    }

    pub fn output_dim(&self, input: usize) -> usize {
        self.pca.as_ref().map_or(input, PcaModel::output_dim)
    }

    pub fn apply(&self, x: &Matrix<f64>) -> Result<Matrix<f64>> {
        let mut out = match &self.pca {
            Some(p) => crate::nn::pca::pca_transform(p, x)?,
            None => x.clone(),
        };
        if let Some((mean, std)) = &self.standardize {
            for i in 0..out.rows() {
                for ((v, m), s) in out.row_mut(i).iter_mut().zip(mean).zip(std) {
                    *v = (*v - m) / s;
                }
            }
        }
        Ok(out)
    }
}

/// Interaction values of one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleInteraction {
    pub sample_id: String,
    pub split: Split,
    pub terms: PointwiseTerms,
    pub interaction: PointwiseInteraction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedEstimator {
    pub transforms: [ModalityTransform; 2],
    /// Entropy models for the visual, text and concatenated features.
    pub entropy: [GmmEntropyModel; 3],
    #[serde(skip)]
    pub discriminators: Option<DiscriminatorSet>,
    pub prior: ClassPrior,
    pub entropy_report: TrainReport,
    pub classifier_report: TrainReport,
}

struct Prepared {
    visual: Matrix<f64>,
    text: Matrix<f64>,
    joint: Matrix<f64>,
    visual32: Matrix<f32>,
    text32: Matrix<f32>,
    labels: Vec<usize>,
}

fn widen(m: &Matrix<f32>) -> Matrix<f64> {
    m.map(|v| v as f64)
}

fn prepare(table: &FeatureTable, transforms: &[ModalityTransform; 2]) -> Result<Prepared> {
    let visual = transforms[0].apply(&widen(&table.visual_matrix()))?;
    let text = transforms[1].apply(&widen(&table.text_matrix()))?;
    let joint = visual.hstack(&text)?;
    Ok(Prepared {
        visual32: visual.map(|v| v as f32),
        text32: text.map(|v| v as f32),
        visual,
        text,
        joint,
        labels: table.labels(),
    })
}

impl Prepared {
    fn heads(&self) -> HeadData<'_> {
        HeadData {
            visual: &self.visual32,
            text: &self.text32,
            labels: &self.labels,
        }
    }
}

impl FittedEstimator {
    /// Fits all models on the training split, early-stopping on the
    /// validation split. The class prior uses every record.
    pub fn fit(table: &FeatureTable, cfg: &EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        table.ensure_valid()?;
        let train = select_split(table, Split::Train);
        let val = select_split(table, Split::Val);
        if train.is_empty() {
            return Err(Error::Empty("training split"));
        }
        if val.is_empty() {
            return Err(Error::Empty("validation split"));
        }
        let prior = ClassPrior::from_labels(&table.labels(), table.classes)?;
        let transforms = [
            ModalityTransform::fit(&widen(&train.visual_matrix()), cfg)?,
            ModalityTransform::fit(&widen(&train.text_matrix()), cfg)?,
        ];
        let tr = prepare(&train, &transforms)?;
        let va = prepare(&val, &transforms)?;

        let gmm = fit_joint(
            &[
                GmmData {
                    train: &tr.visual,
                    val: &va.visual,
                },
                GmmData {
                    train: &tr.text,
                    val: &va.text,
                },
                GmmData {
                    train: &tr.joint,
                    val: &va.joint,
                },
            ],
            cfg.components,
            &cfg.entropy,
        )?;
        log::info!(
            "entropy models: {} epochs, best validation NLL {:.6}",
            gmm.report.epochs_run,
            gmm.report.best_val_loss
        );
        let (discriminators, classifier_report) = train_set(
            &tr.heads(),
            &va.heads(),
            table.classes,
            cfg.hidden_units,
            &cfg.classifier,
        )?;
        log::info!(
            "discriminators: {} epochs, best validation CE {:.6}",
            classifier_report.epochs_run,
            classifier_report.best_val_loss
        );
        let [v, t, j]: [GmmEntropyModel; 3] = gmm
            .models
            .try_into()
            .map_err(|_| Error::numerical("entropy model count"))?;
        Ok(FittedEstimator {
            transforms,
            entropy: [v, t, j],
            discriminators: Some(discriminators),
            prior,
            entropy_report: gmm.report,
            classifier_report,
        })
    }

    pub fn discriminators(&self) -> Result<&DiscriminatorSet> {
        self.discriminators
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("estimator has no discriminators loaded".into()))
    }

    /// Pointwise terms and interactions for every record, in table order.
    pub fn evaluate(&self, table: &FeatureTable) -> Result<Vec<SampleInteraction>> {
        table.ensure_valid()?;
        let disc = self.discriminators()?;
        if table.classes != self.prior.classes() {
            return Err(Error::dim("class count", self.prior.classes(), table.classes));
        }
        let data = prepare(table, &self.transforms)?;
        let heads = data.heads();
        let posts = [
            disc.log_posterior_of_labels(Head::Visual, &heads)?,
            disc.log_posterior_of_labels(Head::Text, &heads)?,
            disc.log_posterior_of_labels(Head::Joint, &heads)?,
        ];
        let inputs = [&data.visual, &data.text, &data.joint];
        let mut scratch: Vec<GmmScratch> = self.entropy.iter().map(|m| GmmScratch::new(m.layout())).collect();
        let mut out = Vec::with_capacity(table.len());
        for (i, rec) in table.records.iter().enumerate() {
            let mut h = [0.0; 3];
            for m in 0..3 {
                h[m] = -self.entropy[m]
                    .view()
                    .log_density_with(inputs[m].row(i), &mut scratch[m])?;
            }
            let terms = PointwiseTerms::from_models(
                h,
                self.prior.log_prob(rec.label as usize),
                [posts[0][i], posts[1][i], posts[2][i]],
            );
            out.push(SampleInteraction {
                sample_id: rec.sample_id.clone(),
                split: rec.split,
                terms,
                interaction: PointwiseInteraction::from_terms(&terms),
            });
        }
        Ok(out)
    }
}

/// Means over each non-empty split plus `"all"`.
pub fn aggregate_by_split(samples: &[SampleInteraction]) -> Result<BTreeMap<String, AggregateInteractions>> {
    let mut out = BTreeMap::new();
    let all: Vec<PointwiseInteraction> = samples.iter().map(|s| s.interaction).collect();
    out.insert("all".to_string(), aggregate(&all)?);
    for split in Split::ALL {
        let part: Vec<PointwiseInteraction> = samples
            .iter()
            .filter(|s| s.split == split)
            .map(|s| s.interaction)
            .collect();
        if !part.is_empty() {
            out.insert(split.name().to_string(), aggregate(&part)?);
        }
    }
    Ok(out)
}

/// Fits on `table` and returns per-sample values with per-split means.
pub fn estimate(
    table: &FeatureTable,
    cfg: &EstimatorConfig,
) -> Result<(
    FittedEstimator,
    Vec<SampleInteraction>,
    BTreeMap<String, AggregateInteractions>,
)> {
    let fitted = FittedEstimator::fit(table, cfg)?;
    let samples = fitted.evaluate(table)?;
    let aggregates = aggregate_by_split(&samples)?;
    Ok((fitted, samples, aggregates))
}
