//! Minibatch training loop with a step learning-rate schedule and early
//! stopping on a validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Scalar;
use crate::nn::adam::{adam_step, AdamState};
use crate::prelude::*;

/// Multiplies the learning rate by `factor` every `period` epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub factor: f64,
    pub period: usize,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            factor: 0.5,
            period: 10,
        }
    }
}

impl StepSchedule {
    /// Learning rate for a zero-based epoch index.
    pub fn rate(&self, base: f64, epoch: usize) -> f64 {
        let steps = epoch / self.period.max(1);
        base * libm::pow(self.factor, steps as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_min_delta: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub lr_schedule: StepSchedule,
}

/// Epoch cap for the classifiers.
pub const CLASSIFIER_MAX_EPOCHS: usize = 30;
/// Epoch cap for the entropy estimators.
pub const ENTROPY_MAX_EPOCHS: usize = 80;

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: CLASSIFIER_MAX_EPOCHS,
            early_stop_min_delta: 1e-4,
            early_stop_patience: 5,
            seed: 42,
            lr_schedule: StepSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn classifier() -> Self {
        TrainConfig::default()
    }

    pub fn entropy() -> Self {
        TrainConfig {
            max_epochs: ENTROPY_MAX_EPOCHS,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.batch_size > 0
            && self.max_epochs > 0
            && self.early_stop_min_delta >= 0.0
            && self.early_stop_patience > 0
            && self.lr_schedule.factor > 0.0
            && self.lr_schedule.factor <= 1.0
            && self.lr_schedule.period > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid training configuration {self:?}"
            )))
        }
    }
}

/// Outcome of one observed validation loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    /// The loss is the lowest seen so far.
    pub is_best: bool,
    /// Patience is exhausted; training should stop after this epoch.
    pub stop: bool,
}

/// Stops once the monitored loss has not improved on the reference value by at
/// least `min_delta` for `patience` consecutive epochs. The reference only
/// moves on a sufficient improvement; the lowest loss is tracked separately so
/// the best parameters can be restored.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    min_delta: f64,
    patience: usize,
    reference: f64,
    best: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(min_delta: f64, patience: usize) -> Self {
        EarlyStopping {
            min_delta,
            patience,
            reference: f64::INFINITY,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> Observation {
        let is_best = loss < self.best;
        if is_best {
            self.best = loss;
        }
        if loss < self.reference - self.min_delta {
            self.reference = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Observation {
            is_best,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// The loss being minimized, evaluated against a flat parameter buffer.
pub trait Objective<T: Scalar> {
    /// Number of training examples; minibatches are drawn from `0..n`.
    fn num_train(&self) -> usize;

    /// Mean loss over `batch`. The gradient is accumulated into `grad`,
    /// which the caller zeroes beforehand.
    fn batch_loss_grad(&mut self, params: &[T], batch: &[usize], grad: &mut [T]) -> Result<f64>;

    /// Loss monitored for early stopping.
    fn validation_loss(&mut self, params: &[T]) -> Result<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Zero-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stopped_early: bool,
}

/// Trains `params` in place with Adam and returns the loss history. On return
/// `params` hold the values from the epoch with the lowest validation loss.
pub fn train<T: Scalar, O: Objective<T>>(
    params: &mut [T],
    objective: &mut O,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let n = objective.num_train();
    if n == 0 {
        return Err(Error::Empty("training data"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![T::zero(); params.len()];
    let mut adam = AdamState::new(params.len());
    let mut stopper = EarlyStopping::new(cfg.early_stop_min_delta, cfg.early_stop_patience);
    let mut best_params = params.to_vec();
    let mut report = TrainReport {
        epochs_run: 0,
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        stopped_early: false,
    };

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_schedule.rate(cfg.learning_rate, epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let loss = objective.batch_loss_grad(params, batch, &mut grad)?;
            if !loss.is_finite() {
                return Err(Error::Numerical {
                    context: "training loss",
                    epoch: Some(epoch + 1),
                });
            }
            epoch_loss += loss * batch.len() as f64;
            adam_step(params, &grad, &mut adam, lr).map_err(|_| Error::Numerical {
                context: "training gradient",
                epoch: Some(epoch + 1),
            })?;
        }
        let val = objective.validation_loss(params)?;
        if !val.is_finite() {
            return Err(Error::Numerical {
                context: "validation loss",
                epoch: Some(epoch + 1),
            });
        }
        report.train_loss.push(epoch_loss / n as f64);
        report.val_loss.push(val);
        report.epochs_run = epoch + 1;
        let obs = stopper.observe(val);
        if obs.is_best {
            best_params.copy_from_slice(params);
            report.best_epoch = epoch;
            report.best_val_loss = val;
        }
        if obs.stop {
            report.stopped_early = epoch + 1 < cfg.max_epochs;
            break;
        }
    }
    params.copy_from_slice(&best_params);
    Ok(report)
}
