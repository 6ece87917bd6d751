//! The three label classifiers `P(y | x_V)`, `P(y | x_T)`, `P(y | x_V, x_T)`
//! and the empirical class prior.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::dense::{init_he_into, DenseLayout, DenseNet, DenseRef, Workspace};
use crate::nn::loss::{log_softmax, softmax_cross_entropy};
use crate::nn::train::{train, Objective, TrainConfig, TrainReport};
use crate::prelude::*;

pub const HIDDEN_UNITS: usize = 512;
/// Floor applied to `log P(y)` for classes that never occur.
pub const LOG_PRIOR_FLOOR: f64 = -30.0;
const EVAL_CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Head {
    Visual,
    Text,
    Joint,
}

impl Head {
    pub const ALL: [Head; 3] = [Head::Visual, Head::Text, Head::Joint];

    pub fn index(self) -> usize {
        match self {
            Head::Visual => 0,
            Head::Text => 1,
            Head::Joint => 2,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Head::Visual => "V",
            Head::Text => "T",
            Head::Joint => "J",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPrior {
    pub probabilities: Vec<f64>,
}

impl ClassPrior {
    /// Relative class frequencies.
    pub fn from_labels(labels: &[usize], classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("labels"));
        }
        let mut counts = vec![0usize; classes];
        for &y in labels {
            if y >= classes {
                return Err(Error::InvalidArgument(format!("label {y} is not below C = {classes}")));
            }
            counts[y] += 1;
        }
        let n = labels.len() as f64;
        Ok(ClassPrior {
            probabilities: counts.into_iter().map(|c| c as f64 / n).collect(),
        })
    }

    pub fn classes(&self) -> usize {
        self.probabilities.len()
    }

    pub fn log_prob(&self, y: usize) -> f64 {
        match self.probabilities.get(y) {
            Some(&p) if p > 0.0 => libm::log(p).max(LOG_PRIOR_FLOOR),
            _ => LOG_PRIOR_FLOOR,
        }
    }
}

/// Inputs and labels of one split.
#[derive(Clone, Copy, Debug)]
pub struct HeadData<'a> {
    pub visual: &'a Matrix<f32>,
    pub text: &'a Matrix<f32>,
    pub labels: &'a [usize],
}

impl HeadData<'_> {
    fn check(&self, classes: usize) -> Result<()> {
        let n = self.labels.len();
        if self.visual.rows() != n {
            return Err(Error::dim("visual rows", n, self.visual.rows()));
        }
        if self.text.rows() != n {
            return Err(Error::dim("text rows", n, self.text.rows()));
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidArgument(format!("label {y} is not below C = {classes}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorSet {
    classes: usize,
    nets: [DenseNet<f32>; 3],
}

impl DiscriminatorSet {
    /// Architectures `d → h → h → C` for the visual, text and concatenated inputs.
    pub fn layouts(visual_dim: usize, text_dim: usize, classes: usize, hidden: usize) -> Result<[DenseLayout; 3]> {
        Ok([
            DenseLayout::mlp(visual_dim, &[hidden, hidden], classes)?,
            DenseLayout::mlp(text_dim, &[hidden, hidden], classes)?,
            DenseLayout::mlp(visual_dim + text_dim, &[hidden, hidden], classes)?,
        ])
    }

    pub fn from_nets(nets: [DenseNet<f32>; 3]) -> Result<Self> {
        let classes = nets[0].output_dim();
        for net in &nets {
            if net.output_dim() != classes {
                return Err(Error::dim("discriminator classes", classes, net.output_dim()));
            }
        }
        if nets[2].input_dim() != nets[0].input_dim() + nets[1].input_dim() {
            return Err(Error::dim(
                "joint discriminator input",
                nets[0].input_dim() + nets[1].input_dim(),
                nets[2].input_dim(),
            ));
        }
        Ok(DiscriminatorSet { classes, nets })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn net(&self, head: Head) -> &DenseNet<f32> {
        &self.nets[head.index()]
    }

    pub fn into_nets(self) -> [DenseNet<f32>; 3] {
        self.nets
    }

    /// Log-softmax of one head's logits.
    pub fn log_posterior(&self, head: Head, x: &[f32]) -> Result<Vec<f64>> {
        let logits = self.net(head).forward(x)?;
        let l: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
        let out = log_softmax(&l);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("log_posterior"));
        }
        Ok(out)
    }

    /// `log P(y_i | x_i)` under `head` for every row. For the joint head the
    /// input is the concatenation of `visual` and `text`.
    pub fn log_posterior_of_labels(&self, head: Head, data: &HeadData<'_>) -> Result<Vec<f64>> {
        data.check(self.classes)?;
        let net = self.net(head).view();
        let mut ws = Workspace::new();
        let mut buf = Vec::new();
        let mut out = Vec::with_capacity(data.labels.len());
        let mut row_buf = vec![0.0f64; self.classes];
        for start in (0..data.labels.len()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(data.labels.len());
            fill_inputs(head, data, start..end, &mut buf);
            net.forward_batch(&buf, end - start, &mut ws)?;
            for (row, &y) in ws.output().chunks_exact(self.classes).zip(&data.labels[start..end]) {
                for (d, &v) in row_buf.iter_mut().zip(row) {
                    *d = v as f64;
                }
                let lp = log_softmax(&row_buf)[y];
                if !lp.is_finite() {
                    return Err(Error::numerical("log_posterior"));
                }
                out.push(lp);
            }
        }
        Ok(out)
    }

    /// Mean cross-entropy of one head on a labelled split.
    pub fn mean_cross_entropy(&self, head: Head, data: &HeadData<'_>) -> Result<f64> {
        let lp = self.log_posterior_of_labels(head, data)?;
        if lp.is_empty() {
            return Err(Error::Empty("cross-entropy data"));
        }
        Ok(-lp.iter().sum::<f64>() / lp.len() as f64)
    }

    /// Fraction of rows whose arg-max class equals the label.
    pub fn accuracy(&self, head: Head, data: &HeadData<'_>) -> Result<f64> {
        data.check(self.classes)?;
        let net = self.net(head).view();
        let mut ws = Workspace::new();
        let mut buf = Vec::new();
        let mut hits = 0usize;
        for start in (0..data.labels.len()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(data.labels.len());
            fill_inputs(head, data, start..end, &mut buf);
            net.forward_batch(&buf, end - start, &mut ws)?;
            for (row, &y) in ws.output().chunks_exact(self.classes).zip(&data.labels[start..end]) {
                let best = (0..self.classes).fold(0, |b, c| if row[c] > row[b] { c } else { b });
                hits += usize::from(best == y);
            }
        }
        Ok(hits as f64 / data.labels.len().max(1) as f64)
    }
}

fn fill_inputs(head: Head, data: &HeadData<'_>, rows: core::ops::Range<usize>, buf: &mut Vec<f32>) {
    buf.clear();
    for i in rows {
        match head {
            Head::Visual => buf.extend_from_slice(data.visual.row(i)),
            Head::Text => buf.extend_from_slice(data.text.row(i)),
            Head::Joint => {
                buf.extend_from_slice(data.visual.row(i));
                buf.extend_from_slice(data.text.row(i));
            }
        }
    }
}

fn fill_batch(head: Head, data: &HeadData<'_>, batch: &[usize], buf: &mut Vec<f32>) {
    buf.clear();
    for &i in batch {
        match head {
            Head::Visual => buf.extend_from_slice(data.visual.row(i)),
            Head::Text => buf.extend_from_slice(data.text.row(i)),
            Head::Joint => {
                buf.extend_from_slice(data.visual.row(i));
                buf.extend_from_slice(data.text.row(i));
            }
        }
    }
}

/// Summed cross-entropy of the three heads over one shared minibatch.
struct JointCrossEntropy<'a, F> {
    layouts: &'a [DenseLayout; 3],
    offsets: [usize; 3],
    classes: usize,
    train: HeadData<'a>,
    val: HeadData<'a>,
    ws: Workspace<f32>,
    inputs: Vec<f32>,
    labels: Vec<usize>,
    dlogits: Vec<f32>,
    observer: F,
}

impl<F> JointCrossEntropy<'_, F> {
    fn head_params<'p>(&self, params: &'p [f32], h: usize) -> &'p [f32] {
        &params[self.offsets[h]..self.offsets[h] + self.layouts[h].num_params()]
    }
}

impl<F: FnMut(Head, &[usize])> Objective<f32> for JointCrossEntropy<'_, F> {
    fn num_train(&self) -> usize {
        self.train.labels.len()
    }

    fn batch_loss_grad(&mut self, params: &[f32], batch: &[usize], grad: &mut [f32]) -> Result<f64> {
        self.labels.clear();
        self.labels.extend(batch.iter().map(|&i| self.train.labels[i]));
        let mut total = 0.0;
        for head in Head::ALL {
            let h = head.index();
            (self.observer)(head, batch);
            fill_batch(head, &self.train, batch, &mut self.inputs);
            let net = DenseRef::new(&self.layouts[h], self.head_params(params, h))?;
            net.forward_batch(&self.inputs, batch.len(), &mut self.ws)?;
            self.dlogits.resize(batch.len() * self.classes, 0.0);
            total += softmax_cross_entropy(self.ws.output(), &self.labels, self.classes, Some(&mut self.dlogits));
            let (start, len) = (self.offsets[h], self.layouts[h].num_params());
            net.backward(&self.inputs, &mut self.ws, &self.dlogits, &mut grad[start..start + len])?;
        }
        Ok(total)
    }

    fn validation_loss(&mut self, params: &[f32]) -> Result<f64> {
        let n = self.val.labels.len();
        let mut total = 0.0;
        for head in Head::ALL {
            let h = head.index();
            let net = DenseRef::new(&self.layouts[h], self.head_params(params, h))?;
            let mut sum = 0.0;
            for start in (0..n).step_by(EVAL_CHUNK) {
                let end = (start + EVAL_CHUNK).min(n);
                fill_inputs(head, &self.val, start..end, &mut self.inputs);
                net.forward_batch(&self.inputs, end - start, &mut self.ws)?;
                sum += softmax_cross_entropy(self.ws.output(), &self.val.labels[start..end], self.classes, None)
                    * (end - start) as f64;
            }
            total += sum / n as f64;
        }
        Ok(total)
    }
}

/// Trains the three heads jointly on `train`, stopping early on the summed
/// cross-entropy over `val`.
pub fn train_set(
    train_data: &HeadData<'_>,
    val_data: &HeadData<'_>,
    classes: usize,
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<(DiscriminatorSet, TrainReport)> {
    train_set_observed(train_data, val_data, classes, hidden, cfg, |_, _| {})
}

/// As [`train_set`], calling `observer(head, batch)` each time a head
/// processes a minibatch.
pub fn train_set_observed(
    train_data: &HeadData<'_>,
    val_data: &HeadData<'_>,
    classes: usize,
    hidden: usize,
    cfg: &TrainConfig,
    observer: impl FnMut(Head, &[usize]),
) -> Result<(DiscriminatorSet, TrainReport)> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    train_data.check(classes)?;
    val_data.check(classes)?;
    if train_data.labels.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if val_data.labels.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let (dv, dt) = (train_data.visual.cols(), train_data.text.cols());
    if val_data.visual.cols() != dv || val_data.text.cols() != dt {
        return Err(Error::dim(
            "validation feature width",
            dv + dt,
            val_data.visual.cols() + val_data.text.cols(),
        ));
    }
    let layouts = DiscriminatorSet::layouts(dv, dt, classes, hidden)?;
    let mut offsets = [0usize; 3];
    let mut total = 0;
    for (o, l) in offsets.iter_mut().zip(&layouts) {
        *o = total;
        total += l.num_params();
    }
    let mut params = vec![0.0f32; total];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for h in 0..3 {
        init_he_into(
            &layouts[h],
            &mut params[offsets[h]..offsets[h] + layouts[h].num_params()],
            &mut rng,
        );
    }
    let mut objective = JointCrossEntropy {
        layouts: &layouts,
        offsets,
        classes,
        train: *train_data,
        val: *val_data,
        ws: Workspace::new(),
        inputs: Vec::new(),
        labels: Vec::new(),
        dlogits: Vec::new(),
        observer,
    };
    let report = train(&mut params, &mut objective, cfg)?;
    let nets = [0, 1, 2].map(|h| {
        DenseNet::from_params(
            layouts[h].clone(),
            params[offsets[h]..offsets[h] + layouts[h].num_params()].to_vec(),
        )
    });
    let [v, t, j] = nets;
    Ok((DiscriminatorSet::from_nets([v?, t?, j?])?, report))
}
