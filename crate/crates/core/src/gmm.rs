//! Gaussian-mixture density model used as a differentiable entropy estimator.
//!
//! Each component keeps a lower-triangular scale factor `L_k` stored packed
//! row by row. Off-diagonal entries are free; the diagonal is
//! `softplus(raw) + DIAG_FLOOR`, so every `Σ_k = L_k L_kᵀ` is positive
//! definite. All arithmetic is in nats.

use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::loss::logsumexp;
use crate::nn::train::{train, Objective, TrainConfig, TrainReport};
use crate::prelude::*;

pub const DEFAULT_COMPONENTS: usize = 6;
pub const DIAG_FLOOR: f64 = 1e-4;
/// A fitted diagonal scale below this is reported as degenerate.
pub const DEGENERATE_SCALE: f64 = 1e-3;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        libm::log1p(libm::exp(x))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Inverse of `softplus(raw) + DIAG_FLOOR`.
fn raw_for_scale(scale: f64) -> f64 {
    let s = (scale - DIAG_FLOOR).max(1e-12);
    if s > 30.0 {
        s
    } else {
        libm::log(libm::expm1(s))
    }
}

#[inline]
fn tri(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

/// Offsets of the three parameter blocks inside a flat buffer:
/// `[logits (K) | means (K·d) | packed scales (K·d(d+1)/2)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GmmLayout {
    pub k: usize,
    pub d: usize,
}

impl GmmLayout {
    pub fn new(k: usize, d: usize) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "GMM needs K > 0 and d > 0, got K = {k}, d = {d}"
            )));
        }
        Ok(GmmLayout { k, d })
    }

    pub fn tri_len(&self) -> usize {
        self.d * (self.d + 1) / 2
    }

    pub fn means_offset(&self) -> usize {
        self.k
    }

    pub fn scales_offset(&self) -> usize {
        self.k + self.k * self.d
    }

    pub fn num_params(&self) -> usize {
        self.scales_offset() + self.k * self.tri_len()
    }
}

/// Per-sample scratch space for density and gradient evaluation.
#[derive(Clone, Debug)]
pub struct GmmScratch {
    log_terms: Vec<f64>,
    /// whitened residuals `z_k = L_k⁻¹ (x − μ_k)`, one row per component
    z: Vec<f64>,
    w: Vec<f64>,
}

impl GmmScratch {
    pub fn new(layout: GmmLayout) -> Self {
        GmmScratch {
            log_terms: vec![0.0; layout.k],
            z: vec![0.0; layout.k * layout.d],
            w: vec![0.0; layout.d],
        }
    }
}

/// Borrowed view of a mixture over a flat parameter slice.
#[derive(Clone, Copy, Debug)]
pub struct GmmRef<'a> {
    pub layout: GmmLayout,
    pub params: &'a [f64],
}

impl<'a> GmmRef<'a> {
    pub fn new(layout: GmmLayout, params: &'a [f64]) -> Result<Self> {
        if params.len() != layout.num_params() {
            return Err(Error::dim("gmm parameters", layout.num_params(), params.len()));
        }
        Ok(GmmRef { layout, params })
    }

    fn logits(&self) -> &'a [f64] {
        &self.params[..self.layout.k]
    }

    fn mean(&self, c: usize) -> &'a [f64] {
        let off = self.layout.means_offset() + c * self.layout.d;
        &self.params[off..off + self.layout.d]
    }

    fn raw_scale(&self, c: usize) -> &'a [f64] {
        let t = self.layout.tri_len();
        let off = self.layout.scales_offset() + c * t;
        &self.params[off..off + t]
    }

    /// Fills `scratch.log_terms[k] = log π_k + log N(x; μ_k, Σ_k)` and the
    /// whitened residuals; returns the log density.
    fn evaluate(&self, x: &[f64], scratch: &mut GmmScratch) -> f64 {
        let GmmLayout { k, d } = self.layout;
        let log_norm = logsumexp(self.logits());
        let half_log_2pi = 0.5 * d as f64 * libm::log(2.0 * PI);
        for c in 0..k {
            let mu = self.mean(c);
            let raw = self.raw_scale(c);
            let z = &mut scratch.z[c * d..(c + 1) * d];
            let mut log_det = 0.0;
            let mut quad = 0.0;
            // forward substitution L z = x − μ
            for i in 0..d {
                let mut acc = x[i] - mu[i];
                let row = &raw[tri(i, 0)..tri(i, 0) + i];
                for (j, l) in row.iter().enumerate() {
                    acc -= l * z[j];
                }
                let diag = softplus(raw[tri(i, i)]) + DIAG_FLOOR;
                let zi = acc / diag;
                z[i] = zi;
                log_det += libm::log(diag);
                quad += zi * zi;
            }
            scratch.log_terms[c] = self.logits()[c] - log_norm - half_log_2pi - log_det - 0.5 * quad;
        }
        logsumexp(&scratch.log_terms)
    }

    pub fn log_density_with(&self, x: &[f64], scratch: &mut GmmScratch) -> Result<f64> {
        if x.len() != self.layout.d {
            return Err(Error::dim("gmm log_density", self.layout.d, x.len()));
        }
        let v = self.evaluate(x, scratch);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::numerical("gmm log_density"))
        }
    }

    /// Adds `scale · ∂(−log p(x))/∂θ` to `grad` and returns `−log p(x)`.
    pub fn nll_grad(&self, x: &[f64], scale: f64, grad: &mut [f64], scratch: &mut GmmScratch) -> f64 {
        let GmmLayout { k, d } = self.layout;
        let log_p = self.evaluate(x, scratch);
        let log_norm = logsumexp(self.logits());
        let t = self.layout.tri_len();
        for c in 0..k {
            let gamma = libm::exp(scratch.log_terms[c] - log_p);
            let pi = libm::exp(self.logits()[c] - log_norm);
            grad[c] += scale * (pi - gamma);
            if gamma == 0.0 {
                continue;
            }
            let raw = self.raw_scale(c);
            let z = &scratch.z[c * d..(c + 1) * d];
            // back substitution Lᵀ w = z
            let w = &mut scratch.w;
            for i in (0..d).rev() {
                let mut acc = z[i];
                for j in i + 1..d {
                    acc -= raw[tri(j, i)] * w[j];
                }
                w[i] = acc / (softplus(raw[tri(i, i)]) + DIAG_FLOOR);
            }
            let g = scale * gamma;
            let mean_off = self.layout.means_offset() + c * d;
            for i in 0..d {
                grad[mean_off + i] -= g * w[i];
            }
            let scale_off = self.layout.scales_offset() + c * t;
            for i in 0..d {
                for j in 0..i {
                    grad[scale_off + tri(i, j)] -= g * w[i] * z[j];
                }
                let r = raw[tri(i, i)];
                let diag = softplus(r) + DIAG_FLOOR;
                grad[scale_off + tri(i, i)] -= g * (w[i] * z[i] - 1.0 / diag) * sigmoid(r);
            }
        }
        -log_p
    }
}

/// Fitted mixture `p(x) = Σ_k π_k N(x; μ_k, L_k L_kᵀ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmEntropyModel {
    layout: GmmLayout,
    params: Vec<f64>,
}

impl GmmEntropyModel {
    pub fn from_params(layout: GmmLayout, params: Vec<f64>) -> Result<Self> {
        if params.len() != layout.num_params() {
            return Err(Error::dim("gmm parameters", layout.num_params(), params.len()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::numerical("gmm parameters"));
        }
        Ok(GmmEntropyModel { layout, params })
    }

    /// Builds a model from explicit parts. `scales` holds each component's
    /// lower triangle (row-major packed) with actual diagonal values, which
    /// must exceed [`DIAG_FLOOR`].
    pub fn from_parts(logits: &[f64], means: &[Vec<f64>], scales: &[Vec<f64>]) -> Result<Self> {
        let k = logits.len();
        let d = means.first().map(Vec::len).ok_or(Error::Empty("gmm components"))?;
        let layout = GmmLayout::new(k, d)?;
        if means.len() != k || scales.len() != k {
            return Err(Error::dim("gmm components", k, means.len().min(scales.len())));
        }
        let mut params = Vec::with_capacity(layout.num_params());
        params.extend_from_slice(logits);
        for m in means {
            if m.len() != d {
                return Err(Error::dim("gmm mean", d, m.len()));
            }
            params.extend_from_slice(m);
        }
        for s in scales {
            if s.len() != layout.tri_len() {
                return Err(Error::dim("gmm scale", layout.tri_len(), s.len()));
            }
            for i in 0..d {
                for j in 0..=i {
                    let v = s[tri(i, j)];
                    if i == j {
                        if v <= DIAG_FLOOR {
                            return Err(Error::Domain(format!("diagonal scale {v} must exceed {DIAG_FLOOR}")));
                        }
                        params.push(raw_for_scale(v));
                    } else {
                        params.push(v);
                    }
                }
            }
        }
        Self::from_params(layout, params)
    }

    /// Initial state: means at the given points, isotropic scale, uniform weights.
    pub fn init(means: &[Vec<f64>], scale: f64) -> Result<Self> {
        let d = means.first().map(Vec::len).ok_or(Error::Empty("gmm components"))?;
        let layout = GmmLayout::new(means.len(), d)?;
        let mut tri_scale = vec![0.0; layout.tri_len()];
        for i in 0..d {
            tri_scale[tri(i, i)] = scale.max(2.0 * DIAG_FLOOR);
        }
        Self::from_parts(&vec![0.0; means.len()], means, &vec![tri_scale; means.len()])
    }

    pub fn layout(&self) -> GmmLayout {
        self.layout
    }

    pub fn components(&self) -> usize {
        self.layout.k
    }

    pub fn dim(&self) -> usize {
        self.layout.d
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn view(&self) -> GmmRef<'_> {
        GmmRef {
            layout: self.layout,
            params: &self.params,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        let logits = &self.params[..self.layout.k];
        let lse = logsumexp(logits);
        logits.iter().map(|l| libm::exp(l - lse)).collect()
    }

    pub fn mean(&self, c: usize) -> &[f64] {
        self.view().mean(c)
    }

    /// Dense lower-triangular `L_c` (row-major `d × d`).
    pub fn scale_factor(&self, c: usize) -> Vec<f64> {
        let d = self.layout.d;
        let raw = self.view().raw_scale(c);
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..i {
                out[i * d + j] = raw[tri(i, j)];
            }
            out[i * d + i] = softplus(raw[tri(i, i)]) + DIAG_FLOOR;
        }
        out
    }

    /// Dense `Σ_c = L_c L_cᵀ`.
    pub fn covariance(&self, c: usize) -> Vec<f64> {
        let d = self.layout.d;
        let l = self.scale_factor(c);
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..d).map(|m| l[i * d + m] * l[j * d + m]).sum();
            }
        }
        out
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.view().log_density_with(x, &mut GmmScratch::new(self.layout))
    }

    /// Pointwise entropy `h(x) = −log p(x)`.
    pub fn pointwise_entropy(&self, x: &[f64]) -> Result<f64> {
        self.log_density(x).map(|v| -v)
    }

    /// `h(x)` for every row.
    pub fn pointwise_entropies(&self, x: &Matrix<f64>) -> Result<Vec<f64>> {
        let mut scratch = GmmScratch::new(self.layout);
        let view = self.view();
        (0..x.rows())
            .map(|i| view.log_density_with(x.row(i), &mut scratch).map(|v| -v))
            .collect()
    }

    pub fn mean_entropy(&self, x: &Matrix<f64>) -> Result<f64> {
        if x.rows() == 0 {
            return Err(Error::Empty("entropy samples"));
        }
        Ok(self.pointwise_entropies(x)?.iter().sum::<f64>() / x.rows() as f64)
    }

    /// Components whose smallest diagonal scale fell below [`DEGENERATE_SCALE`].
    pub fn degenerate_components(&self) -> Vec<usize> {
        let d = self.layout.d;
        (0..self.layout.k)
            .filter(|&c| {
                let raw = self.view().raw_scale(c);
                (0..d).any(|i| softplus(raw[tri(i, i)]) + DIAG_FLOOR < DEGENERATE_SCALE)
            })
            .collect()
    }
}

/// Training data of one mixture in a jointly fitted set.
#[derive(Clone, Copy, Debug)]
pub struct GmmData<'a> {
    pub train: &'a Matrix<f64>,
    pub val: &'a Matrix<f64>,
}

/// Sum of per-model mean NLLs over a shared minibatch schedule.
struct SummedNll<'a> {
    data: Vec<GmmData<'a>>,
    layouts: Vec<GmmLayout>,
    offsets: Vec<usize>,
    scratch: Vec<GmmScratch>,
}

impl SummedNll<'_> {
    fn slices<'p>(&self, params: &'p [f64], m: usize) -> GmmRef<'p> {
        let off = self.offsets[m];
        GmmRef {
            layout: self.layouts[m],
            params: &params[off..off + self.layouts[m].num_params()],
        }
    }
}

impl Objective<f64> for SummedNll<'_> {
    fn num_train(&self) -> usize {
        self.data[0].train.rows()
    }

    fn batch_loss_grad(&mut self, params: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for m in 0..self.data.len() {
            let view = self.slices(params, m);
            let off = self.offsets[m];
            let g = &mut grad[off..off + self.layouts[m].num_params()];
            let x = self.data[m].train;
            let scratch = &mut self.scratch[m];
            for &i in batch {
                total += scale * view.nll_grad(x.row(i), scale, g, scratch);
            }
        }
        Ok(total)
    }

    fn validation_loss(&mut self, params: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for m in 0..self.data.len() {
            let view = self.slices(params, m);
            let x = self.data[m].val;
            let scratch = &mut self.scratch[m];
            let mut sum = 0.0;
            for i in 0..x.rows() {
                sum -= view.evaluate(x.row(i), scratch);
            }
            total += sum / x.rows().max(1) as f64;
        }
        Ok(total)
    }
}

/// Chooses `k` distinct rows by D² sampling (each new centre drawn with
/// probability proportional to its squared distance from the chosen ones).
pub fn seeded_centres(x: &Matrix<f64>, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = x.rows();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    let first = rng.random_range(0..n);
    let mut centres = vec![x.row(first).to_vec()];
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = (0..n).map(|i| dist2(x.row(i), x.row(first))).collect();
    while centres.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            // all remaining rows coincide with a centre; take unused indices
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(pick);
        centres.push(x.row(pick).to_vec());
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist2(x.row(i), x.row(pick)));
        }
    }
    centres
}

fn mean_std(x: &Matrix<f64>) -> f64 {
    let (n, d) = (x.rows(), x.cols());
    let mut total = 0.0;
    for j in 0..d {
        let mean = (0..n).map(|i| x.row(i)[j]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x.row(i)[j] - mean).powi(2)).sum::<f64>() / n as f64;
        total += var.sqrt();
    }
    total / d as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmFit {
    pub models: Vec<GmmEntropyModel>,
    pub report: TrainReport,
}

/// Fits one mixture per dataset by minimizing the sum of their mean NLLs.
/// All datasets must have the same number of training rows, which share
/// one minibatch schedule.
pub fn fit_joint(data: &[GmmData<'_>], k: usize, cfg: &TrainConfig) -> Result<GmmFit> {
    let first = data.first().ok_or(Error::Empty("gmm datasets"))?;
    let n = first.train.rows();
    for d in data {
        if d.train.rows() != n {
            return Err(Error::dim("gmm joint training rows", n, d.train.rows()));
        }
        if d.val.rows() != first.val.rows() {
            return Err(Error::dim("gmm joint validation rows", first.val.rows(), d.val.rows()));
        }
        if d.val.cols() != d.train.cols() {
            return Err(Error::dim("gmm validation width", d.train.cols(), d.val.cols()));
        }
    }
    if n < k {
        return Err(Error::InvalidArgument(format!(
            "GMM with K = {k} needs at least {k} samples, got {n}"
        )));
    }
    if first.val.rows() == 0 {
        return Err(Error::Empty("gmm validation data"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layouts = Vec::new();
    let mut offsets = Vec::new();
    let mut params = Vec::new();
    for d in data {
        let centres = seeded_centres(d.train, k, &mut rng);
        let init = GmmEntropyModel::init(&centres, mean_std(d.train))?;
        layouts.push(init.layout);
        offsets.push(params.len());
        params.extend_from_slice(&init.params);
    }
    let mut objective = SummedNll {
        data: data.to_vec(),
        scratch: layouts.iter().map(|&l| GmmScratch::new(l)).collect(),
        layouts: layouts.clone(),
        offsets: offsets.clone(),
    };
    let report = train(&mut params, &mut objective, cfg)?;
    let mut models = Vec::with_capacity(data.len());
    for (m, &layout) in layouts.iter().enumerate() {
        let slice = params[offsets[m]..offsets[m] + layout.num_params()].to_vec();
        let model = GmmEntropyModel::from_params(layout, slice)?;
        let degenerate = model.degenerate_components();
        if !degenerate.is_empty() {
            log::warn!("mixture {m}: components {degenerate:?} collapsed to the diagonal floor ({DIAG_FLOOR})");
        }
        models.push(model);
    }
    Ok(GmmFit { models, report })
}

/// Fits a single mixture, holding out every tenth row (after a seeded
/// shuffle) for early stopping.
pub fn fit(samples: &Matrix<f64>, cfg: &TrainConfig, k: usize) -> Result<GmmFit> {
    let n = samples.rows();
    if n < k.max(2) {
        return Err(Error::InvalidArgument(format!(
            "GMM with K = {k} needs at least {} samples, got {n}",
            k.max(2)
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_6a11);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let n_val = (n / 10).max(1);
    let val = samples.gather(&order[..n_val]);
    let train_rows = samples.gather(&order[n_val..]);
    fit_joint(
        &[GmmData {
            train: &train_rows,
            val: &val,
        }],
        k,
        cfg,
    )
}
