//! Principal component analysis.
//!
//! Up to [`PcaConfig::exact_max_dim`] features the components come from an
//! eigendecomposition of the sample covariance; above it a randomized range
//! finder with power iterations is used.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaConfig {
    pub exact_max_dim: usize,
    pub oversample: usize,
    pub power_iterations: usize,
    pub seed: u64,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig {
            exact_max_dim: 4096,
            oversample: 10,
            power_iterations: 4,
            seed: 42,
        }
    }
}

/// Fitted projection: `transform(x) = components · (x − mean)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k × d`, orthonormal rows ordered by non-increasing variance.
    pub components: Matrix<f64>,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.rows()
    }

    pub fn transform_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dim("pca transform", self.input_dim(), x.len()));
        }
        Ok((0..self.output_dim())
            .map(|c| {
                self.components
                    .row(c)
                    .iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(w, (v, m))| w * (v - m))
                    .sum()
            })
            .collect())
    }

    pub fn inverse_transform_row(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.output_dim() {
            return Err(Error::dim("pca inverse", self.output_dim(), z.len()));
        }
        let mut out = self.mean.clone();
        for (c, &zc) in z.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.components.row(c)) {
                *o += zc * w;
            }
        }
        Ok(out)
    }
}

pub fn pca_fit(x: &Matrix<f64>, k: usize) -> Result<PcaModel> {
    pca_fit_with(x, k, &PcaConfig::default())
}

pub fn pca_fit_with(x: &Matrix<f64>, k: usize, cfg: &PcaConfig) -> Result<PcaModel> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 samples, got {n}")));
    }
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidArgument(format!("k = {k} must be in 1..={}", n.min(d))));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| x.row(i)[j] - mean[j]);

    let (vectors, variances) = if d <= cfg.exact_max_dim {
        exact_components(&centered)
    } else {
        randomized_components(&centered, k, cfg)
    };

    let scale = variances.first().copied().unwrap_or(0.0).max(0.0);
    let tol = scale * 1e-10 * d as f64 + f64::MIN_POSITIVE;
    let rank = variances.iter().take_while(|&&v| v > tol).count();
    if rank < k {
        return Err(Error::Rank { requested: k, rank });
    }

    let mut components = Matrix::zeros(k, d);
    for c in 0..k {
        let row = components.row_mut(c);
        row.copy_from_slice(&vectors[c]);
        // largest-magnitude entry positive
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: variances[..k].to_vec(),
    })
}

pub fn pca_transform(model: &PcaModel, x: &Matrix<f64>) -> Result<Matrix<f64>> {
    let mut out = Matrix::zeros(x.rows(), model.output_dim());
    for i in 0..x.rows() {
        let z = model.transform_row(x.row(i))?;
        out.row_mut(i).copy_from_slice(&z);
    }
    Ok(out)
}

/// Eigenvectors (as rows) and variances, sorted by decreasing variance.
fn exact_components(centered: &DMatrix<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = centered.nrows();
    let cov = (centered.transpose() * centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    sorted_pairs(eig.eigenvalues.as_slice(), |i| {
        eig.eigenvectors.column(i).iter().copied().collect()
    })
}

fn randomized_components(centered: &DMatrix<f64>, k: usize, cfg: &PcaConfig) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (n, d) = (centered.nrows(), centered.ncols());
    let l = (k + cfg.oversample).min(n).min(d);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let omega = DMatrix::from_fn(d, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = (centered * omega).qr().q();
    for _ in 0..cfg.power_iterations {
        let z = (centered.transpose() * &q).qr().q();
        q = (centered * z).qr().q();
    }
    // B = Qᵀ X (l × d); its Gram matrix B Bᵀ carries the top spectrum.
    let b = q.transpose() * centered;
    let gram = &b * b.transpose();
    let eig = SymmetricEigen::new(gram);
    sorted_pairs(eig.eigenvalues.as_slice(), |i| {
        // right singular vector v = Bᵀ u / σ
        let u = eig.eigenvectors.column(i);
        let mut v: Vec<f64> = (b.transpose() * u).iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    })
    .map_variance(|s| s / (n as f64 - 1.0))
}

trait MapVariance {
    fn map_variance(self, f: impl Fn(f64) -> f64) -> Self;
}

impl MapVariance for (Vec<Vec<f64>>, Vec<f64>) {
    fn map_variance(self, f: impl Fn(f64) -> f64) -> Self {
        (self.0, self.1.into_iter().map(f).collect())
    }
}

fn sorted_pairs(values: &[f64], vector: impl Fn(usize) -> Vec<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let vectors = order.iter().map(|&i| vector(i)).collect();
    let variances = order.iter().map(|&i| values[i].max(0.0)).collect();
    (vectors, variances)
}
