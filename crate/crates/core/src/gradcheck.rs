//! Central finite-difference checks of the hand-derived gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gmm::{GmmEntropyModel, GmmLayout, GmmRef, GmmScratch};
use crate::nn::dense::{init_he_into, DenseLayout, DenseRef, Workspace};
use crate::nn::loss::softmax_cross_entropy;
use crate::prelude::*;

pub const FD_STEP: f64 = 1e-4;
pub const REL_TOLERANCE: f64 = 1e-3;

/// Largest relative discrepancy between `analytic` and the central
/// difference of `f`, using `max(|a|, |n|, 1e-6)` as the scale.
pub fn max_relative_error(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], analytic: &[f64], step: f64) -> f64 {
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + step;
        let up = f(&p);
        p[i] = orig - step;
        let down = f(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub instances: usize,
    /// Worst relative error per instance.
    pub errors: Vec<f64>,
}

impl GradCheck {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.errors.iter().all(|&e| e <= tol)
    }
}

/// Mean softmax cross-entropy of a small random ReLU network against random
/// labels, differentiated through the dense backward pass.
pub fn check_classifier(seed: u64, instances: usize) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::with_capacity(instances);
    for _ in 0..instances {
        let input = rng.random_range(1..=4);
        let hidden = [rng.random_range(2..=6), rng.random_range(2..=6)];
        let classes = rng.random_range(2..=4);
        let rows = rng.random_range(1..=5);
        let layout = DenseLayout::mlp(input, &hidden, classes).expect("valid layout");
        let mut params = vec![0.0f64; layout.num_params()];
        init_he_into(&layout, &mut params, &mut rng);
        for p in params.iter_mut() {
            // non-zero biases keep ReLU kinks away from the probe points
            *p += rng.random_range(-0.1..0.1);
        }
        let x: Vec<f64> = (0..rows * input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..classes)).collect();

        let loss = |p: &[f64], grad: Option<&mut [f64]>| -> f64 {
            let net = DenseRef::new(&layout, p).expect("sized");
            let mut ws = Workspace::new();
            net.forward_batch(&x, rows, &mut ws).expect("sized");
            let logits = ws.output().to_vec();
            match grad {
                None => softmax_cross_entropy(&logits, &labels, classes, None),
                Some(g) => {
                    let mut dlogits = vec![0.0; logits.len()];
                    let l = softmax_cross_entropy(&logits, &labels, classes, Some(&mut dlogits));
                    net.backward(&x, &mut ws, &dlogits, g).expect("sized");
                    l
                }
            }
        };
        let mut analytic = vec![0.0; params.len()];
        loss(&params, Some(&mut analytic));
        errors.push(max_relative_error(|p| loss(p, None), &params, &analytic, FD_STEP));
    }
    GradCheck { instances, errors }
}

/// Mean mixture NLL over a few random points for random small mixtures.
pub fn check_mixture(seed: u64, instances: usize) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::with_capacity(instances);
    for _ in 0..instances {
        let k = rng.random_range(1..=3);
        let d = rng.random_range(1..=3);
        let layout = GmmLayout::new(k, d).expect("positive");
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let means: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let scales: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let mut s = Vec::new();
                for i in 0..d {
                    for _ in 0..i {
                        s.push(rng.random_range(-0.5..0.5));
                    }
                    s.push(rng.random_range(0.5..1.5));
                }
                s
            })
            .collect();
        let model = GmmEntropyModel::from_parts(&logits, &means, &scales).expect("valid parts");
        let points: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let scale = 1.0 / points.len() as f64;
        let nll = |p: &[f64], grad: Option<&mut [f64]>| -> f64 {
            let view = GmmRef::new(layout, p).expect("sized");
            let mut scratch = GmmScratch::new(layout);
            let mut sink = vec![0.0; p.len()];
            let g = grad.unwrap_or(&mut sink);
            points
                .iter()
                .map(|x| scale * view.nll_grad(x, scale, g, &mut scratch))
                .sum()
        };
        let mut analytic = vec![0.0; layout.num_params()];
        nll(model.params(), Some(&mut analytic));
        errors.push(max_relative_error(|p| nll(p, None), model.params(), &analytic, FD_STEP));
    }
    GradCheck { instances, errors }
}
