use migate_core::gmm::{fit, DEFAULT_COMPONENTS};
use migate_core::linalg::Matrix;
use migate_core::nn::TrainConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

fn normal_rows(n: usize, d: usize, sigma: f64, seed: u64) -> Matrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect();
    Matrix::from_vec(n, d, data).unwrap()
}

#[test]
fn standard_normal_entropy() {
    let x = normal_rows(50_000, 1, 1.0, 3);
    let fitted = fit(&x, &TrainConfig::entropy(), DEFAULT_COMPONENTS).unwrap();
    let h = fitted.models[0].mean_entropy(&x).unwrap();
    let target = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    println!("h = {h}, target {target}, epochs {}", fitted.report.epochs_run);
    assert!((h - target).abs() < 0.05, "{h}");
}

#[test]
fn near_degenerate_cloud() {
    let mut x = normal_rows(5_000, 2, 1e-3, 4);
    for v in x.as_mut_slice() {
        *v += 0.25;
    }
    let fitted = fit(&x, &TrainConfig::entropy(), DEFAULT_COMPONENTS).unwrap();
    let h = fitted.models[0].mean_entropy(&x).unwrap();
    let target = 2.0 * (0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + 1e-3f64.ln());
    println!("h = {h}, target {target}, epochs {}", fitted.report.epochs_run);
    assert!((h - target).abs() < 0.3, "{h}");
}

#[test]
fn two_separated_unit_gaussians() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let data: Vec<f64> = (0..20_000)
        .map(|i| normal.sample(&mut rng) + if i % 2 == 0 { -5.0 } else { 5.0 })
        .collect();
    let x = Matrix::from_vec(20_000, 1, data).unwrap();
    let fitted = fit(&x, &TrainConfig::entropy(), DEFAULT_COMPONENTS).unwrap();
    let h = fitted.models[0].mean_entropy(&x).unwrap();
    // quadrature of -∫ p log p for the equal-weight mixture
    let pdf = |t: f64| {
        let g = |m: f64| (-(t - m) * (t - m) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        0.5 * g(-5.0) + 0.5 * g(5.0)
    };
    let (a, b, steps) = (-15.0, 15.0, 60_000);
    let dx = (b - a) / steps as f64;
    let target: f64 = (0..steps)
        .map(|i| {
            let p = pdf(a + (i as f64 + 0.5) * dx);
            if p > 0.0 {
                -p * p.ln() * dx
            } else {
                0.0
            }
        })
        .sum();
    println!("h = {h}, target {target}, epochs {}", fitted.report.epochs_run);
    assert!((h - target).abs() < 0.1, "{h} vs {target}");
}
