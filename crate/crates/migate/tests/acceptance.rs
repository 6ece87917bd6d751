//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Set `ACCEPTANCE_ONLY` to a substring of a
//! criterion name to run a subset.

use std::collections::BTreeSet;
use std::f64::consts::LN_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use migate::jsonl::write_jsonl;
use migate_core::corrupt::{
    corrupt_image, corrupt_sample_image, corrupt_sample_text, ImageBuffer, NgramCosine, NoiseKind, TextCorruption,
    TextOp,
};
use migate_core::discriminators::{train_set, HeadData};
use migate_core::gate::{run_gate, CaptionCache, CaptionProvider, GateConfig, GateMode};
use migate_core::gmm::{fit, DEFAULT_COMPONENTS};
use migate_core::gradcheck::{check_classifier, check_mixture, REL_TOLERANCE};
use migate_core::linalg::Matrix;
use migate_core::metrics::{delta_p, macro_average};
use migate_core::nn::train::{CLASSIFIER_MAX_EPOCHS, ENTROPY_MAX_EPOCHS};
use migate_core::nn::{train, Objective, TrainConfig};
use migate_core::pid::{
    estimate, exact_oracle, percent_change, AggregateInteractions, EstimatorConfig, PointwiseInteraction,
};
use migate_core::synth::{generate, LogicGate, SyntheticCaptioner, SyntheticConfig, SyntheticDataset};
use migate_core::table::{FeatureRecord, FeatureTable, Split, TextManifestRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

fn fmt_agg(a: &AggregateInteractions) -> String {
    format!("({:+.3}, {:+.3}, {:+.3}, {:+.3})", a.r, a.u_v, a.u_t, a.s)
}

fn fit_all(table: &FeatureTable, seed: u64) -> AggregateInteractions {
    let cfg = EstimatorConfig::default().with_seed(seed);
    let (_, _, agg) = estimate(table, &cfg).expect("estimator fits");
    agg["all"]
}

fn oracle_equivalence() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for gate in LogicGate::ALL {
        let start = Instant::now();
        let data = generate(&SyntheticConfig {
            gate,
            n: 50_000,
            ..Default::default()
        })
        .unwrap();
        let got = fit_all(&data.table, 42);
        let want = exact_oracle(&gate.distribution()).aggregates;
        let diff = got.max_abs_diff(&want);
        let secs = start.elapsed().as_secs_f64();
        let ok = diff <= 0.10 && secs <= 600.0;
        pass &= ok;
        parts.push(format!(
            "{gate} {} vs {} max|d|={diff:.3} {secs:.0}s",
            fmt_agg(&got),
            fmt_agg(&want)
        ));
    }
    Verdict::new(pass, parts.join("; "))
}

/// Captions the samples the gate picks and re-embeds their text.
fn gated(data: &SyntheticDataset, values: Option<&[PointwiseInteraction]>, cfg: &GateConfig) -> (FeatureTable, usize) {
    let outcome = run_gate(
        &data.table,
        &data.manifest,
        values,
        cfg,
        &mut SyntheticCaptioner,
        &mut CaptionCache::new(),
    )
    .unwrap();
    let texts: Vec<(String, String)> = outcome
        .records
        .iter()
        .map(|r| (r.sample_id.clone(), r.augmented_text.clone()))
        .collect();
    (data.reembed(&texts).unwrap(), outcome.summary.k)
}

fn transfer_direction() -> Verdict {
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 1..=5u64 {
        let data = generate(&SyntheticConfig {
            gate: LogicGate::UniqueV,
            n: 10_000,
            seed,
            ..Default::default()
        })
        .unwrap();
        let cfg = EstimatorConfig::default().with_seed(seed);
        let (_, samples, agg) = estimate(&data.table, &cfg).unwrap();
        let before = agg["all"];
        let values: Vec<PointwiseInteraction> = samples.iter().map(|s| s.interaction).collect();
        let (augmented, k) = gated(&data, Some(&values), &GateConfig::default());
        let after = fit_all(&augmented, seed);
        let ok = after.r > before.r && after.u_v < before.u_v;
        wins += ok as usize;
        parts.push(format!(
            "seed {seed} k={k} R {:.3}->{:.3} U_V {:.3}->{:.3}",
            before.r, after.r, before.u_v, after.u_v
        ));
    }
    Verdict::new(wins == 5, format!("{wins}/5; {}", parts.join("; ")))
}

fn synergy_disruption() -> Verdict {
    let oracle = exact_oracle(&LogicGate::Xor.captioned_distribution()).aggregates;
    let target = AggregateInteractions {
        r: 0.0,
        u_v: 0.0,
        u_t: LN_2,
        s: 0.0,
    };
    let oracle_ok = oracle.max_abs_diff(&target) < 1e-12;
    let data = generate(&SyntheticConfig {
        gate: LogicGate::Xor,
        n: 10_000,
        ..Default::default()
    })
    .unwrap();
    let before = fit_all(&data.table, 42);
    let forced = GateConfig {
        tau: 1.0,
        mode: GateMode::UniformTier,
        ..Default::default()
    };
    let (augmented, k) = gated(&data, None, &forced);
    let after = fit_all(&augmented, 42);
    let ok = oracle_ok
        && k == data.table.len()
        && after.u_t > before.u_t
        && after.s < before.s
        && (after.u_t - LN_2).abs() <= 0.10
        && after.s.abs() <= 0.10;
    Verdict::new(
        ok,
        format!(
            "oracle {}; estimate {} -> {} (targets U_T ln2, S 0)",
            fmt_agg(&oracle),
            fmt_agg(&before),
            fmt_agg(&after)
        ),
    )
}

struct Echo;

impl CaptionProvider for Echo {
    fn provider_id(&self) -> &str {
        "echo"
    }

    fn caption(&mut self, sample_id: &str, _visual: &[f32]) -> Result<String, String> {
        Ok(format!("caption of {sample_id}"))
    }
}

struct Fixture {
    table: FeatureTable,
    manifest: Vec<TextManifestRecord>,
    values: Vec<PointwiseInteraction>,
    valid: usize,
}

fn gate_fixture(rng: &mut ChaCha8Rng, index: usize) -> Fixture {
    let n = rng.random_range(1..=400usize);
    let mut table = FeatureTable::new(1, 1, 2);
    let mut manifest = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut valid = 0;
    for i in 0..n {
        let id = format!("fx{index}-{i}");
        table.records.push(FeatureRecord {
            sample_id: id.clone(),
            split: Split::Train,
            visual: vec![i as f32],
            text: vec![0.0],
            label: (i % 2) as u32,
        });
        manifest.push(TextManifestRecord {
            sample_id: id,
            text: format!("text {i}"),
            caption: None,
        });
        // small integers make ties common
        let mut draw = || rng.random_range(-2..=2) as f64 * 0.25;
        let v = PointwiseInteraction {
            r: draw(),
            u_v: draw(),
            u_t: draw(),
            s: draw(),
            ..Default::default()
        };
        if v.u_v >= v.r.max(v.u_t).max(v.s) {
            valid += 1;
        }
        values.push(v);
    }
    Fixture {
        table,
        manifest,
        values,
        valid,
    }
}

fn selected(f: &Fixture, tau: f64) -> (BTreeSet<String>, Vec<u8>, usize) {
    let cfg = GateConfig {
        tau,
        ..Default::default()
    };
    let out = run_gate(
        &f.table,
        &f.manifest,
        Some(&f.values),
        &cfg,
        &mut Echo,
        &mut CaptionCache::new(),
    )
    .unwrap();
    let set = out
        .records
        .iter()
        .filter(|r| r.selected)
        .map(|r| r.sample_id.clone())
        .collect();
    let mut bytes = Vec::new();
    for r in &out.records {
        serde_json::to_writer(&mut bytes, r).unwrap();
        bytes.push(b'\n');
    }
    (set, bytes, out.summary.k)
}

fn gate_mechanics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut count_ok, mut nest_ok, mut bytes_ok) = (0, 0, 0);
    for i in 0..1000 {
        let f = gate_fixture(&mut rng, i);
        let n = f.table.len();
        let m = rng.random_range(0..=1000usize);
        let tau = m as f64 / 1000.0;
        let (set, bytes, k) = selected(&f, tau);
        let expected = (m * n / 1000).min(f.valid);
        count_ok += (k == expected && set.len() == expected) as usize;

        let (quarter, _, _) = selected(&f, 0.25);
        let (half, _, _) = selected(&f, 0.5);
        let lo = rng.random_range(0..=1000usize);
        let hi = rng.random_range(lo..=1000usize);
        let (a, _, _) = selected(&f, lo as f64 / 1000.0);
        let (b, _, _) = selected(&f, hi as f64 / 1000.0);
        nest_ok += (quarter.is_subset(&half) && a.is_subset(&b)) as usize;

        let (_, again, _) = selected(&f, tau);
        bytes_ok += (bytes == again) as usize;
    }
    // files written by two runs are identical too
    let dir = tempfile::tempdir().unwrap();
    let f = gate_fixture(&mut ChaCha8Rng::seed_from_u64(7), 0);
    let write = |name: &str| {
        let out = run_gate(
            &f.table,
            &f.manifest,
            Some(&f.values),
            &GateConfig::default(),
            &mut Echo,
            &mut CaptionCache::new(),
        )
        .unwrap();
        let p = dir.path().join(name);
        write_jsonl(&p, &out.records).unwrap();
        std::fs::read(p).unwrap()
    };
    let files_ok = write("a.jsonl") == write("b.jsonl");
    Verdict::new(
        count_ok == 1000 && nest_ok == 1000 && bytes_ok == 1000 && files_ok,
        format!("count law {count_ok}/1000, nesting {nest_ok}/1000, identical reruns {bytes_ok}/1000, identical files {files_ok}"),
    )
}

fn reference_arithmetic() -> Verdict {
    let start = Instant::now();
    let change = percent_change(0.0553, 0.2319).unwrap();
    let macro_avg = macro_average(&[2.48, 1.06, 4.43]).unwrap();
    let dp = 100.0 * delta_p(28.97, 29.77).unwrap();
    let elapsed = start.elapsed();
    let ok = (change - 319.0).abs() <= 1.0
        && (macro_avg - 2.65).abs() <= 0.01
        && (dp + 2.7).abs() <= 0.05
        && elapsed < Duration::from_secs(1);
    Verdict::new(
        ok,
        format!("relative change {change:+.2}%, macro average {macro_avg:+.3}, delta P {dp:+.3}%"),
    )
}

fn corruption_protocol() -> Verdict {
    // fidelity loop
    let mut loop_ok = true;
    for op in TextOp::ALL {
        for level in 1..=5 {
            let calls = std::cell::Cell::new(0usize);
            let never = |_: &str, _: &str| {
                calls.set(calls.get() + 1);
                0.0
            };
            let r = corrupt_sample_text("the quick brown fox", "s", op, level, 1, &never).unwrap();
            loop_ok &= r == TextCorruption::Excluded { attempts: 100 } && calls.get() == 100;
            let late = std::cell::Cell::new(0usize);
            let last_chance = |_: &str, _: &str| {
                late.set(late.get() + 1);
                if late.get() == 100 {
                    1.0
                } else {
                    0.0
                }
            };
            let r = corrupt_sample_text("the quick brown fox", "s", op, level, 1, &last_chance).unwrap();
            loop_ok &= r.attempts() == 100 && r.text().is_some();
        }
    }

    // impulse fraction
    let grey = ImageBuffer::filled(100, 100, 3, 128);
    let n = grey.pixels() as f64;
    let mut impulse_ok = 0;
    for level in 1..=10u8 {
        let p = NoiseKind::Impulse.severity(level).unwrap();
        for seed in 1..=3u64 {
            let changed = corrupt_image(&grey, NoiseKind::Impulse, level, seed)
                .unwrap()
                .changed_pixels(&grey) as f64;
            impulse_ok += ((changed - n * p).abs() <= 3.0 * (n * p * (1.0 - p)).sqrt()) as usize;
        }
    }

    // monotone distortion
    let data = (0..64 * 64 * 3).map(|i| (40 + (i * 13) % 170) as u8).collect();
    let img = ImageBuffer::new(64, 64, 3, data).unwrap();
    let monotone = NoiseKind::ALL.iter().all(|&kind| {
        let mad: Vec<f64> = (1..=10u8)
            .map(|l| corrupt_image(&img, kind, l, 5).unwrap().mean_abs_diff(&img))
            .collect();
        mad.windows(2).all(|w| w[1] > w[0])
    });

    // determinism: reruns and parallel execution
    let ids: Vec<String> = (0..40).map(|i| format!("sample-{i}")).collect();
    let small = ImageBuffer::filled(12, 12, 3, 77);
    let cell = |id: &String| {
        let images: Vec<ImageBuffer> = NoiseKind::ALL
            .iter()
            .flat_map(|&k| (1..=5u8).map(move |l| (k, l)))
            .map(|(k, l)| corrupt_sample_image(&small, id, k, l, 9).unwrap())
            .collect();
        let texts: Vec<TextCorruption> = TextOp::ALL
            .iter()
            .flat_map(|&op| (1..=5u8).map(move |l| (op, l)))
            .map(|(op, l)| corrupt_sample_text("a person riding a horse", id, op, l, 9, &NgramCosine).unwrap())
            .collect();
        (images, texts)
    };
    let first: Vec<_> = ids.iter().map(cell).collect();
    let second: Vec<_> = ids.iter().map(cell).collect();
    let parallel: Vec<_> = ids.par_iter().map(cell).collect();
    let deterministic = first == second && first == parallel;

    Verdict::new(
        loop_ok && impulse_ok == 30 && monotone && deterministic,
        format!(
            "exclusion after 100 attempts {loop_ok}, impulse within 3 sigma {impulse_ok}/30, monotone distortion {monotone}, deterministic {deterministic}"
        ),
    )
}

struct Scripted {
    losses: Vec<f64>,
    epoch: usize,
}

impl Objective<f64> for Scripted {
    fn num_train(&self) -> usize {
        4
    }

    fn batch_loss_grad(&mut self, params: &[f64], _batch: &[usize], grad: &mut [f64]) -> migate_core::Result<f64> {
        grad[0] += params[0];
        Ok(0.5 * params[0] * params[0])
    }

    fn validation_loss(&mut self, _params: &[f64]) -> migate_core::Result<f64> {
        let l = self.losses[self.epoch.min(self.losses.len() - 1)];
        self.epoch += 1;
        Ok(l)
    }
}

fn epochs(losses: Vec<f64>, cfg: &TrainConfig) -> (usize, bool) {
    let r = train(&mut [1.0f64], &mut Scripted { losses, epoch: 0 }, cfg).unwrap();
    (r.epochs_run, r.stopped_early)
}

fn training_recipe() -> Verdict {
    let c = TrainConfig::classifier();
    let e = TrainConfig::entropy();
    let constants = c.early_stop_min_delta == 1e-4
        && c.early_stop_patience == 5
        && c.max_epochs == 30
        && e.max_epochs == 80
        && CLASSIFIER_MAX_EPOCHS == 30
        && ENTROPY_MAX_EPOCHS == 80
        && c.seed == 42;
    let flat = epochs(vec![1.0; 200], &c);
    let sub_delta = epochs((0..200).map(|i| 1.0 - 1.5e-5 * i as f64).collect(), &c);
    let improving: Vec<f64> = (0..200).map(|i| 1.0 - 1e-3 * i as f64).collect();
    let capped_c = epochs(improving.clone(), &c);
    let capped_e = epochs(improving, &e);
    let schedule = flat == (6, true) && sub_delta == (6, true) && capped_c == (30, false) && capped_e == (80, false);

    let data = generate(&SyntheticConfig {
        gate: LogicGate::UniqueVNoise,
        n: 2000,
        ..Default::default()
    })
    .unwrap();
    let cfg = EstimatorConfig::default();
    let (fa, sa, _) = estimate(&data.table, &cfg).unwrap();
    let (fb, sb, _) = estimate(&data.table, &cfg).unwrap();
    let bits = |s: &[migate_core::pid::SampleInteraction]| -> Vec<u64> {
        s.iter()
            .flat_map(|x| [x.interaction.r, x.interaction.u_v, x.interaction.u_t, x.interaction.s])
            .map(f64::to_bits)
            .collect()
    };
    let reproducible = bits(&sa) == bits(&sb) && fa.entropy == fb.entropy && fa.discriminators == fb.discriminators;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v = Matrix::from_vec(300, 2, (0..600).map(|_| rng.random::<f32>()).collect()).unwrap();
    let t = Matrix::from_vec(300, 2, (0..600).map(|_| rng.random::<f32>()).collect()).unwrap();
    let y: Vec<usize> = (0..300).map(|i| i % 2).collect();
    let heads = HeadData {
        visual: &v,
        text: &t,
        labels: &y,
    };
    let (a, ra) = train_set(&heads, &heads, 2, 16, &c).unwrap();
    let (b, rb) = train_set(&heads, &heads, 2, 16, &c).unwrap();
    let classifiers = a == b && ra == rb && ra.epochs_run <= 30;

    Verdict::new(
        constants && schedule && reproducible && classifiers,
        format!(
            "constants {constants}; flat loss stops after {} epochs, sub-threshold gains after {}, caps {}/{}; seed-42 bit-reproducible estimator {reproducible}, classifiers {classifiers}",
            flat.0, sub_delta.0, capped_c.0, capped_e.0
        ),
    )
}

fn numerical_hygiene() -> Verdict {
    let clf = check_classifier(42, 20);
    let mix = check_mixture(42, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<f64> = (0..50_000).map(|_| standard_normal(&mut rng)).collect();
    let x = Matrix::from_vec(50_000, 1, data).unwrap();
    let fitted = fit(&x, &TrainConfig::entropy(), DEFAULT_COMPONENTS).unwrap();
    let h = fitted.models[0].mean_entropy(&x).unwrap();
    let analytic = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    let ok = clf.passes(REL_TOLERANCE)
        && mix.passes(REL_TOLERANCE)
        && clf.instances == 20
        && mix.instances == 20
        && (h - analytic).abs() <= 0.05;
    Verdict::new(
        ok,
        format!(
            "max relative gradient error classifier {:.2e}, mixture {:.2e} over 20 instances each; standard normal entropy {h:.4} vs {analytic:.4}",
            clf.max_error(),
            mix.max_error()
        ),
    )
}

/// Box-Muller draw.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn main() -> ExitCode {
    let only = std::env::var("ACCEPTANCE_ONLY").ok();
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("reference-arithmetic", reference_arithmetic),
        ("numerical-hygiene", numerical_hygiene),
        ("training-recipe", training_recipe),
        ("gate-mechanics", gate_mechanics),
        ("corruption-protocol", corruption_protocol),
        ("synergy-disruption", synergy_disruption),
        ("transfer-direction", transfer_direction),
        ("oracle-equivalence", oracle_equivalence),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        if only.as_deref().is_some_and(|o| !name.contains(o)) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::new(false, format!("panicked: {msg}"))
        });
        let tag = if verdict.pass { "PASS" } else { "FAIL" };
        failures += (!verdict.pass) as usize;
        println!(
            "{tag} {name} [{:.1}s] {}",
            start.elapsed().as_secs_f64(),
            verdict.detail
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
