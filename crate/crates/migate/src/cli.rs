//! Command-line front end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use migate_core::corrupt::{corrupt_sample_image, corrupt_sample_text, NgramCosine, NoiseKind, TextCorruption, TextOp};
use migate_core::gate::{run_gate, CaptionCache, CaptionProvider, GateMode};
use migate_core::metrics::{classify_errors, diagnosis_delta, stability_report, AccuracyCell, ResponseRecord};
use migate_core::pid::{estimate, exact_oracle, relative_change, AggregateInteractions, PointwiseInteraction};
use migate_core::synth::{generate, JitterMode, LogicGate, SyntheticCaptioner, SyntheticConfig, DEFAULT_JITTER};
use migate_core::table::{Split, TextManifestRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::save_estimator;
use crate::config::{RunConfig, Similarity};
use crate::error::{Error, Result};
use crate::export::{
    read_decomposition, write_aggregates, write_comparison, write_decomposition, write_oracle, write_relative_change,
    write_stability,
};
use crate::image_io::{read_png, write_png};
use crate::jsonl::{read_json, read_jsonl, write_json, write_jsonl};
use crate::mifs::{read_table_file, write_table_file};

#[derive(Debug, Parser)]
#[command(
    name = "migate",
    version,
    about = "Multimodal interaction estimation, caption gating and robustness scoring"
)]
pub struct Cli {
    /// JSON run configuration; flags given here take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; stage seeds are derived from it
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic logic-gate table and its exact decomposition.
    Synth(SynthArgs),
    /// Fit the estimator and write pointwise and aggregate interactions.
    Estimate(EstimateArgs),
    /// Select samples for captioning and write the augmented manifest.
    Gate(GateArgs),
    /// Write graded corruptions of images and texts with a ledger.
    Corrupt(CorruptArgs),
    /// Grade response logs and compute performance stability.
    Score(ScoreArgs),
    /// Compare baseline and augmented aggregate interactions.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// One of xor, copy, unique_v, unique_v_noise.
    #[arg(long, default_value = "xor")]
    pub gate: LogicGate,
    /// Number of samples
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Standard deviation of the embedding noise
    #[arg(long, default_value_t = DEFAULT_JITTER)]
    pub jitter: f64,
    /// Draw separate noise for the two modalities.
    #[arg(long)]
    pub independent_jitter: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Feature table (MIFS)
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Standardize features before fitting
    #[arg(long)]
    pub standardize: bool,
    /// Project each modality onto this many principal components
    #[arg(long)]
    pub pca_dim: Option<usize>,
    /// Skip writing model checkpoints.
    #[arg(long)]
    pub no_checkpoint: bool,
}

#[derive(Debug, Args)]
pub struct GateArgs {
    /// Feature table (MIFS)
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Text manifest JSONL
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Pointwise decomposition CSV written by estimate
    #[arg(long)]
    pub decomposition: Option<PathBuf>,
    /// Caption JSONL; otherwise captions come from the manifest.
    #[arg(long)]
    pub captions: Option<PathBuf>,
    /// Caption synthetic tables by decoding the nearest visual anchor.
    #[arg(long, conflicts_with = "captions")]
    pub synthetic_captions: bool,
    /// Fraction of the dataset to caption, in [0, 1]
    #[arg(long)]
    pub tau: Option<f64>,
    /// interaction_gated or uniform_tier.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    /// Directory of PNG images.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Text manifest JSONL.
    #[arg(long)]
    pub texts: Option<PathBuf>,
    /// Accept every text candidate instead of checking similarity.
    #[arg(long)]
    pub accept_all: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Response log JSONL to grade
    #[arg(long)]
    pub responses: Option<PathBuf>,
    /// Response log of the baseline model, for relative changes
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Clean and corrupted accuracies JSON, for stability
    #[arg(long)]
    pub accuracies: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Aggregates JSON of the baseline run
    #[arg(long)]
    pub baseline: PathBuf,
    /// Aggregates JSON of the augmented run
    #[arg(long)]
    pub augmented: PathBuf,
}

/// Loads the configuration file (if any) and applies global flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve_config(&cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Error::Config(e.to_string()))?;
    match cli.command {
        Command::Synth(a) => cmd_synth(&cfg, &a),
        Command::Estimate(a) => {
            if a.table.is_some() {
                cfg.data.table = a.table.clone();
            }
            cfg.estimator.standardize |= a.standardize;
            if a.pca_dim.is_some() {
                cfg.estimator.pca_dim = a.pca_dim;
            }
            cmd_estimate(&cfg, !a.no_checkpoint)
        }
        Command::Gate(a) => {
            override_path(&mut cfg.data.table, &a.table);
            override_path(&mut cfg.data.manifest, &a.manifest);
            override_path(&mut cfg.data.decomposition, &a.decomposition);
            override_path(&mut cfg.data.captions, &a.captions);
            if let Some(t) = a.tau {
                cfg.gate.tau = t;
            }
            if let Some(m) = &a.mode {
                cfg.gate.mode = serde_json::from_value(serde_json::Value::String(m.clone()))
                    .map_err(|_| Error::Config(format!("unknown gate mode {m:?}")))?;
            }
            cmd_gate(&cfg, a.synthetic_captions)
        }
        Command::Corrupt(a) => {
            override_path(&mut cfg.data.images, &a.images);
            override_path(&mut cfg.data.texts, &a.texts);
            if a.accept_all {
                cfg.corruption.similarity = Similarity::AcceptAll;
            }
            pool.install(|| cmd_corrupt(&cfg))
        }
        Command::Score(a) => {
            override_path(&mut cfg.data.responses, &a.responses);
            override_path(&mut cfg.data.baseline_responses, &a.baseline);
            override_path(&mut cfg.data.accuracies, &a.accuracies);
            cmd_score(&cfg)
        }
        Command::Report(a) => cmd_report(&cfg, &a),
    }
}

fn override_path(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    let p = path
        .as_deref()
        .ok_or_else(|| Error::Config(format!("no {what} given")))?;
    if !p.exists() {
        return Err(Error::Config(format!("{what} {} does not exist", p.display())));
    }
    Ok(p)
}

fn output_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

pub fn cmd_synth(cfg: &RunConfig, args: &SynthArgs) -> Result<()> {
    cfg.validate()?;
    if args.n < 100 {
        return Err(Error::Config(format!("synthetic tables need n >= 100, got {}", args.n)));
    }
    let synth = SyntheticConfig {
        gate: args.gate,
        n: args.n,
        jitter: args.jitter,
        seed: cfg.sub_seed("synth"),
        jitter_mode: if args.independent_jitter {
            JitterMode::Independent
        } else {
            JitterMode::Shared
        },
    };
    let data = generate(&synth).map_err(|e| Error::Config(e.to_string()))?;
    let out = output_dir(cfg)?;
    write_table_file(&data.table, out.join("table.mifs"))?;
    write_jsonl(out.join("manifest.jsonl"), &data.manifest)?;
    let oracle = exact_oracle(&args.gate.distribution());
    write_oracle(out.join("oracle.csv"), &oracle)?;
    write_aggregates(out.join("oracle_aggregates.json"), &oracle.aggregates)?;
    write_json(out.join("synth.json"), &synth)?;
    println!("{} samples of {} written to {}", args.n, args.gate, out.display());
    print_aggregates("oracle", &oracle.aggregates);
    Ok(())
}

fn print_aggregates(label: &str, a: &AggregateInteractions) {
    println!("{label}: R={:.6} U_V={:.6} U_T={:.6} S={:.6}", a.r, a.u_v, a.u_t, a.s);
}

#[derive(Serialize)]
struct TrainingSummary<'a> {
    entropy: &'a migate_core::nn::TrainReport,
    classifier: &'a migate_core::nn::TrainReport,
    estimator: &'a migate_core::pid::EstimatorConfig,
}

pub fn cmd_estimate(cfg: &RunConfig, checkpoint: bool) -> Result<()> {
    cfg.validate()?;
    let path = required(&cfg.data.table, "input table")?;
    let table = read_table_file(path)?;
    let est_cfg = cfg.seeded_estimator();
    let (fitted, samples, aggregates) = estimate(&table, &est_cfg)?;
    let out = output_dir(cfg)?;
    write_decomposition(out.join("decomposition.csv"), &samples)?;
    for split in Split::ALL {
        let part: Vec<_> = samples.iter().filter(|s| s.split == split).cloned().collect();
        if !part.is_empty() {
            write_decomposition(out.join(format!("decomposition_{split}.csv")), &part)?;
        }
    }
    for (name, agg) in &aggregates {
        let file = if name == "all" {
            "aggregates.json".to_string()
        } else {
            format!("aggregates_{name}.json")
        };
        write_aggregates(out.join(file), agg)?;
    }
    write_json(
        out.join("training.json"),
        &TrainingSummary {
            entropy: &fitted.entropy_report,
            classifier: &fitted.classifier_report,
            estimator: &est_cfg,
        },
    )?;
    if checkpoint {
        save_estimator(&fitted, out.join("checkpoints"))?;
    }
    for (name, agg) in &aggregates {
        print_aggregates(name, agg);
    }
    Ok(())
}

/// One line of a caption file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionLine {
    pub sample_id: String,
    #[serde(default)]
    pub caption: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
}

/// Serves captions computed ahead of time.
pub struct PrecomputedCaptions {
    id: String,
    captions: BTreeMap<String, std::result::Result<String, String>>,
}

impl PrecomputedCaptions {
    pub fn new(id: impl Into<String>, captions: BTreeMap<String, std::result::Result<String, String>>) -> Self {
        PrecomputedCaptions {
            id: id.into(),
            captions,
        }
    }

    pub fn from_lines(id: impl Into<String>, lines: Vec<CaptionLine>) -> Self {
        let captions = lines
            .into_iter()
            .map(|l| {
                let v = match (l.caption, l.error) {
                    (Some(c), _) => Ok(c),
                    (None, Some(e)) => Err(e),
                    (None, None) => Err("caption line has neither caption nor error".to_string()),
                };
                (l.sample_id, v)
            })
            .collect();
        Self::new(id, captions)
    }
}

impl CaptionProvider for PrecomputedCaptions {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn caption(&mut self, sample_id: &str, _visual: &[f32]) -> std::result::Result<String, String> {
        self.captions
            .get(sample_id)
            .cloned()
            .unwrap_or_else(|| Err(format!("no caption for {sample_id}")))
    }
}

pub fn cmd_gate(cfg: &RunConfig, synthetic: bool) -> Result<()> {
    cfg.validate()?;
    let table = read_table_file(required(&cfg.data.table, "input table")?)?;
    let manifest: Vec<TextManifestRecord> = read_jsonl(required(&cfg.data.manifest, "text manifest")?)?;
    let values: Option<Vec<PointwiseInteraction>> = match cfg.gate.mode {
        GateMode::InteractionGated => {
            let rows = read_decomposition(required(&cfg.data.decomposition, "decomposition")?)?;
            let by_id: BTreeMap<String, PointwiseInteraction> = rows.into_iter().collect();
            let ordered = table
                .records
                .iter()
                .map(|r| {
                    by_id.get(&r.sample_id).copied().ok_or_else(|| {
                        Error::Core(migate_core::Error::Schema(format!(
                            "sample {:?} has no decomposition row",
                            r.sample_id
                        )))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Some(ordered)
        }
        GateMode::UniformTier => None,
    };
    let mut provider: Box<dyn CaptionProvider> = if let Some(p) = &cfg.data.captions {
        let p = required(&Some(p.clone()), "caption file")?.to_path_buf();
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Box::new(PrecomputedCaptions::from_lines(format!("file:{name}"), read_jsonl(&p)?))
    } else if synthetic {
        Box::new(SyntheticCaptioner)
    } else {
        let captions = manifest
            .iter()
            .filter_map(|r| r.caption.clone().map(|c| (r.sample_id.clone(), Ok(c))))
            .collect();
        Box::new(PrecomputedCaptions::new("manifest", captions))
    };
    let mut cache = CaptionCache::new();
    let outcome = run_gate(
        &table,
        &manifest,
        values.as_deref(),
        &cfg.gate,
        provider.as_mut(),
        &mut cache,
    )?;
    let out = output_dir(cfg)?;
    write_jsonl(out.join("augmented.jsonl"), &outcome.records)?;
    write_json(out.join("gate_summary.json"), &outcome.summary)?;
    let s = &outcome.summary;
    println!(
        "k={} valid={} tau={} n={} failed={}",
        s.k,
        s.valid,
        s.tau,
        s.n,
        s.failed.len()
    );
    Ok(())
}

/// One line of the corruption ledger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub sample_id: String,
    pub kind: String,
    pub level: u8,
    pub attempts: usize,
    pub excluded: bool,
}

#[derive(Serialize)]
struct CorruptedText<'a> {
    sample_id: &'a str,
    text: &'a str,
}

pub fn cmd_corrupt(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.data.images.is_none() && cfg.data.texts.is_none() {
        return Err(Error::Config("nothing to corrupt: give --images and/or --texts".into()));
    }
    let out = output_dir(cfg)?;
    let seed = cfg.sub_seed("corruption");
    let c = &cfg.corruption;
    let mut ledger = Vec::new();

    if let Some(dir) = &cfg.data.images {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::Asset {
                path: dir.clone(),
                message: e.to_string(),
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        files.sort();
        let images = files
            .par_iter()
            .map(|p| Ok((stem(p), read_png(p)?)))
            .collect::<Result<Vec<_>>>()?;
        let cells: Vec<(NoiseKind, u8)> = c
            .image_kinds
            .iter()
            .flat_map(|&k| c.image_levels.iter().map(move |&l| (k, l)))
            .collect();
        for &(kind, level) in &cells {
            let d = out.join("images").join(kind.name()).join(level.to_string());
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        let entries = cells
            .par_iter()
            .flat_map_iter(|&(kind, level)| images.iter().map(move |(id, img)| (kind, level, id, img)))
            .map(|(kind, level, id, img)| {
                let noisy = corrupt_sample_image(img, id, kind, level, seed)?;
                let dest = out
                    .join("images")
                    .join(kind.name())
                    .join(level.to_string())
                    .join(format!("{id}.png"));
                write_png(dest, &noisy)?;
                Ok(LedgerEntry {
                    sample_id: id.clone(),
                    kind: kind.name().to_string(),
                    level,
                    attempts: 1,
                    excluded: false,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ledger.extend(entries);
    }

    if let Some(path) = &cfg.data.texts {
        let manifest: Vec<TextManifestRecord> = read_jsonl(path).map_err(|e| match e {
            Error::Io { path, source } => Error::Asset {
                path,
                message: source.to_string(),
            },
            other => other,
        })?;
        let d = out.join("texts");
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        for &op in &c.text_ops {
            for &level in &c.text_levels {
                let results = manifest
                    .par_iter()
                    .map(|r| corrupt_one(&r.text, &r.sample_id, op, level, seed, c.similarity).map(|t| (r, t)))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let mut accepted = Vec::new();
                for (r, t) in &results {
                    ledger.push(LedgerEntry {
                        sample_id: r.sample_id.clone(),
                        kind: op.name().to_string(),
                        level,
                        attempts: t.attempts(),
                        excluded: t.text().is_none(),
                    });
                    if let Some(text) = t.text() {
                        accepted.push(CorruptedText {
                            sample_id: &r.sample_id,
                            text,
                        });
                    }
                }
                write_jsonl(d.join(format!("{}_{level}.jsonl", op.name())), &accepted)?;
            }
        }
    }
    write_jsonl(out.join("ledger.jsonl"), &ledger)?;
    let excluded = ledger.iter().filter(|e| e.excluded).count();
    println!("{} corruptions written, {excluded} excluded", ledger.len() - excluded);
    Ok(())
}

fn corrupt_one(text: &str, id: &str, op: TextOp, level: u8, seed: u64, sim: Similarity) -> Result<TextCorruption> {
    let r = match sim {
        Similarity::NgramCosine => corrupt_sample_text(text, id, op, level, seed, &NgramCosine),
        Similarity::AcceptAll => corrupt_sample_text(text, id, op, level, seed, &|_: &str, _: &str| 1.0),
    };
    Ok(r?)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Input of the stability computation.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyInput {
    pub p_clean: f64,
    pub cells: Vec<AccuracyCell>,
}

pub fn cmd_score(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.data.responses.is_none() && cfg.data.accuracies.is_none() {
        return Err(Error::Config("give --responses and/or --accuracies".into()));
    }
    let out = output_dir(cfg)?;
    if let Some(p) = &cfg.data.responses {
        let log: Vec<ResponseRecord> = read_jsonl(required(&Some(p.clone()), "response log")?)?;
        let report = classify_errors(&log)?;
        write_json(out.join("diagnosis.json"), &report)?;
        println!(
            "LI={} VI={} Mixed={} accuracy={:.4} consistency={:.4}",
            report.li, report.vi, report.mixed, report.accuracy, report.consistency
        );
        if let Some(b) = &cfg.data.baseline_responses {
            let base_log: Vec<ResponseRecord> = read_jsonl(required(&Some(b.clone()), "baseline log")?)?;
            let base = classify_errors(&base_log)?;
            let delta = diagnosis_delta(&base, &report);
            write_json(out.join("comparison.json"), &delta)?;
            write_comparison(
                out.join("comparison.csv"),
                &cfg.metrics.model,
                &cfg.metrics.rate,
                &delta,
            )?;
        }
    }
    if let Some(p) = &cfg.data.accuracies {
        let input: AccuracyInput = read_json(required(&Some(p.clone()), "accuracy file")?)?;
        let report = stability_report(input.p_clean, &input.cells)?;
        write_json(out.join("stability.json"), &report)?;
        write_stability(out.join("stability.csv"), &report)?;
        for l in &report.levels {
            println!(
                "level {}: mean dP {:+.1}% std {:.1}%",
                l.level,
                100.0 * l.mean_delta_p,
                100.0 * l.std_delta_p
            );
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct InteractionReport<'a> {
    baseline: &'a AggregateInteractions,
    augmented: &'a AggregateInteractions,
    change_pct: migate_core::pid::RelativeChange,
}

pub fn cmd_report(cfg: &RunConfig, args: &ReportArgs) -> Result<()> {
    let before: AggregateInteractions = read_json(required(&Some(args.baseline.clone()), "baseline aggregates")?)?;
    let after: AggregateInteractions = read_json(required(&Some(args.augmented.clone()), "augmented aggregates")?)?;
    let change = relative_change(&before, &after);
    let out = output_dir(cfg)?;
    write_json(
        out.join("report.json"),
        &InteractionReport {
            baseline: &before,
            augmented: &after,
            change_pct: change,
        },
    )?;
    write_relative_change(out.join("report.csv"), &before, &after, &change)?;
    let pct = [change.r, change.u_v, change.u_t, change.s];
    for (i, name) in AggregateInteractions::NAMES.iter().enumerate() {
        let cell = pct[i].map_or_else(|| "n/a".to_string(), |p| format!("{p:+.1}%"));
        println!(
            "{name}: {:.6} -> {:.6} ({cell})",
            before.as_array()[i],
            after.as_array()[i]
        );
    }
    Ok(())
}
