//! The `dac` command line: `generate`, `train`, `clean`, `sweep`, `eval`.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dac_core::metrics::{self, AccuracyMode};
use dac_core::noise::{gen_blobs, NoiseKind, NoisyDataset};
use dac_core::pipeline::{self, EliminationRule};
use dac_core::seed;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::format::{self, Checkpoint};
use crate::report::{self, StatsWriter};

pub const RESOLVED_CONFIG: &str = "config.resolved";

#[derive(Debug, Parser)]
#[command(name = "dac", version, about = "Abstention-based training and label-noise cleaning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Configuration file with `section.key = value` lines.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Experiment seed (`run.seed`).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn tag(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    None,
    Uniform,
    Circular,
    Smudge,
    Degradation,
    Class,
}

impl Kind {
    fn key(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Uniform => "uniform",
            Self::Circular => "circular",
            Self::Smudge => "smudge",
            Self::Degradation => "degradation",
            Self::Class => "class",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a blob dataset, inject noise and write it with a JSON sidecar.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Which split to draw; each split uses its own derived seeds.
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        /// Dataset file to write; the sidecar goes to `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an abstaining classifier; writes stats.csv, best.ckpt, last.ckpt.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        val: Option<PathBuf>,
        /// Fixed alpha after warm-up (`inf` disables the abstention output).
        #[arg(long)]
        fixed_alpha: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train, eliminate flagged samples, retrain a plain classifier.
    Clean {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, value_parser = ["abstained", "misclassified"])]
        elimination: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fixed-alpha runs; one trajectory CSV per alpha plus summary.json.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        val: Option<PathBuf>,
        /// Comma-separated alphas.
        #[arg(long)]
        alphas: Option<String>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset; writes eval.json and risk_coverage.csv.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Number of evenly spaced risk-coverage thresholds on [0, 1].
        #[arg(long, default_value_t = 101)]
        thresholds: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(common: &Common, flags: &[(&str, Option<String>)]) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.set("run.seed", &s.to_string())?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    for spec in &common.set {
        cfg.apply_override(spec)?;
    }
    Ok(cfg)
}

fn path_arg(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<NoisyDataset, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    format::decode_dataset(&bytes).map_err(|source| CliError::Format {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    format::decode_checkpoint(&bytes).map_err(|source| CliError::Format {
        path: path.to_path_buf(),
        source,
    })
}

fn required(cfg: &ExperimentConfig, key: &str, flag: &str) -> Result<PathBuf, CliError> {
    cfg.path(key)
        .ok_or_else(|| CliError::Usage(format!("missing {flag} (or `{key}` in the configuration)")))
}

/// Creates the output directory and echoes the resolved configuration.
fn prepare_output(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    write(&dir.join(RESOLVED_CONFIG), cfg.render())?;
    Ok(dir)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate {
            common,
            split,
            kind,
            fraction,
            eta,
            out,
        } => {
            let cfg = resolve(
                &common,
                &[
                    ("noise.kind", kind.map(|k| k.key().to_string())),
                    ("noise.fraction", fraction.map(|v| v.to_string())),
                    ("noise.eta", eta.map(|v| v.to_string())),
                ],
            )?;
            generate(&cfg, split, &out)
        }
        Command::Train {
            common,
            train,
            val,
            fixed_alpha,
            out,
        } => {
            let cfg = resolve(
                &common,
                &[
                    ("data.train", path_arg(&train)),
                    ("data.val", path_arg(&val)),
                    ("train.fixed_alpha", fixed_alpha),
                    ("output.dir", path_arg(&out)),
                ],
            )?;
            train_cmd(&cfg)
        }
        Command::Clean {
            common,
            train,
            val,
            test,
            elimination,
            out,
        } => {
            let cfg = resolve(
                &common,
                &[
                    ("data.train", path_arg(&train)),
                    ("data.val", path_arg(&val)),
                    ("data.test", path_arg(&test)),
                    ("train.elimination", elimination),
                    ("output.dir", path_arg(&out)),
                ],
            )?;
            clean_cmd(&cfg)
        }
        Command::Sweep {
            common,
            train,
            val,
            alphas,
            threads,
            out,
        } => {
            let cfg = resolve(
                &common,
                &[
                    ("data.train", path_arg(&train)),
                    ("data.val", path_arg(&val)),
                    ("sweep.alphas", alphas),
                    ("sweep.threads", threads.map(|t| t.to_string())),
                    ("output.dir", path_arg(&out)),
                ],
            )?;
            sweep_cmd(&cfg)
        }
        Command::Eval {
            checkpoint,
            data,
            thresholds,
            out,
        } => eval_cmd(&checkpoint, &data, thresholds, &out),
    }
}

fn generate(cfg: &ExperimentConfig, split: Split, out: &Path) -> Result<(), CliError> {
    let run_seed = cfg.seed()?;
    let (k, d, n_per_class, separation) = cfg.blobs()?;
    let blob_seed = seed::derive(run_seed, split.tag());
    let noise_seed = seed::derive(run_seed, &format!("noise/{}", split.tag()));
    let spec = cfg.noise_spec(noise_seed)?;
    let clean = gen_blobs(k, d, n_per_class, separation, blob_seed)?;
    let ds = spec.apply(&clean)?;
    let (mut fraction, mut eta, mut magnitude, mut width, mut blend, mut class) = (None, None, None, None, None, None);
    match spec.kind {
        NoiseKind::None => {}
        NoiseKind::Uniform { fraction: f } => fraction = Some(f),
        NoiseKind::ClassDependentCircular { eta: e } => eta = Some(e),
        NoiseKind::Smudge {
            fraction: f,
            magnitude: m,
            width: w,
        } => {
            fraction = Some(f);
            magnitude = Some(m);
            width = Some(w);
        }
        NoiseKind::Degradation { fraction: f, blend: b } => {
            fraction = Some(f);
            blend = Some(b);
        }
        NoiseKind::ClassRandomization { class: c } => class = Some(c),
    }
    let sidecar = report::DatasetSidecar {
        schema_version: report::SCHEMA_VERSION,
        split: split.tag().to_string(),
        k,
        d,
        n: ds.len(),
        n_per_class,
        separation,
        run_seed,
        blob_seed,
        noise_kind: cfg.get("noise.kind").to_string(),
        noise_seed,
        fraction,
        eta,
        magnitude,
        width,
        blend,
        class,
        randomized: ds.flags().iter().filter(|f| f.randomized).count(),
        structured: ds.flags().iter().filter(|f| f.structured_feature).count(),
        description: ds.description().to_string(),
    };
    write(out, format::encode_dataset(&ds))?;
    let mut sidecar_path = out.as_os_str().to_owned();
    sidecar_path.push(".json");
    write(Path::new(&sidecar_path), report::to_json(&sidecar))?;
    println!("wrote {} samples to {}", ds.len(), out.display());
    Ok(())
}

fn write_checkpoint(path: &Path, snapshot: &pipeline::Snapshot) -> Result<(), CliError> {
    write(path, format::encode_checkpoint(&Checkpoint::from(snapshot)))
}

fn train_cmd(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let train = load_dataset(&required(cfg, "data.train", "--train")?)?;
    let val = load_dataset(&required(cfg, "data.val", "--val")?)?;
    let config = cfg.train_config()?;
    let dir = prepare_output(cfg)?;
    let csv_path = dir.join("stats.csv");
    let file = fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    let mut writer = StatsWriter::new(BufWriter::new(file)).map_err(|e| CliError::io(&csv_path, e))?;
    let mut write_error = None;
    let result = pipeline::train_dac_observed(&train, &val, &config, &mut |s, _| {
        if write_error.is_none() {
            write_error = writer.write(s).err();
        }
    });
    if let Some(e) = write_error {
        return Err(CliError::io(&csv_path, e));
    }
    let run = result?;
    write_checkpoint(&dir.join("best.ckpt"), &run.best)?;
    write_checkpoint(&dir.join("last.ckpt"), &run.last)?;
    let best = &run.stats[run.best.epoch];
    println!(
        "trained {} epochs; best epoch {} (val_acc {}, gamma {})",
        run.stats.len(),
        run.best.epoch,
        best.val_acc.map_or_else(|| "null".into(), |v| v.to_string()),
        best.gamma
    );
    Ok(())
}

fn clean_cmd(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let train = load_dataset(&required(cfg, "data.train", "--train")?)?;
    let val = load_dataset(&required(cfg, "data.val", "--val")?)?;
    let test = match cfg.path("data.test") {
        Some(p) => load_dataset(&p)?,
        None => val.clone(),
    };
    let config = cfg.train_config()?;
    let dir = prepare_output(cfg)?;
    let outcome = pipeline::clean_and_retrain(&train, &val, &test, &config, &config)?;
    let rule = match config.elimination {
        EliminationRule::Abstained => "abstained",
        EliminationRule::Misclassified => "misclassified",
    };
    write(&dir.join("dac_stats.csv"), report::stats_csv(&outcome.dac.stats))?;
    write(&dir.join("downstream_stats.csv"), report::stats_csv(&outcome.downstream.stats))?;
    write_checkpoint(&dir.join("dac_best.ckpt"), &outcome.dac.best)?;
    write_checkpoint(&dir.join("downstream.ckpt"), &outcome.downstream.last)?;
    let summary = report::CleanSummary::new(&outcome, train.len(), rule);
    write(&dir.join("report.json"), report::to_json(&summary))?;
    println!(
        "removed/residual {}; downstream accuracy {}",
        summary.removed_residual, summary.downstream_accuracy
    );
    Ok(())
}

fn sweep_cmd(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let alphas = cfg.sweep_alphas()?;
    let threads = cfg.sweep_threads()?.min(alphas.len());
    let train = load_dataset(&required(cfg, "data.train", "--train")?)?;
    let val = load_dataset(&required(cfg, "data.val", "--val")?)?;
    let config = cfg.train_config()?;
    let dir = prepare_output(cfg)?;

    let mut results: Vec<Option<Result<pipeline::SweepRun, dac_core::Error>>> = vec![None; alphas.len()];
    std::thread::scope(|scope| {
        let chunk = alphas.len().div_ceil(threads);
        for (alpha_chunk, slot_chunk) in alphas.chunks(chunk).zip(results.chunks_mut(chunk)) {
            let (train, val, config) = (&train, &val, &config);
            scope.spawn(move || {
                for (&alpha, slot) in alpha_chunk.iter().zip(slot_chunk) {
                    *slot = Some(pipeline::sweep_one(train, val, config, alpha));
                }
            });
        }
    });

    let mut entries = Vec::with_capacity(alphas.len());
    for (i, result) in results.into_iter().enumerate() {
        let run = result.ok_or_else(|| CliError::Usage("sweep worker did not finish".into()))??;
        let file = format!("sweep_{i:03}.csv");
        write(&dir.join(&file), report::sweep_csv(&run))?;
        entries.push(report::SweepEntry {
            alpha: run.alpha,
            file,
            terminal_gamma: run.gamma.last().copied(),
            terminal_bin: run.terminal.as_str().to_string(),
            saturated_at_epoch: run.saturated_at,
        });
    }
    for e in &entries {
        println!("alpha {}: {}", e.alpha, e.terminal_bin);
    }
    let summary = report::SweepSummary {
        schema_version: report::SCHEMA_VERSION,
        runs: entries,
    };
    write(&dir.join("summary.json"), report::to_json(&summary))
}

fn eval_cmd(checkpoint: &Path, data: &Path, thresholds: usize, out: &Path) -> Result<(), CliError> {
    if thresholds < 2 {
        return Err(CliError::Usage("--thresholds must be at least 2".into()));
    }
    let ckpt = load_checkpoint(checkpoint)?;
    let ds = load_dataset(data)?;
    let model = &ckpt.model;
    let pred = metrics::predict(model, &ds)?;
    let has_abstention = metrics::has_abstention(model, ds.k())?;
    let grid: Vec<f64> = (0..thresholds).map(|i| i as f64 / (thresholds - 1) as f64).collect();
    let curve = metrics::risk_coverage(&pred.class_probs, ds.labels(), &grid)?;
    let positives: Vec<bool> = ds.flags().iter().map(|f| f.structured_feature).collect();
    let pr = metrics::detection_pr(&pred.abstained, &positives);
    let summary = report::EvalSummary {
        schema_version: report::SCHEMA_VERSION,
        n: ds.len(),
        k: ds.k(),
        has_abstention,
        checkpoint_epoch: ckpt.epoch,
        abstention_rate: if ds.is_empty() {
            0.0
        } else {
            pred.abstained.iter().filter(|&&a| a).count() as f64 / ds.len() as f64
        },
        abstention_pr: report::PrSummary::from(&pr),
        accuracy_overall: metrics::accuracy_of(&pred, ds.labels(), AccuracyMode::Overall),
        accuracy_non_abstained: metrics::accuracy_of(&pred, ds.labels(), AccuracyMode::NonAbstainedOnly),
        accuracy_renormalized: metrics::accuracy_of(&pred, ds.labels(), AccuracyMode::Renormalized),
        clean_accuracy_overall: metrics::accuracy_of(&pred, ds.original_labels(), AccuracyMode::Overall),
        clean_accuracy_renormalized: metrics::accuracy_of(&pred, ds.original_labels(), AccuracyMode::Renormalized),
        risk_coverage_file: "risk_coverage.csv".into(),
    };
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write(&out.join("risk_coverage.csv"), report::risk_coverage_csv(&curve))?;
    write(&out.join("eval.json"), report::to_json(&summary))?;
    println!(
        "abstention rate {}; renormalized accuracy {}",
        summary.abstention_rate,
        summary.accuracy_renormalized.map_or_else(|| "null".into(), |v| v.to_string())
    );
    Ok(())
}
