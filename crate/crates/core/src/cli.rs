//! Command-line front end. Every command writes into `--out`, refuses to
//! overwrite existing outputs without `--force`, and records a
//! `manifest.json` with SHA-256 digests of its inputs and outputs.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::backbone::checkpoint::{Checkpoint, CheckpointKind};
use crate::corpus::archive::{INDEX_FILE, SOURCE_FILE, SPLITS_FILE, TARGET_FILE};
use crate::corpus::{
    build_cross_domain, filter_k_core, load_archive, load_interactions, save_archive, split_cross_domain, DomainId,
};
use crate::cut::{
    oracle_from_checkpoint, run_target_phase, run_transfer_phase, target_model_from_checkpoint, CutModel,
    TrainingConfig,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_full, MaskMode, MetricsReport, DEFAULT_K};
use crate::experiment::{resolve_training, run_experiment, ExperimentConfig};
use crate::synthgen::{generate, SynthConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TABLE: &str = "metrics.txt";
pub const TARGET_CKPT: &str = "target.ckpt";
pub const CUT_CKPT: &str = "cut.ckpt";
pub const HISTORY_FILE: &str = "history.json";

#[derive(Debug, Parser)]
#[command(
    name = "cutrec",
    version,
    about = "Cross-domain recommendation with user transformation and contrastive similarity transfer"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON config file (synth, training or experiment config depending on the command).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// Train experiment seeds concurrently.
    #[arg(long, global = true)]
    pub parallel_seeds: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Index two interaction files, split them and write a dataset archive.
    Ingest {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Per-domain k-core filter.
        #[arg(long)]
        k_core: Option<usize>,
    },
    /// Generate a synthetic paired-domain dataset archive.
    Synth,
    /// TARGET phase: train the single-domain backbone and freeze the oracle.
    TrainTarget {
        /// Dataset archive directory.
        #[arg(long)]
        data: PathBuf,
    },
    /// TRANSFER phase: train the cross-domain model.
    TrainTransfer {
        #[arg(long)]
        data: PathBuf,
        /// TARGET-phase checkpoint (needed unless the contrastive term is off).
        #[arg(long)]
        target_checkpoint: Option<PathBuf>,
    },
    /// Test-set metrics of a TARGET or CUT checkpoint.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
    },
    /// Multi-seed, multi-variant experiment from an experiment config.
    Experiment,
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    config: serde_json::Value,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// Output directory plus the overwrite guard.
struct OutDir {
    dir: PathBuf,
    force: bool,
}

impl OutDir {
    fn new(global: &GlobalArgs) -> Result<Self> {
        let dir = global
            .out
            .clone()
            .ok_or_else(|| Error::InvalidArgument("--out is required".into()))?;
        Ok(OutDir {
            dir,
            force: global.force,
        })
    }

    /// Fails if any of `names` already exists (unless forced), then creates
    /// the directory.
    fn claim(&self, names: &[&str]) -> Result<()> {
        if !self.force {
            for n in names.iter().chain([&MANIFEST_FILE]) {
                let p = self.dir.join(n);
                if p.exists() {
                    return Err(Error::WouldOverwrite { path: p });
                }
            }
        }
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    fn manifest(
        &self,
        command: &str,
        config: serde_json::Value,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
    ) -> Result<()> {
        let m = Manifest {
            tool: "cutrec",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config,
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
        };
        self.write(MANIFEST_FILE, serde_json::to_string_pretty(&m)?.as_bytes())?;
        Ok(())
    }
}

fn read_config_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_json_object(path: &Path) -> Result<serde_json::Map<String, serde_json::Value>> {
    let text = read_config_text(path)?;
    match serde_json::from_str::<serde_json::Value>(&text) {
        Ok(serde_json::Value::Object(m)) => Ok(m),
        Ok(_) => Err(Error::Config {
            key: path.display().to_string(),
            message: "expected a JSON object".into(),
        }),
        Err(e) => Err(Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        }),
    }
}

/// Training config from `--config` (an optional `preset` key plus field
/// overrides) and `--seed`.
pub fn load_training_config(path: Option<&Path>, seed: Option<u64>) -> Result<TrainingConfig> {
    let mut overrides = match path {
        Some(p) => read_json_object(p)?,
        None => serde_json::Map::new(),
    };
    let preset = match overrides.remove("preset") {
        None => "amazon-like".to_string(),
        Some(serde_json::Value::String(s)) => s,
        Some(_) => {
            return Err(Error::Config {
                key: "preset".into(),
                message: "must be a string".into(),
            })
        }
    };
    let mut cfg = resolve_training(&TrainingConfig::preset(&preset)?, &overrides)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_metrics(out: &OutDir, report: &MetricsReport) -> Result<Vec<PathBuf>> {
    Ok(vec![
        out.write(METRICS_JSON, report.to_json().as_bytes())?,
        out.write(METRICS_TABLE, report.to_table().as_bytes())?,
    ])
}

fn archive_inputs(dir: &Path) -> Vec<PathBuf> {
    [SOURCE_FILE, TARGET_FILE, INDEX_FILE, SPLITS_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect()
}

const ARCHIVE_NAMES: [&str; 4] = [SOURCE_FILE, TARGET_FILE, INDEX_FILE, SPLITS_FILE];

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest { source, target, k_core } => {
            let out = OutDir::new(g)?;
            let mut s = load_interactions(source, DomainId::Source)?;
            let mut t = load_interactions(target, DomainId::Target)?;
            if let Some(k) = k_core {
                s = filter_k_core(&s, *k)?;
                t = filter_k_core(&t, *k)?;
            }
            let ds = build_cross_domain(&s, &t)?;
            let split = split_cross_domain(&ds, g.seed.unwrap_or(0))?;
            out.claim(&ARCHIVE_NAMES)?;
            let written = save_archive(&out.dir, &ds, &split)?;
            let p = ds.partition;
            println!(
                "users: {} target-only, {} overlap, {} source-only; items: {} source, {} target",
                p.target_only,
                p.overlap,
                p.source_only,
                ds.source.interactions.n_items(),
                ds.target.interactions.n_items()
            );
            out.manifest(
                "ingest",
                serde_json::json!({"k_core": k_core, "seed": g.seed.unwrap_or(0)}),
                &[source.clone(), target.clone()],
                &written,
            )
        }
        Command::Synth => {
            let mut cfg: SynthConfig = match &g.config {
                Some(p) => serde_json::from_str(&read_config_text(p)?).map_err(|e| Error::Config {
                    key: "synth".into(),
                    message: e.to_string(),
                })?,
                None => SynthConfig::default(),
            };
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let out = OutDir::new(g)?;
            let (s, t) = generate(&cfg)?;
            let ds = build_cross_domain(&s, &t)?;
            let split = split_cross_domain(&ds, cfg.seed)?;
            out.claim(&ARCHIVE_NAMES)?;
            let written = save_archive(&out.dir, &ds, &split)?;
            let inputs: Vec<PathBuf> = g.config.iter().cloned().collect();
            out.manifest("synth", serde_json::to_value(&cfg)?, &inputs, &written)
        }
        Command::TrainTarget { data } => {
            let cfg = load_training_config(g.config.as_deref(), g.seed)?;
            let out = OutDir::new(g)?;
            let (_, split) = load_archive(data)?;
            out.claim(&[TARGET_CKPT, HISTORY_FILE, METRICS_JSON, METRICS_TABLE])?;
            let phase = run_target_phase(&split.target, &cfg)?;
            let ckpt = out.path(TARGET_CKPT);
            phase.checkpoint.write(&ckpt)?;
            let hist = out.write(HISTORY_FILE, serde_json::to_string_pretty(&phase.history)?.as_bytes())?;
            let report = evaluate_full(&phase.model, &split.target, DEFAULT_K, MaskMode::Seen)?;
            print!("{}", report.to_table());
            let mut outputs = vec![ckpt, hist];
            outputs.extend(write_metrics(&out, &report)?);
            let mut inputs = archive_inputs(data);
            inputs.extend(g.config.iter().cloned());
            out.manifest("train-target", serde_json::to_value(&cfg)?, &inputs, &outputs)
        }
        Command::TrainTransfer {
            data,
            target_checkpoint,
        } => {
            let cfg = load_training_config(g.config.as_deref(), g.seed)?;
            let out = OutDir::new(g)?;
            let (ds, split) = load_archive(data)?;
            let phi1 = match target_checkpoint {
                Some(p) => Some(Checkpoint::read(p)?),
                None => None,
            };
            let needs_oracle = cfg.ablation.uses_contrastive();
            if (needs_oracle && !cfg.ablation.history_similarity || cfg.warm_start) && phi1.is_none() {
                return Err(Error::InvalidArgument(
                    "--target-checkpoint is required for this configuration".into(),
                ));
            }
            let oracle = match (&phi1, needs_oracle) {
                (_, false) => None,
                (_, true) if cfg.ablation.history_similarity => Some(
                    crate::similarity::SimilarityOracle::from_history(split.target.train.clone(), cfg.gamma)?,
                ),
                (Some(c), true) => Some(oracle_from_checkpoint(c, &split.target, &cfg)?),
                (None, true) => unreachable!("checked above"),
            };
            let warm = match &phi1 {
                Some(c) if cfg.warm_start => Some(target_model_from_checkpoint(c, &split.target)?),
                _ => None,
            };
            out.claim(&[CUT_CKPT, HISTORY_FILE, METRICS_JSON, METRICS_TABLE])?;
            let phase = run_transfer_phase(ds.partition, &split, &cfg, oracle.as_ref(), warm.as_ref())?;
            let ckpt = out.path(CUT_CKPT);
            phase.checkpoint(&cfg)?.write(&ckpt)?;
            let hist = out.write(HISTORY_FILE, serde_json::to_string_pretty(&phase.history)?.as_bytes())?;
            let report = evaluate_full(&phase.model, &split.target, DEFAULT_K, MaskMode::Seen)?;
            print!("{}", report.to_table());
            let mut outputs = vec![ckpt, hist];
            outputs.extend(write_metrics(&out, &report)?);
            let mut inputs = archive_inputs(data);
            inputs.extend(target_checkpoint.iter().cloned());
            inputs.extend(g.config.iter().cloned());
            out.manifest("train-transfer", serde_json::to_value(&cfg)?, &inputs, &outputs)
        }
        Command::Evaluate { data, checkpoint, k } => {
            let (_, split) = load_archive(data)?;
            let ckpt = Checkpoint::read(checkpoint)?;
            let report = match ckpt.header.kind {
                CheckpointKind::Target => {
                    let model = target_model_from_checkpoint(&ckpt, &split.target)?;
                    evaluate_full(&model, &split.target, *k, MaskMode::Seen)?
                }
                CheckpointKind::Cut => {
                    let model = CutModel::from_checkpoint(&ckpt, &split.source.train, &split.target.train)?;
                    evaluate_full(&model, &split.target, *k, MaskMode::Seen)?
                }
            };
            print!("{}", report.to_table());
            if g.out.is_some() {
                let out = OutDir::new(g)?;
                out.claim(&[METRICS_JSON, METRICS_TABLE])?;
                let outputs = write_metrics(&out, &report)?;
                let mut inputs = archive_inputs(data);
                inputs.push(checkpoint.clone());
                out.manifest("evaluate", serde_json::json!({"k": k}), &inputs, &outputs)?;
            }
            Ok(())
        }
        Command::Experiment => {
            let path = g
                .config
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("experiment needs --config".into()))?;
            let mut cfg = ExperimentConfig::from_json(&read_config_text(path)?)?;
            if let Some(s) = g.seed {
                cfg.seeds = vec![s];
            }
            let out = OutDir::new(g)?;
            out.claim(&[METRICS_JSON, METRICS_TABLE])?;
            let report = run_experiment(&cfg, g.parallel_seeds)?;
            let table = report.to_table();
            print!("{table}");
            let outputs = vec![
                out.write(METRICS_JSON, report.to_json()?.as_bytes())?,
                out.write(METRICS_TABLE, table.as_bytes())?,
            ];
            let mut inputs = vec![path.clone()];
            if let crate::experiment::DataSource::Files { source, target, .. } = &cfg.data {
                inputs.push(source.clone());
                inputs.push(target.clone());
            }
            if let crate::experiment::DataSource::Archive(dir) = &cfg.data {
                inputs.extend(archive_inputs(dir));
            }
            out.manifest("experiment", serde_json::to_value(&cfg)?, &inputs, &outputs)
        }
    }
}
