//! Multi-seed, multi-variant experiments over one dataset source.

use std::path::PathBuf;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_cross_domain, filter_k_core, load_archive, load_interactions, split_cross_domain, subsample_target,
    CrossDomainDataset, CrossDomainSplit, DomainId,
};
use crate::cut::{run_target_phase, run_transfer_phase, Ablation, TargetPhase, TrainingConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate_full, MaskMode, MetricStat, MetricsReport, DEFAULT_K};
use crate::synthgen::{generate, SynthConfig};

/// Where interactions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Generated data; run seed `s` uses generator seed `synth.seed + s`.
    Synth(SynthConfig),
    /// Two interaction files, optionally k-core filtered per domain.
    Files {
        source: PathBuf,
        target: PathBuf,
        #[serde(default)]
        k_core: Option<usize>,
    },
    /// A directory written by `ingest`/`synth`; splits are reused as stored.
    Archive(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// The TARGET-phase backbone alone.
    TargetOnly,
    Cut,
    JointTraining,
    NoTransform,
    NoContrastive,
    HistorySimilarity,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::TargetOnly,
        Variant::Cut,
        Variant::JointTraining,
        Variant::NoTransform,
        Variant::NoContrastive,
        Variant::HistorySimilarity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::TargetOnly => "target_only",
            Variant::Cut => "cut",
            Variant::JointTraining => "joint_training",
            Variant::NoTransform => "no_transform",
            Variant::NoContrastive => "no_contrastive",
            Variant::HistorySimilarity => "history_similarity",
        }
    }

    /// Base config with this variant's ablation switches applied.
    pub fn configure(self, base: &TrainingConfig) -> TrainingConfig {
        let mut cfg = base.clone();
        cfg.ablation = Ablation::default();
        match self {
            Variant::TargetOnly | Variant::Cut => {}
            Variant::JointTraining => cfg.ablation.joint_training_baseline = true,
            Variant::NoTransform => cfg.ablation.no_transform = true,
            Variant::NoContrastive => cfg.ablation.no_contrastive = true,
            Variant::HistorySimilarity => cfg.ablation.history_similarity = true,
        }
        cfg
    }
}

fn default_k() -> usize {
    DEFAULT_K
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_variants() -> Vec<Variant> {
    vec![Variant::TargetOnly, Variant::Cut]
}
fn default_retain() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `amazon-like` (default) or `douban-like`.
    #[serde(default)]
    pub preset: Option<String>,
    pub data: DataSource,
    /// Field overrides applied on top of the preset.
    #[serde(default)]
    pub training: serde_json::Map<String, serde_json::Value>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    /// Fractions of target TRAIN kept (cold-start sweep).
    #[serde(default = "default_retain")]
    pub retain_fractions: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config {
            key: "experiment".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Preset merged with the overrides.
    pub fn training_config(&self) -> Result<TrainingConfig> {
        let base = TrainingConfig::preset(self.preset.as_deref().unwrap_or("amazon-like"))?;
        resolve_training(&base, &self.training)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: key.into(),
                message: message.into(),
            })
        };
        if self.k == 0 {
            return bad("k", "must be >= 1");
        }
        if self.seeds.is_empty() {
            return bad("seeds", "at least one seed required");
        }
        if self.variants.is_empty() {
            return bad("variants", "at least one variant required");
        }
        if self.retain_fractions.is_empty() || self.retain_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad("retain_fractions", "each fraction must lie in (0, 1]");
        }
        if let DataSource::Synth(s) = &self.data {
            s.validate()?;
        }
        self.training_config()?.validate()
    }
}

/// Applies JSON overrides to a config; unknown keys are rejected.
pub fn resolve_training(
    base: &TrainingConfig,
    overrides: &serde_json::Map<String, serde_json::Value>,
) -> Result<TrainingConfig> {
    let mut value = serde_json::to_value(base)?;
    let obj = value.as_object_mut().expect("config serializes to an object");
    for (k, v) in overrides {
        if !obj.contains_key(k) {
            return Err(Error::Config {
                key: format!("training.{k}"),
                message: "unknown training parameter".into(),
            });
        }
        obj.insert(k.clone(), v.clone());
    }
    let cfg: TrainingConfig = serde_json::from_value(value).map_err(|e| Error::Config {
        key: "training".into(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads or generates the dataset and split for one run seed.
pub fn prepare_data(source: &DataSource, seed: u64) -> Result<(CrossDomainDataset, CrossDomainSplit)> {
    match source {
        DataSource::Synth(cfg) => {
            let cfg = SynthConfig {
                seed: cfg.seed.wrapping_add(seed),
                ..cfg.clone()
            };
            let (s, t) = generate(&cfg)?;
            let ds = build_cross_domain(&s, &t)?;
            let split = split_cross_domain(&ds, seed)?;
            Ok((ds, split))
        }
        DataSource::Files { source, target, k_core } => {
            let mut s = load_interactions(source, DomainId::Source)?;
            let mut t = load_interactions(target, DomainId::Target)?;
            if let Some(k) = k_core {
                s = filter_k_core(&s, *k)?;
                t = filter_k_core(&t, *k)?;
            }
            let ds = build_cross_domain(&s, &t)?;
            let split = split_cross_domain(&ds, seed)?;
            Ok((ds, split))
        }
        DataSource::Archive(dir) => load_archive(dir),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: Variant,
    pub seed: u64,
    pub retain_fraction: f64,
    pub best_epoch: usize,
    pub best_valid_ndcg: f64,
    pub test: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub retain_fraction: f64,
    pub seeds: usize,
    /// Mean and population std over seeds of the per-seed means.
    pub recall: MetricStat,
    pub hr: MetricStat,
    pub ndcg: MetricStat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    #[serde(rename = "K")]
    pub k: usize,
    pub training: TrainingConfig,
    pub runs: Vec<RunResult>,
    pub summary: Vec<VariantSummary>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_table(&self) -> String {
        let k = self.k;
        let mut s = format!(
            "{:<20} {:>7} {:>6} {:>18} {:>18} {:>18}\n",
            "variant",
            "retain",
            "seeds",
            format!("Recall@{k}"),
            format!("HR@{k}"),
            format!("NDCG@{k}")
        );
        for v in &self.summary {
            let cell = |m: &MetricStat| format!("{:.4} ± {:.4}", m.mean, m.std);
            s.push_str(&format!(
                "{:<20} {:>7.3} {:>6} {:>18} {:>18} {:>18}\n",
                v.variant.name(),
                v.retain_fraction,
                v.seeds,
                cell(&v.recall),
                cell(&v.hr),
                cell(&v.ndcg)
            ));
        }
        s
    }

    pub fn summary_for(&self, variant: Variant, retain_fraction: f64) -> Option<&VariantSummary> {
        self.summary
            .iter()
            .find(|s| s.variant == variant && s.retain_fraction == retain_fraction)
    }

    /// Per-seed test NDCG of one variant, in seed order.
    pub fn ndcg_by_seed(&self, variant: Variant, retain_fraction: f64) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.variant == variant && r.retain_fraction == retain_fraction)
            .map(|r| r.test.ndcg.mean)
            .collect()
    }
}

/// Every variant for one (seed, retain fraction). The TARGET phase is run
/// once and shared: it is the target-only result and supplies the oracle.
fn run_cell(
    base: &TrainingConfig,
    variants: &[Variant],
    data: &(CrossDomainDataset, CrossDomainSplit),
    seed: u64,
    retain: f64,
    k: usize,
) -> Result<Vec<RunResult>> {
    let (ds, full_split) = data;
    let mut split = full_split.clone();
    split.target = subsample_target(&split.target, retain, seed)?;
    let seeded = TrainingConfig { seed, ..base.clone() };
    let needs_target = variants
        .iter()
        .any(|v| !matches!(v, Variant::JointTraining | Variant::HistorySimilarity))
        || base.warm_start;
    let target: Option<TargetPhase> = if needs_target {
        Some(run_target_phase(&split.target, &seeded)?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(variants.len());
    for &variant in variants {
        let cfg = variant.configure(&seeded);
        let (best_epoch, best_valid_ndcg, test) = match variant {
            Variant::TargetOnly => {
                let t = target.as_ref().expect("target phase ran");
                let m = evaluate_full(&t.model, &split.target, k, MaskMode::Seen)?;
                (t.history.best_epoch, t.history.best_valid_ndcg, m)
            }
            _ => {
                let history_oracle;
                let oracle = match variant {
                    Variant::HistorySimilarity => {
                        history_oracle =
                            crate::similarity::SimilarityOracle::from_history(split.target.train.clone(), cfg.gamma)?;
                        Some(&history_oracle)
                    }
                    Variant::JointTraining => None,
                    _ => target.as_ref().map(|t| &t.oracle),
                };
                let warm = target.as_ref().map(|t| &t.model);
                let run = run_transfer_phase(ds.partition, &split, &cfg, oracle, warm)?;
                let m = evaluate_full(&run.model, &split.target, k, MaskMode::Seen)?;
                (run.history.best_epoch, run.history.best_valid_ndcg, m)
            }
        };
        info!(
            "seed {seed} retain {retain} {}: test NDCG@{k} {:.4}",
            variant.name(),
            test.ndcg.mean
        );
        out.push(RunResult {
            variant,
            seed,
            retain_fraction: retain,
            best_epoch,
            best_valid_ndcg,
            test: MetricsReport {
                seed: Some(seed),
                ..test
            },
        });
    }
    Ok(out)
}

/// Runs the full grid. With `parallel_seeds` seeds train concurrently; the
/// report is identical either way.
pub fn run_experiment(cfg: &ExperimentConfig, parallel_seeds: bool) -> Result<ExperimentReport> {
    cfg.validate()?;
    let base = cfg.training_config()?;
    let per_seed = |seed: u64| -> Result<Vec<RunResult>> {
        let data = prepare_data(&cfg.data, seed)?;
        let mut runs = Vec::new();
        for &retain in &cfg.retain_fractions {
            runs.extend(run_cell(&base, &cfg.variants, &data, seed, retain, cfg.k)?);
        }
        Ok(runs)
    };
    let results: Vec<Result<Vec<RunResult>>> = if parallel_seeds {
        cfg.seeds.par_iter().map(|&s| per_seed(s)).collect()
    } else {
        cfg.seeds.iter().map(|&s| per_seed(s)).collect()
    };
    let mut runs = Vec::new();
    for r in results {
        runs.extend(r?);
    }
    let mut summary = Vec::new();
    for &retain in &cfg.retain_fractions {
        for &variant in &cfg.variants {
            let cell: Vec<&RunResult> = runs
                .iter()
                .filter(|r| r.variant == variant && r.retain_fraction == retain)
                .collect();
            let stat = |f: fn(&RunResult) -> f64| MetricStat::of(&cell.iter().map(|r| f(r)).collect::<Vec<_>>());
            summary.push(VariantSummary {
                variant,
                retain_fraction: retain,
                seeds: cell.len(),
                recall: stat(|r| r.test.recall.mean),
                hr: stat(|r| r.test.hr.mean),
                ndcg: stat(|r| r.test.ndcg.mean),
            });
        }
    }
    Ok(ExperimentReport {
        k: cfg.k,
        training: base,
        runs,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_merge_and_reject_unknown() {
        let cfg = ExperimentConfig::from_json(
            r#"{"preset": "douban-like", "data": {"synth": {"n_users": 40}}, "training": {"dim": 8, "tau": 0.2}}"#,
        )
        .unwrap();
        let t = cfg.training_config().unwrap();
        assert_eq!((t.dim, t.tau, t.lambda), (8, 0.2, 5e-5));
        assert_eq!(cfg.variants, default_variants());

        let err = ExperimentConfig::from_json(r#"{"data": {"synth": {}}, "training": {"tua": 0.2}}"#).unwrap_err();
        assert!(err.to_string().contains("training.tua"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"data": {"synth": {}}, "seed": 3}"#).unwrap_err();
        assert!(err.is_validation());
        let err = ExperimentConfig::from_json(r#"{"data": {"synth": {}}, "retain_fractions": [0.0]}"#).unwrap_err();
        assert!(err.to_string().contains("retain_fractions"));
    }

    #[test]
    fn variants_set_only_their_flag() {
        let base = TrainingConfig::default();
        assert_eq!(Variant::Cut.configure(&base).ablation, Ablation::default());
        assert!(Variant::JointTraining.configure(&base).ablation.joint_training_baseline);
        let nt = Variant::NoTransform.configure(&base);
        assert!(!nt.ablation.uses_transform() && nt.ablation.uses_contrastive());
        let nc = Variant::NoContrastive.configure(&base);
        assert!(nc.ablation.uses_transform() && !nc.ablation.uses_contrastive());
    }
}
