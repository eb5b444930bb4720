//! File-level commands behind the `rankprompt` binary.
//!
//! Each command is a pure function of its input files: the same config and
//! dataset bytes always produce the same output bytes.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{generate_synthetic, load_csv, Dataset, DatasetSpec, Split};
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::experiment::{ablate, train, AblationSummary, Checkpoint, Variant};

pub const DATASET_FILE: &str = "dataset.csv";
pub const DATASET_META_FILE: &str = "dataset.meta.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const HEATMAP_FILE: &str = "heatmap.csv";
pub const ABLATION_FILE: &str = "ablation.json";

/// Paths shared by every subcommand. Unset paths fall back to files in the
/// output directory.
#[derive(Clone, Debug, Default)]
pub struct Args {
    pub config: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub split: Option<Split>,
    pub out: Option<PathBuf>,
}

/// Sidecar written next to a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub spec: DatasetSpec,
    pub seed: u64,
    pub class_counts: Vec<usize>,
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

fn load_config(args: &Args) -> Result<RunConfig> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| Error::config("--config", "required for this command"))?;
    RunConfig::load(path)?.with_env_overrides()
}

fn out_dir(args: &Args, cfg: Option<&RunConfig>) -> PathBuf {
    match (&args.out, cfg) {
        (Some(out), _) => out.clone(),
        (None, Some(cfg)) => cfg.out_dir.clone(),
        (None, None) => PathBuf::from("."),
    }
}

/// Writes `dataset.csv` and `dataset.meta.json`; returns the CSV path.
pub fn cmd_generate(args: &Args) -> Result<PathBuf> {
    let cfg = load_config(args)?;
    let out = out_dir(args, Some(&cfg));
    let spec = cfg.dataset_spec();
    let ds = generate_synthetic(&spec)?;
    let csv = out.join(DATASET_FILE);
    write_file(&csv, ds.to_csv_string())?;
    let meta = DatasetMeta {
        spec,
        seed: spec.seed,
        class_counts: spec.class_counts()?,
    };
    write_json(&out.join(DATASET_META_FILE), &meta)?;
    Ok(csv)
}

/// Trains the full objective; writes `train_log.jsonl` and `checkpoint.json`.
pub fn cmd_train(args: &Args) -> Result<Checkpoint> {
    let cfg = load_config(args)?;
    let out = out_dir(args, Some(&cfg));
    let path = args.dataset.clone().unwrap_or_else(|| out.join(DATASET_FILE));
    let ds = load_csv(&path, cfg.classes)?;
    let variant = if cfg.sms_enabled {
        Variant::Full
    } else {
        Variant::WithoutSms
    };
    let run = train(&cfg, &ds, variant, cfg.seed)?;
    let mut log = Vec::new();
    for entry in &run.log {
        serde_json::to_writer(&mut log, entry)?;
        log.write_all(b"\n").expect("writing to a Vec cannot fail");
    }
    write_file(&out.join(TRAIN_LOG_FILE), log)?;
    write_json(&out.join(CHECKPOINT_FILE), &run.checkpoint)?;
    Ok(run.checkpoint)
}

/// Loads checkpoint and dataset for eval/heatmap. A config, when given,
/// overrides the inference temperature and whether SMS is applied.
fn inference_inputs(args: &Args) -> Result<(Checkpoint, Dataset, PathBuf)> {
    let cfg = args.config.as_ref().map(|_| load_config(args)).transpose()?;
    let out = out_dir(args, cfg.as_ref());
    let ckpt_path = args.checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT_FILE));
    let mut ckpt: Checkpoint = read_json(&ckpt_path)?;
    if let Some(cfg) = &cfg {
        ckpt.inference.tau = cfg.tau;
        ckpt.inference.sms_at_inference = cfg.sms_at_inference;
    }
    let ds_path = args.dataset.clone().unwrap_or_else(|| out.join(DATASET_FILE));
    let ds = load_csv(&ds_path, ckpt.hyper.classes)?;
    if ds.feature_dim() != ckpt.hyper.feature_dim {
        return Err(Error::config(
            "dataset",
            format!(
                "dataset has {} features, checkpoint expects {}",
                ds.feature_dim(),
                ckpt.hyper.feature_dim
            ),
        ));
    }
    Ok((ckpt, ds, out))
}

/// Scores a split and writes `metrics.json`.
pub fn cmd_eval(args: &Args) -> Result<MetricsReport> {
    let (ckpt, ds, out) = inference_inputs(args)?;
    let report = ckpt.evaluate(&ds, args.split.unwrap_or(Split::Test))?;
    write_json(&out.join(METRICS_FILE), &report)?;
    Ok(report)
}

/// Writes the class-mean similarity matrix as `heatmap.csv`.
pub fn cmd_heatmap(args: &Args) -> Result<PathBuf> {
    let (ckpt, ds, out) = inference_inputs(args)?;
    let heat = ckpt.heatmap(&ds, args.split.unwrap_or(Split::Test))?;
    let path = out.join(HEATMAP_FILE);
    write_file(&path, heat.to_csv_string())?;
    Ok(path)
}

/// Runs the four-variant ablation and writes `ablation.json`. Without
/// `--dataset` the dataset is generated from the config.
pub fn cmd_ablate(args: &Args) -> Result<AblationSummary> {
    let cfg = load_config(args)?;
    let out = out_dir(args, Some(&cfg));
    let ds = match &args.dataset {
        Some(path) => load_csv(path, cfg.classes)?,
        None => generate_synthetic(&cfg.dataset_spec())?,
    };
    let summary = ablate(&cfg, &ds)?;
    write_json(&out.join(ABLATION_FILE), &summary)?;
    Ok(summary)
}
