//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Unknown or repeated keys are rejected. `RANKPROMPT_SEED` in the
//! environment overrides `seed`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::model::{Hyper, OptimizerKind, PipelineConfig};
use crate::sms::{CalibrationVariant, KernelKind, KernelSpec};

pub const SEED_ENV: &str = "RANKPROMPT_SEED";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub classes: usize,
    pub samples: usize,
    pub feature_dim: usize,
    pub class_sep: f64,
    pub noise_sigma: f64,
    pub imbalance_ratio: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub tau: f64,
    pub lambda_rank: f64,
    pub sms_enabled: bool,
    pub sms_variant: CalibrationVariant,
    pub sms_sigma: f64,
    pub sms_include_self: bool,
    /// Apply committed statistics when scoring held-out data.
    pub sms_at_inference: bool,
    pub normalize_embeddings: bool,
    pub ablation_seeds: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            classes: 5,
            samples: 2000,
            feature_dim: 16,
            class_sep: 1.0,
            noise_sigma: 0.2,
            imbalance_ratio: 1.0,
            embed_dim: 32,
            hidden_dim: 64,
            epochs: 50,
            batch_size: 64,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            tau: 1.0,
            lambda_rank: 1.0,
            sms_enabled: true,
            sms_variant: CalibrationVariant::Standard,
            // Excluding the self term makes the calibrated class mean chase its
            // neighbours every epoch and training diverges; see README.
            sms_sigma: 0.5,
            sms_include_self: true,
            sms_at_inference: true,
            normalize_embeddings: false,
            ablation_seeds: 5,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got {value:?}"))),
    }
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", n + 1), "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::config(key, "repeated key"));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Applies `RANKPROMPT_SEED` if set.
    pub fn with_env_overrides(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = parse(SEED_ENV, v.trim())?;
        }
        Ok(self)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "classes" => self.classes = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "class_sep" => self.class_sep = parse(key, value)?,
            "noise_sigma" => self.noise_sigma = parse(key, value)?,
            "imbalance_ratio" => self.imbalance_ratio = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "optimizer" => self.optimizer = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "lambda_rank" => self.lambda_rank = parse(key, value)?,
            "sms_enabled" => self.sms_enabled = parse_bool(key, value)?,
            "sms_variant" => self.sms_variant = parse(key, value)?,
            "sms_sigma" => self.sms_sigma = parse(key, value)?,
            "sms_include_self" => self.sms_include_self = parse_bool(key, value)?,
            "sms_at_inference" => self.sms_at_inference = parse_bool(key, value)?,
            "normalize_embeddings" => self.normalize_embeddings = parse_bool(key, value)?,
            "ablation_seeds" => self.ablation_seeds = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Checks every value against the invariants of the module it feeds.
    pub fn validate(&self) -> Result<()> {
        let wrap = |key: &'static str| move |e: Error| Error::config(key, e.to_string());
        self.dataset_spec().validate().map_err(wrap("dataset"))?;
        self.hyper().validate().map_err(wrap("model"))?;
        self.kernel().validate().map_err(wrap("sms_sigma"))?;
        self.pipeline().loss.validate().map_err(wrap("loss"))?;
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.ablation_seeds == 0 {
            return Err(Error::config("ablation_seeds", "must be >= 1"));
        }
        Ok(())
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            classes: self.classes,
            samples: self.samples,
            feature_dim: self.feature_dim,
            class_sep: self.class_sep,
            noise_sigma: self.noise_sigma,
            imbalance_ratio: self.imbalance_ratio,
            seed: self.seed,
        }
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            feature_dim: self.feature_dim,
            hidden_dim: self.hidden_dim,
            embed_dim: self.embed_dim,
            classes: self.classes,
        }
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec {
            kind: KernelKind::Gaussian,
            sigma: self.sms_sigma,
            include_self: self.sms_include_self,
            normalize: true,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            loss: LossConfig {
                tau: self.tau,
                lambda_rank: self.lambda_rank,
                main_weight: 1.0,
            },
            normalize_embeddings: self.normalize_embeddings,
            variant: self.sms_variant,
        }
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let variant = match self.sms_variant {
            CalibrationVariant::Standard => "standard",
            CalibrationVariant::Literal => "literal",
        };
        let optimizer = match self.optimizer {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        };
        let pairs: [(&str, String); 23] = [
            ("seed", self.seed.to_string()),
            ("classes", self.classes.to_string()),
            ("samples", self.samples.to_string()),
            ("feature_dim", self.feature_dim.to_string()),
            ("class_sep", self.class_sep.to_string()),
            ("noise_sigma", self.noise_sigma.to_string()),
            ("imbalance_ratio", self.imbalance_ratio.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("optimizer", optimizer.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("tau", self.tau.to_string()),
            ("lambda_rank", self.lambda_rank.to_string()),
            ("sms_enabled", self.sms_enabled.to_string()),
            ("sms_variant", variant.to_string()),
            ("sms_sigma", self.sms_sigma.to_string()),
            ("sms_include_self", self.sms_include_self.to_string()),
            ("sms_at_inference", self.sms_at_inference.to_string()),
            ("normalize_embeddings", self.normalize_embeddings.to_string()),
            ("ablation_seeds", self.ablation_seeds.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ];
        for (k, v) in pairs {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }
}
