//! Training, inference and ablation runs, independent of the filesystem.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{batch_iter, Dataset, Split};
use crate::error::{Error, Result};
use crate::eval::{class_mean_similarity, evaluate, predictions, ClassMeanSimilarity, MetricsReport};
use crate::model::{
    model_backward, optimizer_step, raw_similarity, Hyper, ModelParams, OptimizerState, PipelineConfig,
};
use crate::numeric::{Matrix, SimilarityMatrix};
use crate::sms::{calibrate_or_identity, CalibrationVariant, ClassStats, CommittedStats};

/// Settings needed to score new data with a trained model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceSettings {
    pub tau: f64,
    pub normalize_embeddings: bool,
    pub sms_variant: CalibrationVariant,
    pub sms_at_inference: bool,
}

/// Everything needed to resume training or run inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub hyper: Hyper,
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    /// Number of completed epochs.
    pub epoch: usize,
    /// Statistics committed at the end of the last epoch, if any.
    pub sms: Option<CommittedStats>,
    pub inference: InferenceSettings,
}

impl Checkpoint {
    pub fn initial(cfg: &RunConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(cfg.hyper(), seed)?;
        let optimizer = OptimizerState::new(cfg.optimizer, cfg.learning_rate, params.num_params())?;
        Ok(Self {
            hyper: cfg.hyper(),
            params,
            optimizer,
            epoch: 0,
            sms: None,
            inference: InferenceSettings {
                tau: cfg.tau,
                normalize_embeddings: cfg.normalize_embeddings,
                sms_variant: cfg.sms_variant,
                sms_at_inference: cfg.sms_at_inference,
            },
        })
    }

    /// Calibrated similarities for unlabeled features. Each row is
    /// calibrated with the statistics of its raw-argmax class, since the
    /// true class is unknown at inference.
    pub fn similarity(&self, features: &Matrix) -> Result<SimilarityMatrix> {
        let raw = raw_similarity(&self.params, features, self.inference.normalize_embeddings)?;
        match (&self.sms, self.inference.sms_at_inference) {
            (Some(stats), true) => stats.calibrate(&raw, &predictions(&raw), self.inference.sms_variant),
            _ => Ok(raw),
        }
    }

    pub fn evaluate(&self, dataset: &Dataset, split: Split) -> Result<MetricsReport> {
        let (features, labels) = dataset.split(split);
        if labels.is_empty() {
            return Err(Error::invalid(format!("split {} is empty", split.as_str())));
        }
        evaluate(&self.similarity(&features)?, &labels, self.inference.tau)
    }

    pub fn heatmap(&self, dataset: &Dataset, split: Split) -> Result<ClassMeanSimilarity> {
        let (features, labels) = dataset.split(split);
        if labels.is_empty() {
            return Err(Error::invalid(format!("split {} is empty", split.as_str())));
        }
        class_mean_similarity(&self.similarity(&features)?, &labels, self.hyper.classes)
    }
}

/// Objective variants of the ablation battery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    WithoutMain,
    WithoutRank,
    WithoutSms,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::WithoutMain,
        Variant::WithoutRank,
        Variant::WithoutSms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WithoutMain => "without_main",
            Variant::WithoutRank => "without_rank",
            Variant::WithoutSms => "without_sms",
        }
    }

    fn apply(self, cfg: &RunConfig) -> (PipelineConfig, bool) {
        let mut pipeline = cfg.pipeline();
        let mut sms = cfg.sms_enabled;
        match self {
            Variant::Full => {}
            Variant::WithoutMain => pipeline.loss.main_weight = 0.0,
            Variant::WithoutRank => pipeline.loss.lambda_rank = 0.0,
            Variant::WithoutSms => sms = false,
        }
        (pipeline, sms)
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub main: f64,
    pub rank: f64,
    pub total: f64,
    pub train: MetricsReport,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Trains from a fresh initialization seeded by `seed`.
///
/// Per epoch: for each shuffled batch, encode → similarity → calibrate with
/// the statistics frozen at the previous epoch boundary → loss → backward →
/// optimizer step, while the raw rows feed the next epoch's statistics.
pub fn train(cfg: &RunConfig, dataset: &Dataset, variant: Variant, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.feature_dim() != cfg.feature_dim || dataset.classes() != cfg.classes {
        return Err(Error::config(
            "dataset",
            format!(
                "dataset has {} features / {} classes, config expects {} / {}",
                dataset.feature_dim(),
                dataset.classes(),
                cfg.feature_dim,
                cfg.classes
            ),
        ));
    }
    if dataset.split_indices(Split::Train).is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let (pipeline, sms_enabled) = variant.apply(cfg);
    let kernel = cfg.kernel();
    let mut ckpt = Checkpoint::initial(cfg, seed)?;
    ckpt.inference.sms_at_inference &= sms_enabled;
    let mut stats = ClassStats::new(cfg.classes);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (mut main, mut rank, mut total, mut seen) = (0.0, 0.0, 0.0, 0usize);
        for batch in batch_iter(dataset, Split::Train, cfg.batch_size, seed, epoch as u64)? {
            let (features, labels) = dataset.subset(&batch);
            let committed = if sms_enabled { stats.committed() } else { None };
            let out = model_backward(&ckpt.params, &features, &labels, committed, &pipeline)?;
            if sms_enabled {
                stats.accumulate(&out.raw_similarity, &labels)?;
            }
            optimizer_step(&mut ckpt.params, &out.grads, &mut ckpt.optimizer)?;
            let n = batch.len() as f64;
            main += out.report.main * n;
            rank += out.report.rank * n;
            total += out.report.total * n;
            seen += batch.len();
        }
        if sms_enabled {
            stats.commit_epoch(&kernel)?;
        }
        if !ckpt.params.is_finite() {
            return Err(Error::InvalidState(format!("parameters diverged in epoch {epoch}")));
        }
        ckpt.epoch = epoch + 1;
        ckpt.sms = stats.committed().cloned();
        let n = seen as f64;
        log.push(EpochLog {
            epoch,
            main: main / n,
            rank: rank / n,
            total: total / n,
            train: ckpt.evaluate(dataset, Split::Train)?,
        });
    }
    Ok(TrainOutcome { checkpoint: ckpt, log })
}

/// Calibrated similarities of labelled rows, as seen by the loss during training.
pub fn training_similarity(
    ckpt: &Checkpoint,
    features: &Matrix,
    labels: &crate::numeric::LabelVector,
) -> Result<SimilarityMatrix> {
    let raw = raw_similarity(&ckpt.params, features, ckpt.inference.normalize_embeddings)?;
    calibrate_or_identity(&raw, labels, ckpt.sms.as_ref(), ckpt.inference.sms_variant)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub stdev: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stdev = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, stdev }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub macro_f1: MeanStd,
    pub macro_auc: MeanStd,
    pub rank_monotonicity: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub seeds: Vec<u64>,
    pub variants: Vec<VariantSummary>,
}

impl AblationSummary {
    pub fn get(&self, v: Variant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v)
    }
}

/// Trains every variant on `dataset` for seeds `cfg.seed .. cfg.seed + ablation_seeds`
/// and summarizes test metrics.
pub fn ablate(cfg: &RunConfig, dataset: &Dataset) -> Result<AblationSummary> {
    let seeds: Vec<u64> = (0..cfg.ablation_seeds as u64).map(|s| cfg.seed + s).collect();
    let mut variants = Vec::new();
    for variant in Variant::ALL {
        let mut f1 = Vec::new();
        let mut auc = Vec::new();
        let mut mono = Vec::new();
        for &seed in &seeds {
            let run = train(cfg, dataset, variant, seed)?;
            let m = run.checkpoint.evaluate(dataset, Split::Test)?;
            f1.push(m.macro_f1);
            auc.push(m.macro_auc);
            mono.push(m.rank_monotonicity);
        }
        variants.push(VariantSummary {
            variant,
            macro_f1: MeanStd::of(&f1),
            macro_auc: MeanStd::of(&auc),
            rank_monotonicity: MeanStd::of(&mono),
        });
    }
    Ok(AblationSummary { seeds, variants })
}
