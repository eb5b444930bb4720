//! Toy trainable encoder pair: a two-layer tanh MLP mapping feature vectors
//! to embeddings, and one free embedding per class. Gradients of the full
//! encode → similarity → calibrate → loss chain are computed by hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{total_loss, LossConfig, LossReport};
use crate::numeric::{similarity_matrix, EmbeddingMatrix, LabelVector, Matrix, SimilarityMatrix};
use crate::sms::{CalibrationVariant, CommittedStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyper {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub classes: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            feature_dim: 16,
            hidden_dim: 64,
            embed_dim: 32,
            classes: 5,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.hidden_dim == 0 || self.embed_dim == 0 || self.classes == 0 {
            return Err(Error::invalid(format!("all model dimensions must be >= 1: {self:?}")));
        }
        Ok(())
    }
}

/// Encoder weights `features·w1 + b1 → tanh → ·w2 + b2` and the class embeddings.
///
/// The same struct doubles as the gradient container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub hyper: Hyper,
    /// F×H
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// H×D
    pub w2: Matrix,
    pub b2: Vec<f64>,
    /// K×D
    pub text_embeddings: Matrix,
}

impl ModelParams {
    /// Uniform `±1/sqrt(fan_in)` initialization from a seeded stream.
    pub fn init(hyper: Hyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Hyper {
            feature_dim: f,
            hidden_dim: h,
            embed_dim: d,
            classes: k,
        } = hyper;
        let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let w1 = Matrix::new(f, h, draw(f * h, f))?;
        let b1 = draw(h, f);
        let w2 = Matrix::new(h, d, draw(h * d, h))?;
        let b2 = draw(d, h);
        let text_embeddings = Matrix::new(k, d, draw(k * d, d))?;
        Ok(Self {
            hyper,
            w1,
            b1,
            w2,
            b2,
            text_embeddings,
        })
    }

    /// All-zero parameters (or gradients) with the given shapes.
    pub fn zeros(hyper: Hyper) -> Self {
        let Hyper {
            feature_dim: f,
            hidden_dim: h,
            embed_dim: d,
            classes: k,
        } = hyper;
        Self {
            hyper,
            w1: Matrix::zeros(f, h),
            b1: vec![0.0; h],
            w2: Matrix::zeros(h, d),
            b2: vec![0.0; d],
            text_embeddings: Matrix::zeros(k, d),
        }
    }

    fn tensors(&self) -> [&[f64]; 5] {
        [
            self.w1.data(),
            &self.b1,
            self.w2.data(),
            &self.b2,
            self.text_embeddings.data(),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.w1.data_mut(),
            &mut self.b1,
            self.w2.data_mut(),
            &mut self.b2,
            self.text_embeddings.data_mut(),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Concatenation `w1, b1, w2, b2, text_embeddings`.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn text(&self) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::new(self.text_embeddings.clone())
    }
}

/// Settings of the forward chain beyond the loss itself.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    pub loss: LossConfig,
    pub normalize_embeddings: bool,
    pub variant: CalibrationVariant,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            normalize_embeddings: false,
            variant: CalibrationVariant::Standard,
        }
    }
}

struct EncoderCache {
    hidden: Matrix,
    norms: Vec<f64>,
}

fn encode_cached(params: &ModelParams, features: &Matrix, normalize: bool) -> Result<(Matrix, EncoderCache)> {
    let hy = params.hyper;
    if features.cols() != hy.feature_dim {
        return Err(Error::invalid(format!(
            "feature width {} != model feature_dim {}",
            features.cols(),
            hy.feature_dim
        )));
    }
    if features.rows() == 0 {
        return Err(Error::invalid("cannot encode an empty batch"));
    }
    let mut hidden = features.matmul(&params.w1)?;
    for r in 0..hidden.rows() {
        for (v, b) in hidden.row_mut(r).iter_mut().zip(&params.b1) {
            *v = (*v + b).tanh();
        }
    }
    let mut out = hidden.matmul(&params.w2)?;
    for r in 0..out.rows() {
        for (v, b) in out.row_mut(r).iter_mut().zip(&params.b2) {
            *v += b;
        }
    }
    let mut norms = Vec::new();
    if normalize {
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
            norms.push(n);
        }
    }
    Ok((out, EncoderCache { hidden, norms }))
}

/// `X = tanh(features·w1 + b1)·w2 + b2`, optionally unit-normalized per row.
pub fn encode_images(params: &ModelParams, features: &Matrix, normalize: bool) -> Result<EmbeddingMatrix> {
    EmbeddingMatrix::new(encode_cached(params, features, normalize)?.0)
}

/// Raw similarity `S = encode(features) · textᵀ`.
pub fn raw_similarity(params: &ModelParams, features: &Matrix, normalize: bool) -> Result<SimilarityMatrix> {
    let x = encode_images(params, features, normalize)?;
    similarity_matrix(&x, &params.text()?)
}

/// Output of one forward/backward pass.
#[derive(Clone, Debug)]
pub struct BackwardOutput {
    pub grads: ModelParams,
    pub report: LossReport,
    /// Uncalibrated similarities, as fed to the class statistics.
    pub raw_similarity: SimilarityMatrix,
}

/// Forward pass only: loss report of the full chain.
pub fn model_loss(
    params: &ModelParams,
    features: &Matrix,
    labels: &LabelVector,
    sms: Option<&CommittedStats>,
    cfg: &PipelineConfig,
) -> Result<LossReport> {
    let s = raw_similarity(params, features, cfg.normalize_embeddings)?;
    let s_cal = crate::sms::calibrate_or_identity(&s, labels, sms, cfg.variant)?;
    total_loss(&s_cal, labels, &cfg.loss)
}

/// Gradient of the total loss with respect to every parameter. Committed
/// class statistics are constants of the chain.
pub fn model_backward(
    params: &ModelParams,
    features: &Matrix,
    labels: &LabelVector,
    sms: Option<&CommittedStats>,
    cfg: &PipelineConfig,
) -> Result<BackwardOutput> {
    let hy = params.hyper;
    if labels.len() != features.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} feature rows",
            labels.len(),
            features.rows()
        )));
    }
    let (x, cache) = encode_cached(params, features, cfg.normalize_embeddings)?;
    let text = &params.text_embeddings;
    let raw = SimilarityMatrix::new(x.matmul_transposed(text)?, false)?;
    let s_cal = crate::sms::calibrate_or_identity(&raw, labels, sms, cfg.variant)?;
    let report = total_loss(&s_cal, labels, &cfg.loss)?;

    // Through the per-row affine calibration: ∂s̃/∂s = scale of the row's class.
    let mut g_s = report.grad_similarity.clone();
    if let Some(stats) = sms {
        let scales = stats.scales(cfg.variant);
        for i in 0..g_s.rows() {
            if let Some(map) = stats.row_map(&scales, labels.get(i)) {
                for (g, sc) in g_s.row_mut(i).iter_mut().zip(map.scale) {
                    *g *= sc;
                }
            }
        }
    }

    // S = X·Tᵀ
    let mut g_x = g_s.matmul(text)?;
    let g_text = g_s.transposed_matmul(&x)?;

    if cfg.normalize_embeddings {
        for i in 0..g_x.rows() {
            let n = cache.norms[i];
            if n == 0.0 {
                continue;
            }
            let xhat = x.row(i);
            let proj: f64 = g_x.row(i).iter().zip(xhat).map(|(g, u)| g * u).sum();
            for (g, u) in g_x.row_mut(i).iter_mut().zip(xhat) {
                *g = (*g - u * proj) / n;
            }
        }
    }

    let g_w2 = cache.hidden.transposed_matmul(&g_x)?;
    let g_b2 = column_sums(&g_x);
    let mut g_hidden = g_x.matmul_transposed(&params.w2)?;
    for i in 0..g_hidden.rows() {
        for (g, h) in g_hidden.row_mut(i).iter_mut().zip(cache.hidden.row(i)) {
            *g *= 1.0 - h * h;
        }
    }
    let g_w1 = features.transposed_matmul(&g_hidden)?;
    let g_b1 = column_sums(&g_hidden);

    Ok(BackwardOutput {
        grads: ModelParams {
            hyper: hy,
            w1: g_w1,
            b1: g_b1,
            w2: g_w2,
            b2: g_b2,
            text_embeddings: g_text,
        },
        report,
        raw_similarity: raw,
    })
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in m.iter_rows() {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(Error::invalid(format!("unknown optimizer {other:?}"))),
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Optimizer hyper-parameters and per-parameter moments (flattened in
/// [`ModelParams::flatten`] order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, num_params: usize) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        let n = if kind == OptimizerKind::Adam { num_params } else { 0 };
        Ok(Self {
            kind,
            learning_rate,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step: 0,
        })
    }

    /// Applies one update in place.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::invalid(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                if self.first_moment.len() != params.len() {
                    return Err(Error::invalid("optimizer moments do not match parameter count"));
                }
                let t = self.step as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
        Ok(())
    }
}

pub fn optimizer_step(params: &mut ModelParams, grads: &ModelParams, state: &mut OptimizerState) -> Result<()> {
    if params.hyper != grads.hyper {
        return Err(Error::invalid("gradient shapes do not match parameters"));
    }
    let mut flat = params.flatten();
    state.step_flat(&mut flat, &grads.flatten())?;
    params.assign_flat(&flat)
}
