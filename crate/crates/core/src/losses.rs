//! Training objective over a (calibrated) similarity matrix.
//!
//! `total = main_weight · main + lambda_rank · rank`, where `main` averages a
//! row-wise (text-to-image) and a column-wise (image-to-text) KL term and
//! `rank` penalizes every neighbouring pair of scores that does not decrease
//! away from the true class. Every term comes with a hand-derived gradient
//! with respect to the similarity entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{check_tau, log_softmax, sigmoid, softmax_into, softplus, LabelVector, Matrix, SimilarityMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Temperature shared by both softmax normalizations and the rank logits.
    pub tau: f64,
    pub lambda_rank: f64,
    /// Weight of the main term; 0 trains on the rank term alone.
    pub main_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            lambda_rank: 1.0,
            main_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        for (name, v) in [("lambda_rank", self.lambda_rank), ("main_weight", self.main_weight)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Loss values and the gradient of `total` with respect to every similarity entry.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub main: f64,
    pub rank: f64,
    pub total: f64,
    pub grad_similarity: Matrix,
}

/// Direction of a rank chain, relative to the true class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Towards higher class indices.
    Rightward,
    /// Towards lower class indices.
    Leftward,
}

fn check_shapes(s: &SimilarityMatrix, labels: &LabelVector) -> Result<()> {
    if labels.len() != s.m() {
        return Err(Error::invalid(format!(
            "{} labels for {} similarity rows",
            labels.len(),
            s.m()
        )));
    }
    if let Some(&c) = labels.as_slice().iter().find(|&&c| c >= s.k()) {
        return Err(Error::invalid(format!("label {c} out of range for {} classes", s.k())));
    }
    Ok(())
}

/// Mean over images of `KL(one_hot ‖ softmax(row / τ))`, i.e. the mean
/// cross-entropy of the true class.
pub fn text_to_image_loss(s: &SimilarityMatrix, labels: &LabelVector, cfg: &LossConfig) -> Result<f64> {
    text_to_image(s, labels, cfg, None)
}

fn text_to_image(
    s: &SimilarityMatrix,
    labels: &LabelVector,
    cfg: &LossConfig,
    mut grad: Option<(&mut Matrix, f64)>,
) -> Result<f64> {
    check_shapes(s, labels)?;
    check_tau(cfg.tau)?;
    let m = s.m() as f64;
    let mut total = 0.0;
    let mut probs = vec![0.0; s.k()];
    for i in 0..s.m() {
        let row = s.row(i);
        let c = labels.get(i);
        let logp = log_softmax(row, cfg.tau);
        total += -logp[c];
        if let Some((g, w)) = grad.as_mut() {
            softmax_into(row, cfg.tau, &mut probs);
            let coef = *w / (m * cfg.tau);
            for (j, (gv, p)) in g.row_mut(i).iter_mut().zip(&probs).enumerate() {
                let y = if j == c { 1.0 } else { 0.0 };
                *gv += coef * (p - y);
            }
        }
    }
    Ok(total / m)
}

/// Mean over classes present in the batch of `KL(y′_j ‖ softmax_i(s_{·,j} / τ))`,
/// where `y′_j` spreads unit mass evenly over that class's images.
pub fn image_to_text_loss(s: &SimilarityMatrix, labels: &LabelVector, cfg: &LossConfig) -> Result<f64> {
    image_to_text(s, labels, cfg, None)
}

fn image_to_text(
    s: &SimilarityMatrix,
    labels: &LabelVector,
    cfg: &LossConfig,
    mut grad: Option<(&mut Matrix, f64)>,
) -> Result<f64> {
    check_shapes(s, labels)?;
    check_tau(cfg.tau)?;
    let mut counts = vec![0usize; s.k()];
    for &c in labels.as_slice() {
        counts[c] += 1;
    }
    let retained = counts.iter().filter(|&&n| n > 0).count() as f64;
    let mut total = 0.0;
    let mut column = vec![0.0; s.m()];
    let mut probs = vec![0.0; s.m()];
    for (j, &n) in counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        for (i, v) in column.iter_mut().enumerate() {
            *v = s.get(i, j);
        }
        let target = 1.0 / n as f64;
        let logq = log_softmax(&column, cfg.tau);
        let kl: f64 = labels
            .as_slice()
            .iter()
            .zip(&logq)
            .filter(|(&c, _)| c == j)
            .map(|(_, lq)| target * (target.ln() - lq))
            .sum();
        total += kl.max(0.0);
        if let Some((g, w)) = grad.as_mut() {
            softmax_into(&column, cfg.tau, &mut probs);
            let coef = *w / (retained * cfg.tau);
            for (i, q) in probs.iter().enumerate() {
                let y = if labels.get(i) == j { target } else { 0.0 };
                let cur = g.get(i, j);
                g.set(i, j, cur + coef * (q - y));
            }
        }
    }
    Ok(total / retained)
}

/// `½ (image_to_text + text_to_image)`.
pub fn main_loss(s: &SimilarityMatrix, labels: &LabelVector, cfg: &LossConfig) -> Result<f64> {
    Ok(0.5 * (image_to_text_loss(s, labels, cfg)? + text_to_image_loss(s, labels, cfg)?))
}

/// Main loss and its gradient.
pub fn main_loss_with_grad(s: &SimilarityMatrix, labels: &LabelVector, cfg: &LossConfig) -> Result<(f64, Matrix)> {
    let mut g = Matrix::zeros(s.m(), s.k());
    let i2t = image_to_text(s, labels, cfg, Some((&mut g, 0.5)))?;
    let t2i = text_to_image(s, labels, cfg, Some((&mut g, 0.5)))?;
    Ok((0.5 * (i2t + t2i), g))
}

fn pair_range(k: usize, true_class: usize, direction: Direction) -> impl Iterator<Item = (usize, usize)> {
    // (winner, loser) pairs of neighbouring classes walking away from the true class.
    let (lo, hi) = match direction {
        Direction::Rightward => (true_class, k.saturating_sub(1)),
        Direction::Leftward => (1, true_class + 1),
    };
    (lo..hi.max(lo)).map(move |j| match direction {
        Direction::Rightward => (j, j + 1),
        Direction::Leftward => (j, j - 1),
    })
}

/// Sum of `−ln σ((row[w] − row[l]) / τ)` over the neighbouring pairs in
/// one direction away from `true_class`; 0 at the boundary classes.
pub fn rank_directional_loss(row: &[f64], true_class: usize, direction: Direction, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if true_class >= row.len() {
        return Err(Error::invalid(format!(
            "true class {true_class} out of range for {} classes",
            row.len()
        )));
    }
    Ok(pair_range(row.len(), true_class, direction).fold(0.0, |acc, (w, l)| acc + softplus(-(row[w] - row[l]) / tau)))
}

/// Mean over images of the rightward plus leftward directional losses.
pub fn rank_loss(s: &SimilarityMatrix, labels: &LabelVector, cfg: &LossConfig) -> Result<f64> {
    Ok(rank_loss_with_grad(s, labels, cfg)?.0)
}

/// Rank loss and its gradient.
pub fn rank_loss_with_grad(s: &SimilarityMatrix, labels: &LabelVector, cfg: &LossConfig) -> Result<(f64, Matrix)> {
    check_shapes(s, labels)?;
    check_tau(cfg.tau)?;
    let mut g = Matrix::zeros(s.m(), s.k());
    let m = s.m() as f64;
    let mut total = 0.0;
    for i in 0..s.m() {
        let row = s.row(i);
        let c = labels.get(i);
        let grow = g.row_mut(i);
        for dir in [Direction::Rightward, Direction::Leftward] {
            for (w, l) in pair_range(row.len(), c, dir) {
                let z = (row[w] - row[l]) / cfg.tau;
                total += softplus(-z);
                // d/dz −ln σ(z) = σ(z) − 1
                let d = (sigmoid(z) - 1.0) / (cfg.tau * m);
                grow[w] += d;
                grow[l] -= d;
            }
        }
    }
    Ok((total / m, g))
}

/// Every loss term plus the gradient of the weighted total.
pub fn total_loss(s: &SimilarityMatrix, labels: &LabelVector, cfg: &LossConfig) -> Result<LossReport> {
    cfg.validate()?;
    let (main, main_grad) = main_loss_with_grad(s, labels, cfg)?;
    let (rank, rank_grad) = rank_loss_with_grad(s, labels, cfg)?;
    let total = cfg.main_weight * main + cfg.lambda_rank * rank;
    let mut grad = main_grad;
    for (g, r) in grad.data_mut().iter_mut().zip(rank_grad.data()) {
        *g = cfg.main_weight * *g + cfg.lambda_rank * r;
    }
    Ok(LossReport {
        main,
        rank,
        total,
        grad_similarity: grad,
    })
}

pub fn grad_total_wrt_similarity(s: &SimilarityMatrix, labels: &LabelVector, cfg: &LossConfig) -> Result<Matrix> {
    Ok(total_loss(s, labels, cfg)?.grad_similarity)
}
