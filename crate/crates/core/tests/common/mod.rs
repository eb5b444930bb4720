#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankprompt::losses::{main_loss_with_grad, rank_loss_with_grad, total_loss, LossConfig};
use rankprompt::model::{model_backward, model_loss, Hyper, ModelParams, PipelineConfig};
use rankprompt::numeric::{LabelVector, Matrix, SimilarityMatrix};
use rankprompt::sms::{committed_from_parts, CalibrationVariant, CommittedStats};

pub const FD_STEP: f64 = 1e-5;
pub const ABS_FLOOR: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;
pub const REL_TOL_CHAIN: f64 = 1e-3;

/// Analytic and numeric derivatives agree within `rel`, or both are below the floor.
pub fn close(analytic: f64, numeric: f64, rel: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS_FLOOR || diff <= rel * analytic.abs().max(numeric.abs())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn random_labels(rng: &mut impl Rng, m: usize, k: usize) -> LabelVector {
    LabelVector::new((0..m).map(|_| rng.random_range(0..k)).collect(), k).unwrap()
}

pub fn random_loss_config(rng: &mut impl Rng) -> LossConfig {
    LossConfig {
        tau: rng.random_range(0.5..2.0),
        lambda_rank: rng.random_range(0.0..2.0),
        main_weight: 1.0,
    }
}

/// Committed statistics with random means and positive variances.
pub fn random_stats(rng: &mut impl Rng, k: usize) -> CommittedStats {
    let mut draw = |lo: f64, hi: f64| -> Vec<Vec<f64>> {
        (0..k)
            .map(|_| (0..k).map(|_| rng.random_range(lo..hi)).collect())
            .collect()
    };
    let (mean, var, smean, svar) = (draw(-2.0, 2.0), draw(0.2, 2.0), draw(-2.0, 2.0), draw(0.2, 2.0));
    committed_from_parts(mean, var, smean, svar).unwrap()
}

/// Worst mismatch of one gradient check, for reporting.
#[derive(Debug, Default, Clone, Copy)]
pub struct Mismatch {
    pub checked: usize,
    pub failed: usize,
    pub worst_rel: f64,
    pub worst_abs: f64,
}

impl Mismatch {
    fn record(&mut self, analytic: f64, numeric: f64, rel: f64) {
        self.checked += 1;
        let diff = (analytic - numeric).abs();
        self.worst_abs = self.worst_abs.max(diff);
        if diff > ABS_FLOOR {
            self.worst_rel = self.worst_rel.max(diff / analytic.abs().max(numeric.abs()));
        }
        if !close(analytic, numeric, rel) {
            self.failed += 1;
        }
    }

    pub fn merge(&mut self, other: Mismatch) {
        self.checked += other.checked;
        self.failed += other.failed;
        self.worst_rel = self.worst_rel.max(other.worst_rel);
        self.worst_abs = self.worst_abs.max(other.worst_abs);
    }
}

fn fd_similarity(s: &SimilarityMatrix, f: impl Fn(&SimilarityMatrix) -> f64, analytic: &Matrix, out: &mut Mismatch) {
    for i in 0..s.m() {
        for j in 0..s.k() {
            let shifted = |d: f64| {
                let mut v = s.values().clone();
                v.set(i, j, v.get(i, j) + d);
                f(&SimilarityMatrix::new(v, true).unwrap())
            };
            let numeric = (shifted(FD_STEP) - shifted(-FD_STEP)) / (2.0 * FD_STEP);
            out.record(analytic.get(i, j), numeric, REL_TOL);
        }
    }
}

/// Checks the gradients of the main, rank and total losses with respect to S̃
/// for one random case drawn from `seed`. Returns (main, rank, total).
pub fn check_similarity_gradients(seed: u64) -> [Mismatch; 3] {
    let mut r = rng(seed);
    let m = r.random_range(1..=8);
    let k = r.random_range(2..=6);
    let s = SimilarityMatrix::new(random_matrix(&mut r, m, k, 3.0), true).unwrap();
    let labels = random_labels(&mut r, m, k);
    let cfg = random_loss_config(&mut r);

    let mut out = [Mismatch::default(); 3];
    let (_, g) = main_loss_with_grad(&s, &labels, &cfg).unwrap();
    fd_similarity(
        &s,
        |x| main_loss_with_grad(x, &labels, &cfg).unwrap().0,
        &g,
        &mut out[0],
    );
    let (_, g) = rank_loss_with_grad(&s, &labels, &cfg).unwrap();
    fd_similarity(
        &s,
        |x| rank_loss_with_grad(x, &labels, &cfg).unwrap().0,
        &g,
        &mut out[1],
    );
    let g = total_loss(&s, &labels, &cfg).unwrap().grad_similarity;
    fd_similarity(&s, |x| total_loss(x, &labels, &cfg).unwrap().total, &g, &mut out[2]);
    out
}

/// Checks the gradient of the total loss with respect to every model
/// parameter through encode, similarity, calibration and loss.
pub fn check_chain_gradients(seed: u64) -> Mismatch {
    let mut r = rng(seed);
    let m = r.random_range(1..=8);
    let k = r.random_range(2..=6);
    let hyper = Hyper {
        feature_dim: r.random_range(1..=4),
        hidden_dim: r.random_range(1..=6),
        embed_dim: r.random_range(1..=4),
        classes: k,
    };
    let params = ModelParams::init(hyper, seed).unwrap();
    let features = random_matrix(&mut r, m, hyper.feature_dim, 2.0);
    let labels = random_labels(&mut r, m, k);
    let stats = r.random_bool(0.7).then(|| random_stats(&mut r, k));
    let cfg = PipelineConfig {
        loss: random_loss_config(&mut r),
        normalize_embeddings: r.random_bool(0.5),
        variant: if r.random_bool(0.5) {
            CalibrationVariant::Standard
        } else {
            CalibrationVariant::Literal
        },
    };

    let analytic = model_backward(&params, &features, &labels, stats.as_ref(), &cfg)
        .unwrap()
        .grads
        .flatten();
    let base = params.flatten();
    let mut probe = params.clone();
    let mut loss_at = |flat: &[f64]| {
        probe.assign_flat(flat).unwrap();
        model_loss(&probe, &features, &labels, stats.as_ref(), &cfg)
            .unwrap()
            .total
    };
    let mut out = Mismatch::default();
    for p in 0..base.len() {
        let mut x = base.clone();
        x[p] = base[p] + FD_STEP;
        let up = loss_at(&x);
        x[p] = base[p] - FD_STEP;
        let down = loss_at(&x);
        out.record(analytic[p], (up - down) / (2.0 * FD_STEP), REL_TOL_CHAIN);
    }
    out
}
