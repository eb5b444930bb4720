//! Central finite differences against the analytic gradient of the full
//! chain: encoder, similarity, SMS calibration, loss.
//!
//!     cargo run --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankprompt::model::{model_backward, model_loss, Hyper, ModelParams, PipelineConfig};
use rankprompt::numeric::{LabelVector, Matrix, SimilarityMatrix};
use rankprompt::sms::{ClassStats, KernelSpec};

fn main() -> rankprompt::Result<()> {
    let hyper = Hyper {
        feature_dim: 3,
        hidden_dim: 6,
        embed_dim: 4,
        classes: 4,
    };
    let params = ModelParams::init(hyper, 7)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = 8;
    let features = Matrix::new(m, 3, (0..m * 3).map(|_| rng.random_range(-2.0..2.0)).collect())?;
    let labels = LabelVector::new((0..m).map(|i| i % 4).collect(), 4)?;

    // Commit statistics from a random "previous epoch" so calibration is active.
    let mut stats = ClassStats::new(4);
    let prev = Matrix::new(m, 4, (0..m * 4).map(|_| rng.random_range(-2.0..2.0)).collect())?;
    stats.accumulate(&SimilarityMatrix::new(prev, false)?, &labels)?;
    stats.commit_epoch(&KernelSpec {
        sigma: 0.5,
        include_self: true,
        ..KernelSpec::default()
    })?;

    let cfg = PipelineConfig {
        normalize_embeddings: true,
        ..PipelineConfig::default()
    };
    let out = model_backward(&params, &features, &labels, stats.committed(), &cfg)?;
    let analytic = out.grads.flatten();
    let base = params.flatten();
    let h = 1e-5;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for p in 0..base.len() {
        let mut x = base.clone();
        x[p] += h;
        probe.assign_flat(&x)?;
        let up = model_loss(&probe, &features, &labels, stats.committed(), &cfg)?.total;
        x[p] -= 2.0 * h;
        probe.assign_flat(&x)?;
        let down = model_loss(&probe, &features, &labels, stats.committed(), &cfg)?.total;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((numeric - analytic[p]).abs());
    }
    println!(
        "loss {:.6}, {} parameters, max |analytic - numeric| = {worst:.2e}",
        out.report.total,
        base.len()
    );
    Ok(())
}
