mod common;

use common::*;
use rankprompt::model::{model_backward, model_loss, Hyper, ModelParams, PipelineConfig};

#[test]
fn loss_gradients_match_finite_differences() {
    for seed in 0..100 {
        let [main, rank, total] = check_similarity_gradients(seed);
        for (name, m) in [("main", main), ("rank", rank), ("total", total)] {
            assert_eq!(m.failed, 0, "seed {seed}: {name} {m:?}");
        }
    }
}

#[test]
fn chain_gradients_match_finite_differences() {
    for seed in 0..100 {
        let m = check_chain_gradients(seed);
        assert!(m.checked > 0);
        assert_eq!(m.failed, 0, "seed {seed}: {m:?}");
    }
}

#[test]
fn small_step_against_gradient_decreases_loss() {
    let hyper = Hyper {
        feature_dim: 3,
        hidden_dim: 5,
        embed_dim: 4,
        classes: 4,
    };
    for seed in 0..20 {
        let mut r = rng(seed);
        let params = ModelParams::init(hyper, seed).unwrap();
        let features = random_matrix(&mut r, 6, 3, 2.0);
        let labels = random_labels(&mut r, 6, 4);
        let stats = random_stats(&mut r, 4);
        let cfg = PipelineConfig::default();
        let out = model_backward(&params, &features, &labels, Some(&stats), &cfg).unwrap();
        let g = out.grads.flatten();
        let norm2: f64 = g.iter().map(|v| v * v).sum();
        if norm2 < 1e-12 {
            continue;
        }
        let step = 1e-4 / norm2.sqrt();
        let moved: Vec<f64> = params.flatten().iter().zip(&g).map(|(p, d)| p - step * d).collect();
        let mut next = params.clone();
        next.assign_flat(&moved).unwrap();
        let after = model_loss(&next, &features, &labels, Some(&stats), &cfg).unwrap().total;
        assert!(after < out.report.total, "seed {seed}: {after} >= {}", out.report.total);
    }
}

#[test]
fn backward_report_matches_forward() {
    let hyper = Hyper::default();
    let mut r = rng(9);
    let params = ModelParams::init(hyper, 9).unwrap();
    let features = random_matrix(&mut r, 10, hyper.feature_dim, 1.0);
    let labels = random_labels(&mut r, 10, hyper.classes);
    let stats = random_stats(&mut r, hyper.classes);
    let cfg = PipelineConfig::default();
    let fwd = model_loss(&params, &features, &labels, Some(&stats), &cfg).unwrap();
    let bwd = model_backward(&params, &features, &labels, Some(&stats), &cfg).unwrap();
    assert_eq!(fwd.total.to_bits(), bwd.report.total.to_bits());
}

#[test]
fn harness_rejects_a_one_percent_error() {
    assert!(close(1.0, 1.0 + 5e-5, REL_TOL));
    assert!(!close(1.0, 1.01, REL_TOL));
    assert!(!close(1.0, 1.01, REL_TOL_CHAIN));
    assert!(close(1e-8, -1e-8, REL_TOL));
}
