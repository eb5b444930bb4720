//! Similarity-matrix smoothing: kernel weights, per-class statistics,
//! epoch commits and the calibrated rows they produce.
//!
//!     cargo run --example sms_calibration

use rankprompt::numeric::{LabelVector, SimilarityMatrix};
use rankprompt::sms::{kernel_weights, CalibrationVariant, ClassStats, KernelSpec};

fn fmt(row: &[f64]) -> String {
    row.iter().map(|v| format!("{v:+.3}")).collect::<Vec<_>>().join(" ")
}

fn main() -> rankprompt::Result<()> {
    let k = 4;
    for spec in [
        KernelSpec::default(),
        KernelSpec {
            sigma: 0.5,
            include_self: true,
            ..KernelSpec::default()
        },
    ] {
        println!("sigma {} include_self {}:", spec.sigma, spec.include_self);
        for j in 0..k {
            println!("  w[{j}] = {}", fmt(&kernel_weights(&spec, j, k)?));
        }
    }

    // The head class is well separated, the tail class is noisy.
    let s = SimilarityMatrix::from_rows(&[
        [2.0, 0.5, -0.5, -1.0],
        [2.2, 0.4, -0.6, -1.2],
        [1.8, 0.6, -0.4, -0.8],
        [0.2, 1.5, 0.3, -0.5],
        [0.0, 1.2, 0.5, -0.2],
        [-0.5, 0.1, 1.0, 0.4],
        [-1.0, 0.0, 0.2, 0.3],
    ])?;
    let labels = LabelVector::new(vec![0, 0, 0, 1, 1, 2, 3], k)?;

    let spec = KernelSpec {
        sigma: 0.5,
        include_self: true,
        ..KernelSpec::default()
    };
    let mut stats = ClassStats::new(k);
    stats.accumulate(&s, &labels)?;
    println!(
        "\nbefore the first commit calibration is the identity: committed = {}",
        stats.is_committed()
    );
    println!("commit: {:?}", stats.commit_epoch(&spec)?);

    let committed = stats.committed().expect("just committed");
    for variant in [CalibrationVariant::Standard, CalibrationVariant::Literal] {
        let cal = committed.calibrate(&s, &labels, variant)?;
        println!("\n{variant:?} calibration:");
        for i in 0..s.m() {
            println!("  grade {}  {}  ->  {}", labels.get(i), fmt(s.row(i)), fmt(cal.row(i)));
        }
    }
    Ok(())
}
