//! Main and rank losses on a hand-written similarity matrix.
//!
//!     cargo run --example losses

use rankprompt::losses::{rank_directional_loss, total_loss, Direction, LossConfig};
use rankprompt::numeric::{LabelVector, SimilarityMatrix};

fn main() -> rankprompt::Result<()> {
    // Three images, five grades. Row 0 is perfectly unimodal around its
    // label, row 1 peaks at the right class but is not ordered, row 2 is wrong.
    let s = SimilarityMatrix::from_rows(&[
        [3.0, 2.0, 1.0, 0.0, -1.0],
        [0.0, 1.0, 3.0, 2.0, 1.5],
        [2.0, 0.0, 0.0, 0.0, 1.0],
    ])?;
    let labels = LabelVector::new(vec![0, 2, 4], 5)?;

    for (name, cfg) in [
        ("default", LossConfig::default()),
        (
            "no rank",
            LossConfig {
                lambda_rank: 0.0,
                ..LossConfig::default()
            },
        ),
        (
            "sharp tau",
            LossConfig {
                tau: 0.5,
                ..LossConfig::default()
            },
        ),
    ] {
        let r = total_loss(&s, &labels, &cfg)?;
        println!(
            "{name:>9}: main {:.4}  rank {:.4}  total {:.4}",
            r.main, r.rank, r.total
        );
    }

    println!("\nper-row rank terms (tau = 1):");
    for i in 0..s.m() {
        let c = labels.get(i);
        let right = rank_directional_loss(s.row(i), c, Direction::Rightward, 1.0)?;
        let left = rank_directional_loss(s.row(i), c, Direction::Leftward, 1.0)?;
        println!("  row {i} (grade {c}): rightward {right:.4}  leftward {left:.4}");
    }

    let g = total_loss(&s, &labels, &LossConfig::default())?.grad_similarity;
    println!("\ndL/dS:");
    for row in g.iter_rows() {
        println!(
            "  {}",
            row.iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>().join(" ")
        );
    }
    Ok(())
}
