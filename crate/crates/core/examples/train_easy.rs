//! Trains the full objective on the easy balanced dataset and reports
//! per-epoch losses and held-out metrics.
//!
//!     cargo run --release --example train_easy

use rankprompt::config::RunConfig;
use rankprompt::data::{generate_synthetic, Split};
use rankprompt::experiment::{train, Variant};

fn main() -> rankprompt::Result<()> {
    let cfg = RunConfig::default().with_env_overrides()?;
    let ds = generate_synthetic(&cfg.dataset_spec())?;
    let run = train(&cfg, &ds, Variant::Full, cfg.seed)?;
    for e in run
        .log
        .iter()
        .filter(|e| e.epoch % 10 == 0 || e.epoch + 1 == cfg.epochs)
    {
        println!(
            "epoch {:>3}  main {:.4}  rank {:.4}  train f1 {:.3}  mono {:.3}",
            e.epoch, e.main, e.rank, e.train.macro_f1, e.train.rank_monotonicity
        );
    }
    let m = run.checkpoint.evaluate(&ds, Split::Test)?;
    println!(
        "test: macro_f1 {:.4}  macro_auc {:.4}  rank_monotonicity {:.4}",
        m.macro_f1, m.macro_auc, m.rank_monotonicity
    );
    println!("confusion:");
    for row in &m.confusion {
        println!("  {row:?}");
    }
    Ok(())
}
