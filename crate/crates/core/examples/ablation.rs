//! The four-variant ablation on a long-tailed dataset.
//!
//!     cargo run --release --example ablation -- [seeds] [epochs]

use rankprompt::config::RunConfig;
use rankprompt::data::generate_synthetic;
use rankprompt::experiment::ablate;

fn main() -> rankprompt::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let seeds = args.next().flatten().unwrap_or(3);
    let epochs = args.next().flatten().unwrap_or(20);
    let cfg = RunConfig {
        imbalance_ratio: 20.0,
        class_sep: 0.3,
        ablation_seeds: seeds,
        epochs,
        ..RunConfig::default()
    };
    let ds = generate_synthetic(&cfg.dataset_spec())?;
    println!(
        "class counts {:?}, {seeds} seeds, {epochs} epochs",
        cfg.dataset_spec().class_counts()?
    );
    let summary = ablate(&cfg, &ds)?;
    println!(
        "{:<13} {:>15} {:>15} {:>15}",
        "variant", "macro_f1", "macro_auc", "monotonicity"
    );
    for v in &summary.variants {
        let cell = |m: rankprompt::experiment::MeanStd| format!("{:.3} ± {:.3}", m.mean, m.stdev);
        println!(
            "{:<13} {:>15} {:>15} {:>15}",
            v.variant.name(),
            cell(v.macro_f1),
            cell(v.macro_auc),
            cell(v.rank_monotonicity)
        );
    }
    Ok(())
}
