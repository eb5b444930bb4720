//! Class-mean similarity matrix before and after training, with the rows
//! that satisfy both ordering chains marked.
//!
//!     cargo run --release --example heatmap

use rankprompt::config::RunConfig;
use rankprompt::data::{generate_synthetic, Split};
use rankprompt::eval::{is_rank_monotone, ClassMeanSimilarity};
use rankprompt::experiment::{train, Checkpoint, Variant};

fn show(title: &str, h: &ClassMeanSimilarity) {
    println!("{title} ({} of {} rows ordered)", h.monotone_rows(), h.k);
    for (c, row) in h.rows.iter().enumerate() {
        let Some(row) = row else {
            println!("  {c}: (no samples)");
            continue;
        };
        let cells: Vec<String> = row.iter().map(|v| format!("{v:+7.2}")).collect();
        let mark = if is_rank_monotone(row, c) { "ordered" } else { "" };
        println!("  {c}: {}  {mark}", cells.join(" "));
    }
}

fn main() -> rankprompt::Result<()> {
    let cfg = RunConfig::default();
    let ds = generate_synthetic(&cfg.dataset_spec())?;
    show(
        "untrained",
        &Checkpoint::initial(&cfg, cfg.seed)?.heatmap(&ds, Split::Test)?,
    );
    let run = train(&cfg, &ds, Variant::Full, cfg.seed)?;
    let heat = run.checkpoint.heatmap(&ds, Split::Test)?;
    show("\ntrained", &heat);
    println!("\n{}", heat.to_csv_string());
    Ok(())
}
