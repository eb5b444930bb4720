//! The file-level pipeline behind the `rankprompt` binary: generate, train,
//! eval and heatmap into one output directory.
//!
//!     cargo run --release --example cli_pipeline -- [out_dir]

use std::path::PathBuf;

use rankprompt::cli::{self, Args};
use rankprompt::config::RunConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rankprompt_pipeline"));
    std::fs::create_dir_all(&out)?;
    let cfg = RunConfig {
        epochs: 20,
        out_dir: out.clone(),
        ..RunConfig::default()
    };
    let config = out.join("run.cfg");
    std::fs::write(&config, cfg.to_config_string())?;

    let args = Args {
        config: Some(config),
        ..Args::default()
    };
    cli::cmd_generate(&args)?;
    let ckpt = cli::cmd_train(&args)?;
    let metrics = cli::cmd_eval(&args)?;
    cli::cmd_heatmap(&args)?;
    println!("trained {} epochs; test macro_f1 {:.4}", ckpt.epoch, metrics.macro_f1);
    let mut files = std::fs::read_dir(&out)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?;
    files.sort();
    for f in files {
        println!("  {}", f.display());
    }
    Ok(())
}
