use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rankprompt::cli::{self, Args};
use rankprompt::data::Split;

#[derive(Parser)]
#[command(version, about = "Rank-aware similarity training on synthetic ordinal data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Checkpoint JSON; defaults to <out>/checkpoint.json.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Dataset CSV; defaults to <out>/dataset.csv.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Split to score (eval, heatmap).
    #[arg(long, global = true, value_parser = parse_split)]
    split: Option<Split>,
    /// Output directory; defaults to the config's out_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write a synthetic dataset and its metadata.
    Generate,
    /// Train and write the log and checkpoint.
    Train,
    /// Score a split and write metrics.json.
    Eval,
    /// Write the class-mean similarity heatmap.
    Heatmap,
    /// Train all ablation variants over several seeds.
    Ablate,
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: rankprompt::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = Args {
        config: cli.config,
        checkpoint: cli.checkpoint,
        dataset: cli.dataset,
        split: cli.split,
        out: cli.out,
    };
    let result = match cli.command {
        Command::Generate => cli::cmd_generate(&args).map(|p| println!("wrote {}", p.display())),
        Command::Train => cli::cmd_train(&args).map(|c| println!("trained {} epochs", c.epoch)),
        Command::Eval => cli::cmd_eval(&args).map(|m| {
            println!(
                "macro_f1 {:.4}  macro_auc {:.4}  rank_monotonicity {:.4}  n {}",
                m.macro_f1, m.macro_auc, m.rank_monotonicity, m.n_eval
            )
        }),
        Command::Heatmap => cli::cmd_heatmap(&args).map(|p| println!("wrote {}", p.display())),
        Command::Ablate => cli::cmd_ablate(&args).map(|s| {
            for v in &s.variants {
                println!(
                    "{:<13} f1 {:.4}±{:.4}  auc {:.4}±{:.4}  mono {:.4}±{:.4}",
                    v.variant.name(),
                    v.macro_f1.mean,
                    v.macro_f1.stdev,
                    v.macro_auc.mean,
                    v.macro_auc.stdev,
                    v.rank_monotonicity.mean,
                    v.rank_monotonicity.stdev
                );
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
