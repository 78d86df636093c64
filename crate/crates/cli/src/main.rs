use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shortcot::commands::{self, AnalyzeArgs, EvalArgs, PretrainArgs, TrainArgs};

#[derive(Parser)]
#[command(
    name = "shortcot",
    version,
    about = "Length-penalized GRPO laboratory for bi-level plan/scene generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain a verbose-plan policy and write its checkpoint.
    Pretrain {
        /// Config file (flat `key = value` lines).
        config: PathBuf,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint output path (default: config `pretrain.out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Additional `key=value` overrides (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run one GRPO training run into a run directory.
    Train {
        /// Config file (flat `key = value` lines).
        config: PathBuf,
        /// Penalty strategy: none, cap, target, hard, soft.
        #[arg(long)]
        strategy: Option<String>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory (default: config `train.out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Additional `key=value` overrides (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Evaluate a checkpoint over a generated benchmark suite.
    Eval {
        /// Parameter or trainer checkpoint file.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Seed of the generated suite (default 0).
        #[arg(long = "suite-seed")]
        suite_seed: Option<u64>,
        /// Evaluation seeds, comma separated (default 1,2,3,4).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Force the no-plan arm (immediate end-of-plan marker).
        #[arg(long = "no-cot")]
        no_cot: bool,
        /// Output directory.
        #[arg(long, default_value = "eval")]
        out: PathBuf,
    },
    /// Build the analysis bundle from one or more run directories.
    Analyze {
        /// Run directories (each with config.snapshot, log.jsonl, final.bin).
        #[arg(long, required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "analysis")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter_or("SHORTCOT_LOG_LEVEL", "warn")
            .write_style("SHORTCOT_LOG_STYLE"),
    )
    .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pretrain {
            config,
            seed,
            out,
            set,
        } => commands::cmd_pretrain(&PretrainArgs {
            config,
            seed,
            out,
            set,
        })
        .map(|path| log::info!("checkpoint written to {}", path.display())),
        Command::Train {
            config,
            strategy,
            seed,
            out,
            set,
        } => commands::cmd_train(&TrainArgs {
            config,
            strategy,
            seed,
            out,
            set,
        })
        .map(|dir| log::info!("run directory: {}", dir.display())),
        Command::Eval {
            checkpoint,
            suite_seed,
            seeds,
            no_cot,
            out,
        } => commands::cmd_eval(&EvalArgs {
            checkpoint,
            suite_seed,
            seeds,
            no_cot,
            out,
        })
        .map(|dir| log::info!("reports written to {}", dir.display())),
        Command::Analyze { runs, out } => commands::cmd_analyze(&AnalyzeArgs { runs, out })
            .map(|dir| log::info!("analysis written to {}", dir.display())),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
