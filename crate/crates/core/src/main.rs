use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use turbo_twin::cli::{self, EvalFlags, TrainFlags};
use turbo_twin::data::Split;
use turbo_twin::eval::DEFAULT_EXTRACTOR_SEED;

#[derive(Parser)]
#[command(
    name = "turbo-twin",
    version,
    about = "Train and evaluate a printing-channel digital twin"
)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic dataset described by an experiment file.
    Simulate { config: PathBuf },
    /// Train the experiment's model and evaluate it on the test split.
    Train {
        config: PathBuf,
        /// Parent of the run directory (default: $TURBO_TWIN_RUN_ROOT or ./runs).
        #[arg(long)]
        run_root: Option<PathBuf>,
        /// Continue from checkpoints/latest.ckpt.
        #[arg(long, conflicts_with = "overwrite")]
        resume: bool,
        /// Delete an existing run directory first.
        #[arg(long)]
        overwrite: bool,
    },
    /// Evaluate a checkpoint on a dataset directory.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Extra checkpoints shown in the sample grid.
        #[arg(long)]
        compare: Vec<PathBuf>,
        /// Directory holding manifest.csv.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        crop: Option<usize>,
        #[arg(long, default_value = "eval")]
        out: PathBuf,
        /// Samples in the sample grid.
        #[arg(long, default_value_t = 4)]
        grid: usize,
        /// Also write a 2-D embedding of real and generated images.
        #[arg(long)]
        embed: bool,
        #[arg(long, default_value_t = DEFAULT_EXTRACTOR_SEED)]
        extractor_seed: u64,
    },
    /// Compare finished runs in one table.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn run(args: Args) -> anyhow::Result<()> {
    match args.cmd {
        Cmd::Simulate { config } => {
            let exp = cli::load_experiment(&config)?;
            let m = cli::cmd_simulate(&exp)?;
            println!("{}", cli::manifest_summary(&m));
        }
        Cmd::Train {
            config,
            run_root,
            resume,
            overwrite,
        } => {
            let exp = cli::load_experiment(&config)?;
            let (dir, rec) = cli::cmd_train(
                &exp,
                &TrainFlags {
                    run_root,
                    resume,
                    overwrite,
                },
            )?;
            println!("{}", dir.display());
            println!("{}", serde_json::to_string_pretty(&rec.report)?);
        }
        Cmd::Evaluate {
            checkpoint,
            compare,
            data,
            split,
            crop,
            out,
            grid,
            embed,
            extractor_seed,
        } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
                SplitArg::All => Split::Unassigned,
            };
            let report = cli::cmd_evaluate(&EvalFlags {
                checkpoint,
                compare,
                data,
                split,
                crop,
                out,
                grid,
                embed,
                extractor_seed,
            })?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Cmd::Report { runs, csv } => {
            let (table_csv, text) = cli::cmd_report(&runs)?;
            print!("{text}");
            if let Some(p) = csv {
                std::fs::write(&p, table_csv)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
