use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use leapgrid_cli::commands::report_files;
use leapgrid_cli::{bench, eval, eval_one, exit_code, gen_data, report, train, ExperimentConfig, Failure, Layout};

#[derive(Parser)]
#[command(name = "leapgrid", version, about = "LEAP net surrogates for power-grid flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Dataset seed for gen-data; single training seed for train, eval and bench.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample injections, run the AC oracle and write the three dataset files.
    GenData(Common),
    /// Train every configured model and seed; writes checkpoints and metrics CSVs.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from existing checkpoints.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate checkpoints and the DC approximation on all splits.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Evaluate just this checkpoint (requires --dataset).
        #[arg(long, requires = "dataset")]
        checkpoint: Option<PathBuf>,
        #[arg(long, requires = "checkpoint")]
        dataset: Option<PathBuf>,
    },
    /// Time the AC oracle against batched network inference.
    Bench(Common),
    /// Median and [20%, 80%] bands across seeds from the metrics CSVs.
    Report {
        #[command(flatten)]
        common: Common,
        /// Explicit metrics CSVs instead of the experiment's metrics directory.
        #[arg(long, num_args = 1..)]
        metrics: Vec<PathBuf>,
    },
}

fn setup(common: &Common) -> anyhow::Result<(ExperimentConfig, Layout)> {
    let cfg = ExperimentConfig::load(&common.config)?;
    let root = common.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    Ok((cfg, Layout::new(root)))
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData(c) => {
            let (cfg, layout) = setup(&c)?;
            print_json(&gen_data(&cfg, &layout, c.seed)?)
        }
        Command::Train { common, resume } => {
            let (cfg, layout) = setup(&common)?;
            for run in train(&cfg, &layout, common.seed, resume)? {
                if let Some(last) = run.rows.last() {
                    println!("{} seed {}: epoch {} done", run.model, run.seed, last.epoch);
                }
            }
            Ok(())
        }
        Command::Eval { common, checkpoint, dataset } => match (checkpoint, dataset) {
            (Some(ckpt), Some(ds)) => print_json(&eval_one(&ckpt, &ds)?),
            _ => {
                let (cfg, layout) = setup(&common)?;
                eval(&cfg, &layout, common.seed)?;
                println!("wrote {}", layout.summary().display());
                Ok(())
            }
        },
        Command::Bench(c) => {
            let (cfg, layout) = setup(&c)?;
            print_json(&bench(&cfg, &layout, c.seed)?)
        }
        Command::Report { common, metrics } => {
            let (_, layout) = setup(&common)?;
            if metrics.is_empty() {
                report(&layout)?;
            } else {
                report_files(&metrics, &layout.report())?;
            }
            println!("wrote {}", layout.report().display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Failure::Input.exit_code() as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
