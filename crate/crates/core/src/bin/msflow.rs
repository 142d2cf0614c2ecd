use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use msflow::harness::{
    cmd_ablate, cmd_eval, cmd_gen_data, cmd_sample, cmd_train, AblationAxis, Checkpoint,
    TrainConfig, NFE_GRID,
};
use msflow::Error;

#[derive(Parser)]
#[command(
    name = "msflow",
    version,
    about = "Multi-step consistency flow matching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the task's training data.
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Overrides seeds.data.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and write checkpoint.msck, metrics.csv and config.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dataset file; generated from the config when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Overrides seeds.init and seeds.train.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw samples from a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Sampler steps (NFE).
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long, default_value_t = 4096)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dataset to take conditions from (conditional checkpoints).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also write an SVG scatter plot.
        #[arg(long)]
        svg: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint at several NFE values.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated NFE list.
        #[arg(long, value_delimiter = ',', default_values_t = NFE_GRID)]
        steps: Vec<usize>,
        /// Expected task; checked against the checkpoint.
        #[arg(long)]
        task: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an ablation grid (three seeds per point).
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// schedule, init-c, nfe or aga-onoff.
        #[arg(long)]
        axis: String,
        /// NFE list for the nfe axis; first entry is used on other axes.
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<usize>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownDataset(_) | Error::Json(_) => 2,
        Error::NonFinite(_) => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> msflow::Result<()> {
    match cli.command {
        Command::GenData { config, seed, out } => {
            let mut cfg = TrainConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds.data = s;
            }
            let path = cmd_gen_data(&cfg, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Train {
            config,
            data,
            seed,
            out,
        } => {
            let mut cfg = TrainConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds.init = s;
                cfg.seeds.train = s;
            }
            let art = match cmd_train(&cfg, data.as_deref(), &out) {
                Ok(a) => a,
                Err(e) => {
                    if let Error::NonFinite(_) = e {
                        eprintln!(
                            "training aborted; last good checkpoint kept in {}",
                            out.display()
                        );
                    }
                    return Err(e);
                }
            };
            let ck = Checkpoint::load(&art.checkpoint)?;
            println!(
                "trained {} epochs, c = {:.4}; wrote {} and {}",
                ck.header.epoch,
                ck.header.aga.c,
                art.checkpoint.display(),
                art.metrics.display()
            );
        }
        Command::Sample {
            checkpoint,
            steps,
            count,
            seed,
            data,
            svg,
            out,
        } => {
            let path = cmd_sample(&checkpoint, steps, count, seed, data.as_deref(), &out, svg)?;
            println!("wrote {} (NFE {steps})", path.display());
        }
        Command::Eval {
            checkpoint,
            steps,
            task,
            seed,
            out,
        } => {
            let report = cmd_eval(&checkpoint, task.as_deref(), &steps, seed, &out)?;
            print!("{}", report.to_csv());
        }
        Command::Ablate {
            config,
            axis,
            steps,
            seed,
            out,
        } => {
            let cfg = TrainConfig::load(&config)?;
            let axis: AblationAxis = axis.parse()?;
            let table = cmd_ablate(&cfg, axis, steps.as_deref(), seed, &out, |label, s, v| {
                eprintln!("{axis} {label} seed#{s}: {v:.4}");
            })?;
            print!("{}", table.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
