use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crwn::geometry::{ReconstructConfig, SigmaMode};
use crwn::tasks::SuiteName;
use crwn_cli::commands::{self, Analysis};
use crwn_cli::config::{default_data_dir, ExperimentConfig, Seeds};
use crwn_cli::fetch;
use crwn_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "crwn", version, about = "Train and analyze randomly weighted networks with per-task contexts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download the four MNIST IDX files and verify their checksums.
    FetchMnist {
        #[arg(long)]
        dest: Option<PathBuf>,
        #[arg(long, default_value = fetch::DEFAULT_MIRROR)]
        mirror: String,
    },
    /// Train every task of a suite in order and write a run directory.
    Train(TrainArgs),
    /// Run analyses on a trained run. Without --which, lists them.
    Analyze {
        run_dir: PathBuf,
        /// Comma-separated analysis names.
        #[arg(long, default_value = "")]
        which: String,
        /// Second run for shift-consistency.
        #[arg(long)]
        against: Option<PathBuf>,
    },
    /// Reconstruct class prototypes through the encoder pseudo-inverse.
    Reconstruct {
        run_dir: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        classes: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        tasks: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma_scale: f64,
        #[arg(long, value_enum, default_value_t = Sigma::Std)]
        sigma_mode: Sigma,
    },
    /// Summarize a run directory into report.md.
    Report { run_dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Sigma {
    Std,
    Variance,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    suite: Option<String>,
    /// Keep this many evenly spaced tasks.
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// Sets the weight, context, shuffle and transform seeds together.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    l1: Option<f64>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long)]
    test_limit: Option<usize>,
    /// Feed raw [0, 1] pixels instead of unit-norm inputs.
    #[arg(long)]
    no_unit_sphere: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl TrainArgs {
    fn resolve(self) -> CliResult<(ExperimentConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.suite {
            cfg.suite = s
                .parse::<SuiteName>()
                .map_err(|e| CliError::usage("suite", e.to_string()))?;
        }
        if self.tasks.is_some() {
            cfg.tasks = self.tasks;
        }
        if let Some(w) = self.width {
            cfg.width = w;
        }
        if let Some(s) = self.seed {
            cfg.seeds = Seeds::all(s);
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.train.learning_rate = lr;
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
        if let Some(l1) = self.l1 {
            cfg.train.l1_on_v = l1;
        }
        if let Some(d) = self.data_dir {
            cfg.data_dir = d;
        }
        if self.train_limit.is_some() {
            cfg.train_limit = self.train_limit;
        }
        if self.test_limit.is_some() {
            cfg.test_limit = self.test_limit;
        }
        if self.no_unit_sphere {
            cfg.train.unit_sphere = false;
        }
        if self.out.is_some() {
            cfg.output_dir = self.out;
        }
        let out = cfg.output_dir.clone().unwrap_or_else(|| cfg.default_output_dir());
        Ok((cfg, out))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::FetchMnist { dest, mirror } => {
            let dest = dest.unwrap_or_else(default_data_dir);
            let fetched = fetch::fetch_mnist(&mirror, &dest)?;
            if fetched.is_empty() {
                println!("all MNIST files present and verified in {}", dest.display());
            } else {
                println!("fetched {} into {}", fetched.join(", "), dest.display());
            }
        }
        Command::Train(args) => {
            let (cfg, out) = args.resolve()?;
            let summary = commands::cmd_train(&cfg, &out, |r| {
                eprintln!(
                    "task {:>3} {:<12} test acc {:.4} ({:.1}s)",
                    r.task_id, r.label, r.test_accuracy, r.wall_time_secs
                );
            })?;
            println!(
                "{}: {} tasks, mean final accuracy {:.4}, zero forgetting {}",
                out.display(),
                summary.tasks,
                summary.final_mean_accuracy,
                summary.zero_forgetting
            );
        }
        Command::Analyze { run_dir, which, against } => {
            let which = commands::parse_analyses(&which)?;
            if which.is_empty() {
                println!("available analyses:");
                for a in Analysis::ALL {
                    println!("  {:<18} {}", a.name(), a.describe());
                }
                return Ok(());
            }
            for p in commands::cmd_analyze(&run_dir, &which, against.as_deref())? {
                println!("{}", p.display());
            }
        }
        Command::Reconstruct { run_dir, classes, tasks, seed, samples, sigma_scale, sigma_mode } => {
            let cfg = ReconstructConfig {
                sigma_mode: match sigma_mode {
                    Sigma::Std => SigmaMode::Std,
                    Sigma::Variance => SigmaMode::Variance,
                },
                sigma_scale,
                samples,
            };
            for p in commands::cmd_reconstruct(&run_dir, &classes, &tasks, seed, &cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Report { run_dir } => {
            print!("{}", commands::cmd_report(&run_dir)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
