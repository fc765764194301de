use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use neurofault::harness::{self, ExperimentConfig, Profile};
use neurofault::HarnessError;

/// Distributed neural network simulator with fault injection.
#[derive(Parser, Debug)]
#[command(name = "neurofault", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config overlaid on the profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides `experiment.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to $NEUROFAULT_OUT or `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Repetitions per sweep point; overrides `experiment.reps`.
    #[arg(long, global = true)]
    reps: Option<usize>,
    #[arg(long, global = true, default_value = "desk")]
    profile: Profile,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one network and save its weights, patterns and training log.
    Train(Common),
    /// Degradation of a trained network under operation-phase faults.
    Operate {
        #[command(flatten)]
        common: Common,
        /// Weight file; defaults to `<out>/weights.txt`.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Pattern file; defaults to `<out>/patterns.csv`.
        #[arg(long)]
        patterns: Option<PathBuf>,
    },
    /// Training cost under learning-phase faults.
    LearnFaults(Common),
    /// Training cost against the number of equilibration steps.
    EquilSweep(Common),
    /// Weight histograms at the initial, equilibrated and trained stages.
    Hist(Common),
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
        let mut cfg = harness::load_config(self.config.as_deref(), self.profile)?;
        if let Some(seed) = self.seed {
            cfg.experiment.seed = seed;
        }
        if let Some(reps) = self.reps {
            cfg.experiment.reps = reps;
        }
        cfg.validate()?;
        let out = self
            .out
            .clone()
            .or_else(|| std::env::var_os("NEUROFAULT_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, out))
    }
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Train(c) => {
            let (cfg, out) = c.resolve()?;
            let converged = harness::cmd_train(&cfg, &out)?;
            if !converged {
                eprintln!("training did not converge within {} cycles", cfg.training.max_cycles);
                return Ok(ExitCode::from(2));
            }
        }
        Command::Operate {
            common,
            weights,
            patterns,
        } => {
            let (cfg, out) = common.resolve()?;
            let weights = weights.unwrap_or_else(|| out.join("weights.txt"));
            let patterns = patterns.unwrap_or_else(|| out.join("patterns.csv"));
            harness::cmd_operate(&cfg, &weights, &patterns, &out)?;
        }
        Command::LearnFaults(c) => {
            let (cfg, out) = c.resolve()?;
            harness::cmd_learn_faults(&cfg, &out)?;
        }
        Command::EquilSweep(c) => {
            let (cfg, out) = c.resolve()?;
            harness::cmd_equil_sweep(&cfg, &out)?;
        }
        Command::Hist(c) => {
            let (cfg, out) = c.resolve()?;
            harness::cmd_hist(&cfg, &out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
