use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edwait_cli::config::ExperimentConfig;
use edwait_cli::pipeline::{self, CommandOutput, Context};

#[derive(Parser, Debug)]
#[command(name = "edwait", version, about = "Forecast low-acuity ED waiting times and route patients between hospitals")]
struct Cli {
    /// Experiment config (TOML). Built-in defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the ED simulator and write the event log.
    Simulate {
        /// Simulated days, overriding the config.
        #[arg(long)]
        horizon_days: Option<u32>,
        /// Multiplier applied to every hourly arrival rate.
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Clean and split the log and write feature matrices.
    Featurize,
    /// Fit the forests and tune the benchmark hyperparameters.
    Train,
    /// Score every configured method on the test year.
    Evaluate {
        /// Also print the two-stage forecast update for this patient.
        #[arg(long, value_name = "PATIENT_ID")]
        update: Option<u64>,
    },
    /// Rank the forests' features.
    Importance,
    /// Route one day of patients between hospitals under each criterion.
    Route {
        /// Routing scenario, overriding the config.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> edwait_core::Result<CommandOutput> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| edwait_core::Error::Config(e.to_string()))?;
    }
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Command::Simulate { horizon_days, rate } = &cli.command {
        if let Some(d) = horizon_days {
            config.sim.horizon_days = *d;
        }
        if let Some(r) = rate {
            config.sim.arrival_rate_profile.iter_mut().for_each(|v| *v *= r);
        }
    }
    let ctx = Context::new(config, cli.seed, cli.out)?;
    match cli.command {
        Command::Simulate { .. } => pipeline::cmd_simulate(&ctx),
        Command::Featurize => pipeline::cmd_featurize(&ctx),
        Command::Train => pipeline::cmd_train(&ctx),
        Command::Evaluate { update } => pipeline::cmd_evaluate(&ctx, update),
        Command::Importance => pipeline::cmd_importance(&ctx),
        Command::Route { scenario } => pipeline::cmd_route(&ctx, scenario.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{}", out.summary);
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
