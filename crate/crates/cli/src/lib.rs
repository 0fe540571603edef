//! Command-line driver: config handling, dataset files and the experiment
//! subcommands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::Simulation;
pub use config::ExperimentConfig;
pub use error::{Category, CliError};

#[derive(Debug, Parser)]
#[command(name = "dwml", version, about = "Embedding-learning experiments and simulations")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the `out` key (output directory).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides any config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes metrics, a checkpoint and the resolved config.
    Train,
    /// Evaluate a checkpoint on the held-out classes.
    Eval {
        /// Defaults to `<out>/checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Monte-Carlo tables.
    Simulate {
        #[command(subcommand)]
        which: SimulateCommand,
    },
    /// Compare the optimal-boundary margin risk with its LP on random instances.
    Isotonic,
    /// Dataset utilities.
    Dataset {
        #[command(subcommand)]
        action: DatasetCommand,
    },
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum SimulateCommand {
    /// Sphere pairwise-distance density, one column per dimension.
    Density,
    /// Trace of the covariance of the noisy gradient direction.
    Variance,
    /// Histograms of sampled negative distances per strategy.
    SamplerHist,
    /// Held-out negative-pair distance histogram after every epoch.
    PairwiseHist,
    /// Optimal verification threshold over training, margin vs triplet.
    Stability,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum DatasetCommand {
    /// Write the synthetic dataset described by the `data.*` keys.
    Gen,
}

impl From<SimulateCommand> for Simulation {
    fn from(c: SimulateCommand) -> Self {
        match c {
            SimulateCommand::Density => Simulation::Density,
            SimulateCommand::Variance => Simulation::Variance,
            SimulateCommand::SamplerHist => Simulation::SamplerHist,
            SimulateCommand::PairwiseHist => Simulation::PairwiseHist,
            SimulateCommand::Stability => Simulation::Stability,
        }
    }
}

impl Cli {
    /// Defaults, then the config file, then `--set`, then `--seed`/`--out`.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Command::Eval { checkpoint: Some(p) } = &self.command {
            cfg.checkpoint = Some(p.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn run(&self) -> Result<String, CliError> {
        let cfg = self.resolve()?;
        match &self.command {
            Command::Train => commands::run_train(&cfg),
            Command::Eval { .. } => commands::run_eval(&cfg),
            Command::Simulate { which } => commands::run_simulate(&cfg, (*which).into()),
            Command::Isotonic => commands::run_isotonic(&cfg),
            Command::Dataset {
                action: DatasetCommand::Gen,
            } => commands::run_dataset_gen(&cfg),
        }
    }
}
