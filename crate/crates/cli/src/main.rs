//! `dropauc`: train, evaluate and sweep partial-AUC optimizers, compute the
//! KL estimator's relative-error curve, and run the self-test suite.
//!
//! Exit status is 0 on success, 1 for configuration, IO or failed
//! self-test items, and 2 when training hits a numerical failure.

// `!(x > 0.0)` style guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dropauc::PaucError;

use config::{RawConfig, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("self-test: {0}")]
    Check(String),
    #[error(transparent)]
    Core(#[from] PaucError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dropauc", version, about = "Partial AUC optimization harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model; writes trace.csv, summary.json and model.json.
    Train(Common),
    /// Evaluate a saved model (`checkpoint = PATH`) on the configured data.
    Eval(Common),
    /// Relative error of the KL estimator against CVaR over a lambda grid.
    ReCurve(Common),
    /// Train every point of the `sweep.KEY = v1,v2,...` grid and rank them.
    Sweep(Common),
    /// Run the verification suite and print one line per item.
    Selftest(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for data, initialization and sampling; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn raw(&self) -> Result<RawConfig, CliError> {
        let mut overrides = self.set.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        RawConfig::load(self.config.as_deref(), &overrides)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(c) => commands::cmd_train(&RunConfig::from_raw(c.raw()?)?, &c.out),
        Command::Eval(c) => commands::cmd_eval(&RunConfig::from_raw(c.raw()?)?, &c.out),
        Command::ReCurve(c) => commands::cmd_re_curve(&RunConfig::from_raw(c.raw()?)?, &c.out),
        Command::Sweep(c) => commands::cmd_sweep(&c.raw()?, &c.out),
        Command::Selftest(c) => {
            let cfg = RunConfig::from_raw(c.raw()?)?;
            commands::cmd_selftest(cfg.seed())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
