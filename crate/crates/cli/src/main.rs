//! `saesg`: fit, diagnose, analyze stability, simulate and backtest the
//! cascade from a single TOML config.
//!
//! Exit codes: 0 success, 2 invalid input or config, 3 numerical failure,
//! 4 partial success (some models failed, the rest were written).

mod commands;
mod config;
mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use saesg::estimation::{Direction, StabilityMode};
use saesg::Series;

use commands::{StabilityArgs, Status};
use output::{Outputs, RunInfo};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{context}: {source}")]
    Engine {
        context: String,
        #[source]
        source: saesg::Error,
    },
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Engine { source, .. } if source.is_numerical() => 3,
            _ => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "saesg", version, about = "Stochastic investment model calibration and scenario generation")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "saesg.toml")]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for multi-start jitter and simulation; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

fn parse_series(s: &str) -> Result<Series, String> {
    s.parse().map_err(|e: saesg::Error| e.to_string())
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    s.parse().map_err(|e: saesg::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<StabilityMode, String> {
    match s {
        "warm_start" => Ok(StabilityMode::WarmStart),
        "parallel" => Ok(StabilityMode::Parallel),
        other => Err(format!("unknown mode `{other}` (warm_start or parallel)")),
    }
}

/// Serialized name of a unit-like enum variant.
fn snake_name<T: serde::Serialize>(value: T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit every configured model in cascade order.
    Fit,
    /// KPSS test on the modelled series plus residual diagnostics of the fits.
    Diagnose {
        /// Only this series (default: every configured model).
        #[arg(long, value_parser = parse_series)]
        series: Option<Series>,
    },
    /// Recursive estimates with 95% confidence bands.
    Stability {
        #[arg(long, value_parser = parse_series)]
        series: Option<Series>,
        /// expanding_end or expanding_start.
        #[arg(long, value_parser = parse_direction)]
        direction: Option<Direction>,
        /// Fewest points per period (default 25 expanding_end, 10 expanding_start).
        #[arg(long)]
        min_obs: Option<usize>,
        /// warm_start or parallel.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<StabilityMode>,
    },
    /// Fit, then project scenarios and forecast fans.
    Simulate,
    /// Fit up to the split year and check the holdout against the fans.
    Backtest {
        #[arg(long)]
        split_year: Option<i32>,
    },
}

fn run(cli: Cli) -> Result<Status, CliError> {
    let loaded = config::load(&cli.config)?;
    let seed = cli.seed.unwrap_or(loaded.config.seed);
    let mut arguments = BTreeMap::new();
    let mut out = Outputs::create(&loaded.output_dir(cli.out.as_deref()))?;
    let (name, status) = match cli.command {
        Command::Fit => ("fit", commands::fit_command(&loaded, seed, &mut out)?),
        Command::Diagnose { series } => {
            if let Some(s) = series {
                arguments.insert("series".into(), s.to_string());
            }
            ("diagnose", commands::diagnose_command(&loaded, seed, series, &mut out)?)
        }
        Command::Stability {
            series,
            direction,
            min_obs,
            mode,
        } => {
            let section = &loaded.config.stability;
            let series = match series {
                Some(s) => s,
                None => match &section.series {
                    Some(s) => parse_series(s).map_err(CliError::Validation)?,
                    None => return Err(CliError::Validation("stability needs --series".into())),
                },
            };
            let direction = direction.unwrap_or(loaded.stability_direction());
            let min_obs = min_obs.or(section.min_obs).unwrap_or(match direction {
                Direction::ExpandingEnd => 25,
                Direction::ExpandingStart => 10,
            });
            let args = StabilityArgs {
                series,
                direction,
                min_obs,
                mode: mode.unwrap_or(section.mode),
            };
            arguments.insert("series".into(), series.to_string());
            arguments.insert("direction".into(), snake_name(direction));
            arguments.insert("min_obs".into(), min_obs.to_string());
            arguments.insert("mode".into(), snake_name(args.mode));
            ("stability", commands::stability_command(&loaded, seed, &args, &mut out)?)
        }
        Command::Simulate => ("simulate", commands::simulate_command(&loaded, seed, &mut out)?),
        Command::Backtest { split_year } => {
            let split_year = split_year
                .or(loaded.config.backtest.split_year)
                .ok_or_else(|| CliError::Validation("backtest needs --split-year".into()))?;
            arguments.insert("split_year".into(), split_year.to_string());
            ("backtest", commands::backtest_command(&loaded, seed, split_year, &mut out)?)
        }
    };
    out.finish(RunInfo {
        command: name.to_string(),
        arguments,
        config_path: cli.config.clone(),
        config_bytes: loaded.bytes.clone(),
        seed,
    })?;
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(Status::Complete) => ExitCode::SUCCESS,
        Ok(Status::Partial(msg)) => {
            eprintln!("saesg: partial success: {msg}");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("saesg: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
