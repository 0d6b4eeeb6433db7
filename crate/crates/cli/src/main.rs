//! `evci`: EVCI siting, charging simulation, pricing and price forecasting.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numerical failure.

mod commands;
mod config;
mod manifest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "evci", version, about = "Plan fast-charging EV infrastructure on a radial feeder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Directory with buses.csv and branches.csv (default: the bundled 33-bus feeder).
    #[arg(long, value_name = "DIR")]
    pub feeder: Option<PathBuf>,
    /// Seed for every random component.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// TOML file with [feeder], [siting], [loadflow], [pso], [sim], [tariff], [grid_price] and [forecast] sections.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel load flows (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Treat load-flow non-convergence as a failure (exit 3).
    #[arg(long)]
    pub strict: bool,
    /// Record wall-clock timestamps in the manifest.
    #[arg(long)]
    pub record_time: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SitingArgs {
    /// Number of EVCIs.
    #[arg(long)]
    pub n: Option<usize>,
    /// Rating of each EVCI in kW.
    #[arg(long)]
    pub evci_kw: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate every placement and write the objective cloud and Pareto front.
    Enumerate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        siting: SitingArgs,
    },
    /// Place EVCIs with multi-objective PSO and compare against the base case.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        siting: SitingArgs,
        /// Also enumerate all placements and check the result is not dominated.
        #[arg(long)]
        verify_oracle: bool,
    },
    /// Simulate EV charging at a placement and run hourly load flows.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// placement.json written by `optimize`.
        #[arg(long, value_name = "FILE", conflicts_with = "locations")]
        placement: Option<PathBuf>,
        /// Comma-separated EVCI buses, e.g. 8,15,16,17,18.
        #[arg(long, value_delimiter = ',')]
        locations: Option<Vec<usize>>,
        /// Rating of each EVCI in kW when using --locations.
        #[arg(long)]
        evci_kw: Option<f64>,
        /// Simulation horizon in days.
        #[arg(long)]
        days: Option<usize>,
        /// Hourly base-load multipliers (`hour,multiplier`); default is a seeded diurnal curve.
        #[arg(long, value_name = "FILE")]
        scaling: Option<PathBuf>,
    },
    /// Price EVCI energy by period and settle daily profits against grid prices.
    Price {
        #[command(flatten)]
        common: Common,
        /// Output directory of `simulate`.
        #[arg(long, value_name = "DIR")]
        sim: PathBuf,
        /// Hourly grid price (`hour,price`); default is a seeded synthetic series.
        #[arg(long, value_name = "FILE")]
        grid_price: Option<PathBuf>,
    },
    /// Fit an ARIMA model to a price series and forecast a holdout.
    Forecast {
        #[command(flatten)]
        common: Common,
        /// Price series (`hour,price`), e.g. evci_price.csv from `price`.
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Number of final points held out for scoring.
        #[arg(long)]
        holdout: Option<usize>,
        /// Fixed order `p,d,q` instead of automatic selection.
        #[arg(long, value_delimiter = ',')]
        order: Option<Vec<usize>>,
    },
}

/// Numerical failure; anything else is treated as a usage or input error.
#[derive(Debug)]
pub struct Numerical(pub String);

impl std::fmt::Display for Numerical {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Numerical {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Enumerate { common, siting } => commands::enumerate(&common, &siting),
        Command::Optimize { common, siting, verify_oracle } => commands::optimize(&common, &siting, verify_oracle),
        Command::Simulate { common, placement, locations, evci_kw, days, scaling } => {
            commands::simulate(&common, placement.as_deref(), locations, evci_kw, days, scaling.as_deref())
        }
        Command::Price { common, sim, grid_price } => commands::price(&common, &sim, grid_price.as_deref()),
        Command::Forecast { common, input, holdout, order } => commands::forecast(&common, &input, holdout, order),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Numerical>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
