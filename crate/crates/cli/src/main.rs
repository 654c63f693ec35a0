//! `copula-dbn`: generate data, fit copulas, train, forecast and evaluate.
//!
//! Exit codes: 0 success, 1 computation failure, 2 usage or I/O failure.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{FileConfig, Pipeline};

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<copula_dbn::Error> for Failure {
    fn from(e: copula_dbn::Error) -> Self {
        Self {
            code: if e.is_usage() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "copula-dbn",
    version,
    about = "Copula-augmented deep belief network load forecasting"
)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Shared {
    /// Flat TOML file with any of the pipeline keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Input CSV (defaults to <out>/data.csv).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    season: Option<String>,
    /// day_ahead or week_ahead.
    #[arg(long, global = true)]
    horizon: Option<String>,
    /// Forecast origin, e.g. 2016-07-15T00:00:00. Repeat for several.
    #[arg(long, global = true)]
    anchor: Vec<String>,
    /// Train and forecast without the peak-load indicator inputs.
    #[arg(long, global = true)]
    no_indicators: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic hourly scenario to <out>/data.csv.
    Gen(GenArgs),
    /// Fit the temperature and price copulas on data before the anchor.
    FitCopula(FitCopulaArgs),
    /// Train one model on the window before the anchor.
    Train(TrainArgs),
    /// Recursive forecast from the anchor with a saved model.
    Forecast(ForecastArgs),
    /// Score a saved trace, or run full experiments with --algorithms.
    Evaluate(EvaluateArgs),
    /// Scan hidden widths, then depths, on a subsample.
    StructureSearch(SearchArgs),
    /// Box-Cox and normality tests per variable.
    NormalityReport(NormalityArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    alpha_temp: Option<f64>,
    #[arg(long)]
    alpha_price: Option<f64>,
    #[arg(long)]
    spike_amp: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    /// First timestamp of the scenario.
    #[arg(long)]
    start: Option<String>,
}

#[derive(Args, Debug)]
struct FitCopulaArgs {
    /// VaR percentile.
    #[arg(long)]
    p: Option<f64>,
    /// Output document (defaults to <out>/copula.json).
    #[arg(long)]
    copula: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// copula-dbn, dbn, mlp or elm.
    #[arg(long)]
    algorithm: Option<String>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    max_finetune_epochs: Option<usize>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    copula: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    copula: Option<PathBuf>,
    /// Defaults to the horizon's validation length.
    #[arg(long)]
    hours: Option<usize>,
    /// Defaults to the first anchor.
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Train and score these algorithms at every anchor.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    #[arg(long)]
    hr_tol: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    max_finetune_epochs: Option<usize>,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    max_width: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    max_finetune_epochs: Option<usize>,
    #[arg(long)]
    copula: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NormalityArgs {
    /// Monte Carlo replications for the Lilliefors null distribution.
    #[arg(long)]
    lilliefors_reps: Option<usize>,
}

impl Cli {
    /// The flag layer, in the same shape as the config file.
    fn flags(&self) -> FileConfig {
        let s = &self.shared;
        let mut c = FileConfig {
            seed: s.seed,
            data: s.data.clone(),
            out: s.out.clone(),
            season: s.season.clone(),
            horizon: s.horizon.clone(),
            anchors: (!s.anchor.is_empty()).then(|| s.anchor.clone()),
            no_indicators: s.no_indicators.then_some(true),
            ..FileConfig::default()
        };
        match &self.command {
            Command::Gen(a) => {
                c.days = a.days;
                c.alpha_temp = a.alpha_temp;
                c.alpha_price = a.alpha_price;
                c.spike_amp = a.spike_amp;
                c.noise_sd = a.noise_sd;
                c.scenario_start = a.start.clone();
            }
            Command::FitCopula(a) => {
                c.p = a.p;
                c.copula = a.copula.clone();
            }
            Command::Train(a) => {
                c.algorithm = a.algorithm.clone();
                c.hidden = a.hidden.clone();
                c.pretrain_epochs = a.pretrain_epochs;
                c.max_finetune_epochs = a.max_finetune_epochs;
                c.model = a.model.clone();
                c.copula = a.copula.clone();
            }
            Command::Forecast(a) => {
                c.model = a.model.clone();
                c.copula = a.copula.clone();
                c.hours = a.hours;
                c.start = a.start.clone();
                c.trace = a.trace.clone();
            }
            Command::Evaluate(a) => {
                c.trace = a.trace.clone();
                c.model = a.model.clone();
                c.algorithms = a.algorithms.clone();
                c.hr_tol = a.hr_tol;
                c.hidden = a.hidden.clone();
                c.pretrain_epochs = a.pretrain_epochs;
                c.max_finetune_epochs = a.max_finetune_epochs;
            }
            Command::StructureSearch(a) => {
                c.max_width = a.max_width;
                c.max_depth = a.max_depth;
                c.pretrain_epochs = a.pretrain_epochs;
                c.max_finetune_epochs = a.max_finetune_epochs;
                c.copula = a.copula.clone();
            }
            Command::NormalityReport(a) => c.lilliefors_reps = a.lilliefors_reps,
        }
        c
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let file = match &cli.shared.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let p = Pipeline::resolve(cli.flags().over(file))?;
    match cli.command {
        Command::Gen(_) => commands::gen(&p),
        Command::FitCopula(_) => commands::fit_copula(&p),
        Command::Train(_) => commands::train(&p),
        Command::Forecast(_) => commands::forecast(&p),
        Command::Evaluate(_) => commands::evaluate(&p),
        Command::StructureSearch(_) => commands::structure_search(&p),
        Command::NormalityReport(_) => commands::normality_report(&p),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
