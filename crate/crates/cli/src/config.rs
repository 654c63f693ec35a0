//! Pipeline settings: command-line flags override the TOML file, which
//! overrides the built-in defaults.

use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use copula_dbn::baselines::DEFAULT_ELM_HIDDEN;
use copula_dbn::copula::DEFAULT_P;
use copula_dbn::dbn::{TrainConfig, DEFAULT_HIDDEN};
use copula_dbn::eval::{Algorithm, ExperimentSettings, DEFAULT_HR_TOL};
use copula_dbn::ingest::{parse_timestamp, Horizon, Season};
use copula_dbn::synthgen::ScenarioConfig;
use copula_dbn::transform::{DEFAULT_LILLIEFORS_REPS, MIN_LILLIEFORS_REPS};
use serde::Deserialize;

use crate::Failure;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_OUT: &str = "out";

/// Every key the config file accepts. All keys are optional.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub season: Option<String>,
    pub horizon: Option<String>,
    pub anchors: Option<Vec<String>>,
    pub no_indicators: Option<bool>,

    pub model: Option<PathBuf>,
    pub copula: Option<PathBuf>,
    pub trace: Option<PathBuf>,

    pub p: Option<f64>,
    pub hr_tol: Option<f64>,
    pub beta: Option<f64>,
    pub eta_pretrain: Option<f64>,
    pub eta_finetune: Option<f64>,
    pub pretrain_epochs: Option<usize>,
    pub max_finetune_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub elm_hidden: Option<usize>,
    pub algorithm: Option<String>,
    pub algorithms: Option<Vec<String>>,
    pub hours: Option<usize>,
    pub start: Option<String>,

    pub alpha_temp: Option<f64>,
    pub alpha_price: Option<f64>,
    pub days: Option<usize>,
    pub scenario_start: Option<String>,
    pub base_load: Option<f64>,
    pub daily_amp: Option<f64>,
    pub weekly_amp: Option<f64>,
    pub noise_sd: Option<f64>,
    pub spike_amp: Option<f64>,

    pub max_width: Option<usize>,
    pub max_depth: Option<usize>,
    pub lilliefors_reps: Option<usize>,
    pub boxcox_fraction: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
    }

    /// Keeps every key set in `self`, filling the rest from `lower`.
    pub fn over(self, lower: FileConfig) -> FileConfig {
        macro_rules! pick {
            ($($f:ident),* $(,)?) => {
                FileConfig { $($f: self.$f.or(lower.$f),)* }
            };
        }
        pick!(
            seed,
            data,
            out,
            season,
            horizon,
            anchors,
            no_indicators,
            model,
            copula,
            trace,
            p,
            hr_tol,
            beta,
            eta_pretrain,
            eta_finetune,
            pretrain_epochs,
            max_finetune_epochs,
            batch_size,
            hidden,
            elm_hidden,
            algorithm,
            algorithms,
            hours,
            start,
            alpha_temp,
            alpha_price,
            days,
            scenario_start,
            base_load,
            daily_amp,
            weekly_amp,
            noise_sd,
            spike_amp,
            max_width,
            max_depth,
            lilliefors_reps,
            boxcox_fraction,
        )
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub seed: u64,
    pub data: PathBuf,
    pub out: PathBuf,
    pub season: Season,
    pub horizon: Horizon,
    pub anchors: Vec<NaiveDateTime>,
    pub indicators: bool,
    pub model: PathBuf,
    pub copula: PathBuf,
    pub trace: PathBuf,
    pub settings: ExperimentSettings,
    pub algorithm: Algorithm,
    pub algorithms: Vec<Algorithm>,
    pub hours: Option<usize>,
    pub start: Option<NaiveDateTime>,
    pub scenario: ScenarioConfig,
    pub max_width: usize,
    pub max_depth: usize,
    pub lilliefors_reps: usize,
    pub boxcox_fraction: f64,
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, Failure>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| Failure::usage(format!("{key}: {e}")))
}

fn timestamp(key: &str, v: &str) -> Result<NaiveDateTime, Failure> {
    parse_timestamp(v).map_err(|e| Failure::usage(format!("{key}: {e}")))
}

impl Pipeline {
    pub fn resolve(c: FileConfig) -> Result<Self, Failure> {
        let seed = c.seed.unwrap_or(DEFAULT_SEED);
        let out = c.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            eta_pretrain: c.eta_pretrain.unwrap_or(defaults.eta_pretrain),
            eta_finetune: c.eta_finetune.unwrap_or(defaults.eta_finetune),
            pretrain_epochs: c.pretrain_epochs.unwrap_or(defaults.pretrain_epochs),
            max_finetune_epochs: c.max_finetune_epochs.unwrap_or(defaults.max_finetune_epochs),
            batch_size: c.batch_size.unwrap_or(defaults.batch_size),
            beta: c.beta.unwrap_or(defaults.beta),
            seed,
        };
        train.validate()?;
        let settings = ExperimentSettings {
            train,
            hidden: c.hidden.unwrap_or_else(|| DEFAULT_HIDDEN.to_vec()),
            elm_hidden: c.elm_hidden.unwrap_or(DEFAULT_ELM_HIDDEN),
            p: c.p.unwrap_or(DEFAULT_P),
            hr_tol: c.hr_tol.unwrap_or(DEFAULT_HR_TOL),
        };
        if settings.hidden.is_empty() || settings.hidden.contains(&0) {
            return Err(Failure::usage(format!(
                "hidden widths {:?} must be positive",
                settings.hidden
            )));
        }
        if !(settings.hr_tol > 0.0 && settings.hr_tol.is_finite()) {
            return Err(Failure::usage(format!(
                "hr_tol must be positive, got {}",
                settings.hr_tol
            )));
        }

        let lilliefors_reps = c.lilliefors_reps.unwrap_or(DEFAULT_LILLIEFORS_REPS);
        if lilliefors_reps < MIN_LILLIEFORS_REPS {
            return Err(Failure::usage(format!(
                "lilliefors_reps must be at least {MIN_LILLIEFORS_REPS}, got {lilliefors_reps}"
            )));
        }

        let indicators = !c.no_indicators.unwrap_or(false);
        let mut algorithm: Algorithm = parse("algorithm", c.algorithm.as_deref().unwrap_or("copula-dbn"))?;
        if !indicators && algorithm == Algorithm::CopulaDbn {
            algorithm = Algorithm::Dbn;
        }
        let algorithms = c
            .algorithms
            .unwrap_or_default()
            .iter()
            .map(|a| parse::<Algorithm>("algorithms", a))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|a| indicators || *a != Algorithm::CopulaDbn)
            .collect();

        let base = ScenarioConfig::default();
        let scenario = ScenarioConfig {
            alpha_temp: c.alpha_temp.unwrap_or(base.alpha_temp),
            alpha_price: c.alpha_price.unwrap_or(base.alpha_price),
            days: c.days.unwrap_or(base.days),
            start: match &c.scenario_start {
                Some(s) => timestamp("scenario_start", s)?,
                None => base.start,
            },
            base_load: c.base_load.unwrap_or(base.base_load),
            daily_amp: c.daily_amp.unwrap_or(base.daily_amp),
            weekly_amp: c.weekly_amp.unwrap_or(base.weekly_amp),
            noise_sd: c.noise_sd.unwrap_or(base.noise_sd),
            spike_amp: c.spike_amp.unwrap_or(base.spike_amp),
            seed,
        };

        Ok(Self {
            seed,
            data: c.data.unwrap_or_else(|| out.join("data.csv")),
            model: c.model.unwrap_or_else(|| out.join("model.json")),
            copula: c.copula.unwrap_or_else(|| out.join("copula.json")),
            trace: c.trace.unwrap_or_else(|| out.join("trace.csv")),
            out,
            season: parse("season", c.season.as_deref().unwrap_or("summer"))?,
            horizon: parse("horizon", c.horizon.as_deref().unwrap_or("week_ahead"))?,
            anchors: c
                .anchors
                .unwrap_or_default()
                .iter()
                .map(|a| timestamp("anchor", a))
                .collect::<Result<_, _>>()?,
            indicators,
            settings,
            algorithm,
            algorithms,
            hours: c.hours,
            start: c.start.as_deref().map(|s| timestamp("start", s)).transpose()?,
            scenario,
            max_width: c.max_width.unwrap_or(40),
            max_depth: c.max_depth.unwrap_or(6),
            lilliefors_reps,
            boxcox_fraction: c.boxcox_fraction.unwrap_or(0.1),
        })
    }
}
