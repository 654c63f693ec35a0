//! Accuracy metrics, recursive multi-step forecasting, seasonal peak-window
//! scoring and the seasonal experiment harness.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::baselines::{train_elm, train_mlp, DEFAULT_ELM_HIDDEN};
use crate::copula::{CopulaPair, DEFAULT_P};
use crate::dbn::{train_dbn, TrainConfig, DEFAULT_HIDDEN};
use crate::error::{Error, Result};
use crate::ingest::{
    assemble_inputs, build_features, format_timestamp, parse_timestamp, split_seasonal, Horizon, RecordSeries, Season,
    SplitSpec, LOAD_LAGS, MAX_LAG, WIDTH_WITH_INDICATORS,
};
use crate::persist::TrainedModel;
use crate::seed::derive_seed;

/// Relative error at or below which a forecast counts as a hit.
pub const DEFAULT_HR_TOL: f64 = 0.07;

/// Anything that maps one raw input row to a load forecast.
pub trait Forecaster {
    fn predict_row(&self, inputs: &[f64]) -> Result<f64>;
    fn input_width(&self) -> usize;
}

impl Forecaster for TrainedModel {
    fn predict_row(&self, inputs: &[f64]) -> Result<f64> {
        self.predict(inputs)
    }

    fn input_width(&self) -> usize {
        TrainedModel::input_width(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Full,
    Peak,
}

impl Window {
    pub fn name(self) -> &'static str {
        match self {
            Window::Full => "full",
            Window::Peak => "peak",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean absolute percentage error as a fraction.
    pub mape: f64,
    pub rmse: f64,
    /// Hit rate as a fraction.
    pub hr: f64,
    pub n: usize,
    pub horizon: Option<Horizon>,
    pub window: Window,
}

/// MAPE is relative to the actual value, the hit test relative to the
/// prediction.
pub fn compute_metrics(predicted: &[f64], actual: &[f64], hr_tol: f64) -> Result<MetricsReport> {
    if predicted.len() != actual.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} actual values",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::EmptyData("no forecast points to score".into()));
    }
    let mut ape = 0.0;
    let mut se = 0.0;
    let mut hits = 0usize;
    for (index, (&o, &t)) in predicted.iter().zip(actual).enumerate() {
        if t == 0.0 {
            return Err(Error::Metric {
                index,
                reason: "actual value is zero".into(),
            });
        }
        if o == 0.0 {
            return Err(Error::Metric {
                index,
                reason: "predicted value is zero".into(),
            });
        }
        ape += ((o - t) / t).abs();
        se += (o - t) * (o - t);
        if ((o - t) / o).abs() <= hr_tol {
            hits += 1;
        }
    }
    let n = predicted.len();
    Ok(MetricsReport {
        mape: ape / n as f64,
        rmse: (se / n as f64).sqrt(),
        hr: hits as f64 / n as f64,
        n,
        horizon: None,
        window: Window::Full,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub timestamp: NaiveDateTime,
    pub predicted: f64,
    pub actual: f64,
    /// Whether any lag input came from an earlier prediction.
    #[serde(skip)]
    pub used_predicted_lag: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForecastTrace {
    pub points: Vec<TracePoint>,
}

impl ForecastTrace {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn predicted(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.predicted).collect()
    }

    pub fn actual(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.actual).collect()
    }

    pub fn filter(&self, keep: impl Fn(&TracePoint) -> bool) -> ForecastTrace {
        ForecastTrace {
            points: self.points.iter().filter(|p| keep(p)).copied().collect(),
        }
    }

    pub fn metrics(&self, hr_tol: f64) -> Result<MetricsReport> {
        compute_metrics(&self.predicted(), &self.actual(), hr_tol)
    }

    pub fn write_csv_writer<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(w);
        writeln!(w, "timestamp,predicted_mw,actual_mw")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", format_timestamp(p.timestamp), p.predicted, p.actual)?;
        }
        w.flush()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_writer(f).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv_reader<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = reader.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
        let expected = ["timestamp", "predicted_mw", "actual_mw"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Schema(format!("trace header must be {}", expected.join(","))));
        }
        let mut points = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Schema(format!("line {line}: {e}")))?;
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .parse::<f64>()
                    .map_err(|e| Error::Schema(format!("line {line}, column {}: {e}", expected[k])))
            };
            points.push(TracePoint {
                timestamp: parse_timestamp(&rec[0]).map_err(|e| Error::Schema(format!("line {line}: {e}")))?,
                predicted: num(1)?,
                actual: num(2)?,
                used_predicted_lag: false,
            });
        }
        Ok(Self { points })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_reader(f)
    }
}

/// Forecasts `hours` consecutive hours from `start`. Lags that fall at or
/// after `start` are filled with the trace's own earlier predictions;
/// exogenous inputs are read from `series` for every forecast hour.
pub fn forecast_horizon(
    model: &dyn Forecaster,
    series: &RecordSeries,
    copulas: Option<&CopulaPair>,
    start: NaiveDateTime,
    hours: usize,
) -> Result<ForecastTrace> {
    let indicators = model.input_width() == WIDTH_WITH_INDICATORS;
    if indicators && copulas.is_none() {
        return Err(Error::State("an indicator model needs fitted copula thresholds".into()));
    }
    let mut points: Vec<TracePoint> = Vec::with_capacity(hours);
    for step in 0..hours {
        let t = start + Duration::hours(step as i64);
        let exo = series
            .get(t)
            .ok_or_else(|| Error::Window(format!("no exogenous data at {}", format_timestamp(t))))?;
        let mut lags = [0.0; 7];
        let mut used_predicted = false;
        for (slot, &k) in lags.iter_mut().zip(LOAD_LAGS.iter()) {
            let src = t - Duration::hours(k);
            *slot = if src >= start {
                used_predicted = true;
                points[(src - start).num_hours() as usize].predicted
            } else {
                series
                    .get(src)
                    .ok_or_else(|| {
                        Error::Window(format!(
                            "no load history at {} ({MAX_LAG} hours needed before {})",
                            format_timestamp(src),
                            format_timestamp(start)
                        ))
                    })?
                    .load_mw
            };
        }
        let flags = if indicators {
            copulas.map(|c| c.flags(exo))
        } else {
            None
        };
        let inputs = assemble_inputs(exo, &lags, flags);
        points.push(TracePoint {
            timestamp: t,
            predicted: model.predict_row(&inputs)?,
            actual: exo.load_mw,
            used_predicted_lag: used_predicted,
        });
    }
    Ok(ForecastTrace { points })
}

/// Metrics over the season's peak hours only.
pub fn peak_window_eval(trace: &ForecastTrace, season: Season, hr_tol: f64) -> Result<MetricsReport> {
    let hours = season.peak_hours();
    let peak = trace.filter(|p| hours.contains(&p.timestamp.hour()));
    if peak.is_empty() {
        return Err(Error::Window(format!(
            "trace has no points in the {season} peak hours {:02}-{:02}",
            hours.start, hours.end
        )));
    }
    let mut m = peak.metrics(hr_tol)?;
    m.window = Window::Peak;
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "copula-dbn")]
    CopulaDbn,
    #[serde(rename = "dbn")]
    Dbn,
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "elm")]
    Elm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::CopulaDbn, Algorithm::Dbn, Algorithm::Mlp, Algorithm::Elm];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::CopulaDbn => "copula-dbn",
            Algorithm::Dbn => "dbn",
            Algorithm::Mlp => "mlp",
            Algorithm::Elm => "elm",
        }
    }

    pub fn uses_indicators(self) -> bool {
        matches!(self, Algorithm::CopulaDbn)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "copula-dbn" => Ok(Algorithm::CopulaDbn),
            "dbn" => Ok(Algorithm::Dbn),
            "mlp" | "nn" => Ok(Algorithm::Mlp),
            "elm" => Ok(Algorithm::Elm),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub train: TrainConfig,
    pub hidden: Vec<usize>,
    pub elm_hidden: usize,
    pub p: f64,
    pub hr_tol: f64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            hidden: DEFAULT_HIDDEN.to_vec(),
            elm_hidden: DEFAULT_ELM_HIDDEN,
            p: DEFAULT_P,
            hr_tol: DEFAULT_HR_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub season: Season,
    pub algorithm: Algorithm,
    pub horizon: Horizon,
    pub window: Window,
    pub metrics: MetricsReport,
    pub seed: u64,
    pub indicators: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub algorithm: Algorithm,
    pub model: TrainedModel,
    pub trace: ForecastTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub runs: Vec<ExperimentRun>,
    pub copulas: CopulaPair,
}

/// Trains one model of the given kind on `[train_start, anchor)`. Only the
/// indicator-augmented algorithm reads `copulas`.
pub fn train_for_split(
    dataset: &RecordSeries,
    spec: &SplitSpec,
    algorithm: Algorithm,
    copulas: Option<&CopulaPair>,
    settings: &ExperimentSettings,
) -> Result<TrainedModel> {
    let flags = if algorithm.uses_indicators() {
        let c = copulas.ok_or_else(|| Error::State(format!("{algorithm} needs fitted copula thresholds")))?;
        Some(c.flags_for(dataset))
    } else {
        None
    };
    let features = build_features(dataset, flags.as_deref())?.restrict(spec.train_start(), spec.anchor);
    if features.is_empty() {
        return Err(Error::Window(format!(
            "no complete feature rows in the training window before {}",
            format_timestamp(spec.anchor)
        )));
    }
    Ok(match algorithm {
        Algorithm::CopulaDbn | Algorithm::Dbn => {
            TrainedModel::Dbn(train_dbn(&features, &settings.hidden, &settings.train)?.0)
        }
        Algorithm::Mlp => TrainedModel::Mlp(train_mlp(&features, &settings.hidden, &settings.train)?.0),
        Algorithm::Elm => TrainedModel::Elm(train_elm(
            &features,
            settings.elm_hidden,
            derive_seed(settings.train.seed, "elm"),
        )?),
    })
}

/// Fits the copulas on everything before the anchor, trains each requested
/// model on its training window and forecasts the validation window.
/// Week-ahead runs also report the seasonal peak window.
pub fn run_experiment(
    dataset: &RecordSeries,
    spec: &SplitSpec,
    algorithms: &[Algorithm],
    settings: &ExperimentSettings,
) -> Result<ExperimentOutput> {
    split_seasonal(dataset, spec)?;
    let copulas = CopulaPair::fit(&dataset.before(spec.anchor), settings.p, Some(spec.season))?;
    let hours = spec.horizon.validation_hours() as usize;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &algorithm in algorithms {
        let model = train_for_split(dataset, spec, algorithm, Some(&copulas), settings)?;
        let trace = forecast_horizon(&model, dataset, Some(&copulas), spec.anchor, hours)?;
        let mut windows = vec![Window::Full];
        if spec.horizon == Horizon::WeekAhead {
            windows.push(Window::Peak);
        }
        for window in windows {
            let mut metrics = match window {
                Window::Full => trace.metrics(settings.hr_tol)?,
                Window::Peak => peak_window_eval(&trace, spec.season, settings.hr_tol)?,
            };
            metrics.horizon = Some(spec.horizon);
            rows.push(ResultRow {
                season: spec.season,
                algorithm,
                horizon: spec.horizon,
                window,
                metrics,
                seed: settings.train.seed,
                indicators: algorithm.uses_indicators(),
            });
        }
        runs.push(ExperimentRun {
            algorithm,
            model,
            trace,
        });
    }
    Ok(ExperimentOutput { rows, runs, copulas })
}

/// Results table; hit rate is exported in percent.
pub fn write_results_csv<W: Write>(rows: &[ResultRow], w: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(w);
    writeln!(w, "season,algorithm,horizon,window,mape,rmse_mw,hr_pct,n,seed")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.season,
            r.algorithm,
            r.horizon,
            r.window.name(),
            r.metrics.mape,
            r.metrics.rmse,
            r.metrics.hr * 100.0,
            r.metrics.n,
            r.seed
        )?;
    }
    w.flush()
}

/// First feasible anchor for the season: the 15th of the season's middle
/// month, then of its other months, in the earliest year whose training
/// window, lag history and validation window all fit inside the data.
pub fn default_anchor(series: &RecordSeries, season: Season, horizon: Horizon) -> Result<NaiveDateTime> {
    let (first, last) = match (series.first_timestamp(), series.last_timestamp()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Window("empty series".into())),
    };
    let months: Vec<u32> = {
        let mid = season.middle_month();
        let mut m = vec![mid];
        m.extend((1..=12).filter(|&k| k != mid && Season::of(month_start(2000, k)) == season));
        m
    };
    for year in first.year()..=last.year() {
        for &month in &months {
            let anchor = month_start(year, month) + Duration::days(14);
            let spec = SplitSpec {
                season,
                horizon,
                anchor,
            };
            let needed_from = spec.train_start() - Duration::hours(MAX_LAG);
            if needed_from >= first && spec.validation_end() - Duration::hours(1) <= last {
                return Ok(anchor);
            }
        }
    }
    Err(Error::Window(format!(
        "data from {} to {} has no room for a {} {} split",
        format_timestamp(first),
        format_timestamp(last),
        season,
        horizon
    )))
}

fn month_start(year: i32, month: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(year, month, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid month")
}
