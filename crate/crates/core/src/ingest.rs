//! Hourly grid records: CSV parsing, cleaning, lagged feature rows and
//! seasonal train/validation windows.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hourly lags (in hours) feeding the network, in input-column order.
pub const LOAD_LAGS: [i64; 7] = [1, 24, 48, 72, 96, 120, 144];

/// Longest lag; a feature row needs this many hours of history.
pub const MAX_LAG: i64 = 144;

/// Input width with and without the two peak indicators.
pub const WIDTH_WITH_INDICATORS: usize = 14;
pub const WIDTH_PLAIN: usize = 12;

/// Names of the network inputs, in column order.
pub const INPUT_NAMES: [&str; 14] = [
    "temperature",
    "price",
    "humidity",
    "pressure",
    "wind_speed",
    "load_t-1h",
    "load_t-24h",
    "load_t-48h",
    "load_t-72h",
    "load_t-96h",
    "load_t-120h",
    "load_t-144h",
    "i_temp",
    "i_price",
];

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

const ACCEPTED_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    ACCEPTED_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .ok_or_else(|| Error::Config(format!("unparseable timestamp {s:?}")))
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub timestamp: NaiveDateTime,
    pub load_mw: f64,
    pub temperature: f64,
    pub price: f64,
    pub humidity: f64,
    pub pressure: f64,
    pub wind_speed: f64,
}

impl Record {
    pub fn get(&self, var: Variable) -> f64 {
        match var {
            Variable::Load => self.load_mw,
            Variable::Temperature => self.temperature,
            Variable::Price => self.price,
            Variable::Humidity => self.humidity,
            Variable::Pressure => self.pressure,
            Variable::WindSpeed => self.wind_speed,
        }
    }

    fn all_finite(&self) -> bool {
        Variable::ALL.iter().all(|&v| self.get(v).is_finite())
    }
}

/// Measured quantities carried by a [`Record`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Load,
    Temperature,
    Price,
    Humidity,
    Pressure,
    WindSpeed,
}

impl Variable {
    pub const ALL: [Variable; 6] = [
        Variable::Load,
        Variable::Temperature,
        Variable::Price,
        Variable::Humidity,
        Variable::Pressure,
        Variable::WindSpeed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Load => "load",
            Variable::Temperature => "temperature",
            Variable::Price => "price",
            Variable::Humidity => "humidity",
            Variable::Pressure => "pressure",
            Variable::WindSpeed => "wind_speed",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordSeries {
    rows: Vec<Record>,
}

impl RecordSeries {
    /// Builds a series, sorting rows by timestamp. Duplicate timestamps are
    /// rejected.
    pub fn new(mut rows: Vec<Record>) -> Result<Self> {
        rows.sort_by_key(|r| r.timestamp);
        if let Some(w) = rows.windows(2).find(|w| w[0].timestamp == w[1].timestamp) {
            return Err(Error::Schema(format!(
                "duplicate timestamp {}",
                format_timestamp(w[0].timestamp)
            )));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Record] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn first_timestamp(&self) -> Option<NaiveDateTime> {
        self.rows.first().map(|r| r.timestamp)
    }

    pub fn last_timestamp(&self) -> Option<NaiveDateTime> {
        self.rows.last().map(|r| r.timestamp)
    }

    pub fn column(&self, var: Variable) -> Vec<f64> {
        self.rows.iter().map(|r| r.get(var)).collect()
    }

    pub fn loads(&self) -> Vec<f64> {
        self.column(Variable::Load)
    }

    pub fn index_of(&self, t: NaiveDateTime) -> Option<usize> {
        self.rows.binary_search_by_key(&t, |r| r.timestamp).ok()
    }

    pub fn get(&self, t: NaiveDateTime) -> Option<&Record> {
        self.index_of(t).map(|i| &self.rows[i])
    }

    /// Rows with `from <= timestamp < to`.
    pub fn window(&self, from: NaiveDateTime, to: NaiveDateTime) -> RecordSeries {
        let lo = self.rows.partition_point(|r| r.timestamp < from);
        let hi = self.rows.partition_point(|r| r.timestamp < to);
        RecordSeries {
            rows: self.rows[lo..hi.max(lo)].to_vec(),
        }
    }

    /// Rows strictly before `t`.
    pub fn before(&self, t: NaiveDateTime) -> RecordSeries {
        let hi = self.rows.partition_point(|r| r.timestamp < t);
        RecordSeries {
            rows: self.rows[..hi].to_vec(),
        }
    }

    pub fn in_season(&self, season: Season) -> RecordSeries {
        RecordSeries {
            rows: self
                .rows
                .iter()
                .filter(|r| Season::of(r.timestamp) == season)
                .copied()
                .collect(),
        }
    }

    /// Checks the cleaned-series invariants: strictly increasing whole-hour
    /// timestamps, positive load and finite fields.
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if r.timestamp.minute() != 0 || r.timestamp.second() != 0 {
                return Err(Error::Schema(format!("row {i}: timestamp not on the hour")));
            }
            if !r.all_finite() {
                return Err(Error::Schema(format!("row {i}: non-finite field")));
            }
            if r.load_mw <= 0.0 {
                return Err(Error::Schema(format!("row {i}: non-positive load")));
            }
        }
        if let Some(i) = self.rows.windows(2).position(|w| w[0].timestamp >= w[1].timestamp) {
            return Err(Error::Schema(format!("row {}: timestamps not increasing", i + 1)));
        }
        Ok(())
    }
}

/// Column names for the seven required CSV fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub timestamp: String,
    pub load_mw: String,
    pub temperature: String,
    pub price: String,
    pub humidity: String,
    pub pressure: String,
    pub wind_speed: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            load_mw: "load_mw".into(),
            temperature: "temperature".into(),
            price: "price".into(),
            humidity: "humidity".into(),
            pressure: "pressure".into(),
            wind_speed: "wind_speed".into(),
        }
    }
}

impl ColumnMap {
    fn names(&self) -> [&str; 7] {
        [
            &self.timestamp,
            &self.load_mw,
            &self.temperature,
            &self.price,
            &self.humidity,
            &self.pressure,
            &self.wind_speed,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line in the source file (the header is line 1).
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone)]
pub struct ParseReport {
    pub series: RecordSeries,
    pub errors: Vec<RowError>,
}

pub fn parse_csv(path: impl AsRef<Path>, schema: &ColumnMap) -> Result<ParseReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_reader(file, schema)
}

/// Parses CSV records. Malformed rows (bad timestamp, unparseable or
/// non-finite number, duplicate timestamp) are collected in the report and
/// skipped; a missing column aborts with a schema error.
pub fn parse_csv_reader<R: Read>(reader: R, schema: &ColumnMap) -> Result<ParseReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Schema("missing header row".into()));
    }
    let mut idx = [0usize; 7];
    for (slot, name) in idx.iter_mut().zip(schema.names()) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))?;
    }

    let mut rows: Vec<Record> = Vec::new();
    let mut errors = Vec::new();
    for result in rdr.records() {
        let rec = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&rec, &idx, schema) {
            Ok(r) => rows.push(r),
            Err(message) => errors.push(RowError { line, message }),
        }
    }

    // Stable sort keeps the first occurrence of a duplicated timestamp first.
    let mut lines: Vec<(Record, usize)> = rows.into_iter().zip(0..).collect();
    lines.sort_by_key(|(r, i)| (r.timestamp, *i));
    let mut kept: Vec<Record> = Vec::with_capacity(lines.len());
    for (r, _) in lines {
        if kept.last().is_some_and(|k| k.timestamp == r.timestamp) {
            errors.push(RowError {
                line: 0,
                message: format!("duplicate timestamp {}", format_timestamp(r.timestamp)),
            });
        } else {
            kept.push(r);
        }
    }
    Ok(ParseReport {
        series: RecordSeries { rows: kept },
        errors,
    })
}

fn parse_row(rec: &csv::StringRecord, idx: &[usize; 7], schema: &ColumnMap) -> std::result::Result<Record, String> {
    let names = schema.names();
    let field = |k: usize| rec.get(idx[k]).ok_or_else(|| format!("missing field {:?}", names[k]));
    let ts_raw = field(0)?;
    let timestamp = parse_timestamp(ts_raw).map_err(|_| format!("unparseable timestamp {ts_raw:?}"))?;
    if timestamp.minute() != 0 || timestamp.second() != 0 {
        return Err(format!("timestamp {ts_raw:?} is not on the hour"));
    }
    let mut vals = [0.0f64; 6];
    for (k, v) in vals.iter_mut().enumerate() {
        let raw = field(k + 1)?;
        let x: f64 = raw
            .parse()
            .map_err(|_| format!("unparseable number {raw:?} in column {:?}", names[k + 1]))?;
        if !x.is_finite() {
            return Err(format!("non-finite value {raw:?} in column {:?}", names[k + 1]));
        }
        *v = x;
    }
    Ok(Record {
        timestamp,
        load_mw: vals[0],
        temperature: vals[1],
        price: vals[2],
        humidity: vals[3],
        pressure: vals[4],
        wind_speed: vals[5],
    })
}

pub fn write_csv(series: &RecordSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_writer(series, file).map_err(|e| Error::io(path, e))
}

/// Writes the standard schema. Floats use the shortest representation that
/// parses back to the same bits.
pub fn write_csv_writer<W: Write>(series: &RecordSeries, w: W) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(w);
    writeln!(w, "timestamp,load_mw,temperature,price,humidity,pressure,wind_speed")?;
    for r in &series.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            format_timestamp(r.timestamp),
            r.load_mw,
            r.temperature,
            r.price,
            r.humidity,
            r.pressure,
            r.wind_speed
        )?;
    }
    w.flush()
}

/// Drops rows with non-finite fields or non-positive load.
pub fn clean(series: &RecordSeries) -> Result<RecordSeries> {
    let rows: Vec<Record> = series
        .rows
        .iter()
        .filter(|r| r.all_finite() && r.load_mw > 0.0)
        .copied()
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyData("every row was removed by cleaning".into()));
    }
    Ok(RecordSeries { rows })
}

/// Binary peak-load indicators for one timestamp.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakFlags {
    pub temp: bool,
    pub price: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub timestamp: NaiveDateTime,
    pub inputs: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureRow>,
    pub with_indicators: bool,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        if self.with_indicators {
            WIDTH_WITH_INDICATORS
        } else {
            WIDTH_PLAIN
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.inputs.clone()).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }

    /// Rows with `from <= timestamp < to`.
    pub fn restrict(&self, from: NaiveDateTime, to: NaiveDateTime) -> FeatureMatrix {
        FeatureMatrix {
            rows: self
                .rows
                .iter()
                .filter(|r| r.timestamp >= from && r.timestamp < to)
                .cloned()
                .collect(),
            with_indicators: self.with_indicators,
        }
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            with_indicators: self.with_indicators,
        }
    }
}

/// Assembles one input vector in the fixed column layout.
pub fn assemble_inputs(exo: &Record, lags: &[f64; 7], flags: Option<PeakFlags>) -> Vec<f64> {
    let mut v = Vec::with_capacity(WIDTH_WITH_INDICATORS);
    v.extend_from_slice(&[exo.temperature, exo.price, exo.humidity, exo.pressure, exo.wind_speed]);
    v.extend_from_slice(lags);
    if let Some(f) = flags {
        v.push(if f.temp { 1.0 } else { 0.0 });
        v.push(if f.price { 1.0 } else { 0.0 });
    }
    v
}

/// One feature row per timestamp whose full 144-hour lag history is present.
/// `indicators`, when given, must align with the rows of `series`; without
/// them the matrix has the 12-column plain layout.
pub fn build_features(series: &RecordSeries, indicators: Option<&[PeakFlags]>) -> Result<FeatureMatrix> {
    let needed = MAX_LAG as usize + 1;
    if series.len() < needed {
        return Err(Error::InsufficientHistory {
            needed,
            got: series.len(),
        });
    }
    if let Some(ind) = indicators {
        if ind.len() != series.len() {
            return Err(Error::Shape(format!(
                "{} indicator pairs for {} rows",
                ind.len(),
                series.len()
            )));
        }
    }
    let mut rows = Vec::new();
    'rows: for (i, r) in series.rows.iter().enumerate() {
        let mut lags = [0.0; 7];
        for (slot, &k) in lags.iter_mut().zip(LOAD_LAGS.iter()) {
            let t = r.timestamp - Duration::hours(k);
            // Contiguous data puts the lag exactly k rows back.
            let hit = i
                .checked_sub(k as usize)
                .filter(|&j| series.rows[j].timestamp == t)
                .or_else(|| series.index_of(t));
            match hit {
                Some(j) => *slot = series.rows[j].load_mw,
                None => continue 'rows,
            }
        }
        rows.push(FeatureRow {
            timestamp: r.timestamp,
            inputs: assemble_inputs(r, &lags, indicators.map(|ind| ind[i])),
            target: r.load_mw,
        });
    }
    Ok(FeatureMatrix {
        rows,
        with_indicators: indicators.is_some(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Season {
    Spring,
    Summer,
    Fall,
    Winter,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Spring, Season::Summer, Season::Fall, Season::Winter];

    /// Meteorological quarters: Mar-May, Jun-Aug, Sep-Nov, Dec-Feb.
    pub fn of(t: NaiveDateTime) -> Season {
        match t.month() {
            3..=5 => Season::Spring,
            6..=8 => Season::Summer,
            9..=11 => Season::Fall,
            _ => Season::Winter,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Fall => "fall",
            Season::Winter => "winter",
        }
    }

    /// Half-open local-clock hour range of the seasonal load peak.
    pub fn peak_hours(self) -> std::ops::Range<u32> {
        match self {
            Season::Spring | Season::Winter => 8..12,
            Season::Summer | Season::Fall => 12..17,
        }
    }

    /// Month whose 15th day serves as the default anchor.
    pub fn middle_month(self) -> u32 {
        match self {
            Season::Spring => 4,
            Season::Summer => 7,
            Season::Fall => 10,
            Season::Winter => 1,
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spring" => Ok(Season::Spring),
            "summer" => Ok(Season::Summer),
            "fall" | "autumn" => Ok(Season::Fall),
            "winter" => Ok(Season::Winter),
            other => Err(Error::Config(format!("unknown season {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    DayAhead,
    WeekAhead,
}

impl Horizon {
    pub fn train_hours(self) -> i64 {
        match self {
            Horizon::DayAhead => 7 * 24,
            Horizon::WeekAhead => 30 * 24,
        }
    }

    pub fn validation_hours(self) -> i64 {
        match self {
            Horizon::DayAhead => 24,
            Horizon::WeekAhead => 7 * 24,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Horizon::DayAhead => "day_ahead",
            Horizon::WeekAhead => "week_ahead",
        }
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Horizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "day_ahead" | "day" => Ok(Horizon::DayAhead),
            "week_ahead" | "week" => Ok(Horizon::WeekAhead),
            other => Err(Error::Config(format!("unknown horizon {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub season: Season,
    pub horizon: Horizon,
    pub anchor: NaiveDateTime,
}

impl SplitSpec {
    pub fn train_start(&self) -> NaiveDateTime {
        self.anchor - Duration::hours(self.horizon.train_hours())
    }

    pub fn validation_end(&self) -> NaiveDateTime {
        self.anchor + Duration::hours(self.horizon.validation_hours())
    }
}

/// Splits into `[anchor - train, anchor)` and `[anchor, anchor + validation)`.
/// The series must span both windows.
pub fn split_seasonal(series: &RecordSeries, spec: &SplitSpec) -> Result<(RecordSeries, RecordSeries)> {
    let (first, last) = match (series.first_timestamp(), series.last_timestamp()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Window("empty series".into())),
    };
    let start = spec.train_start();
    let end = spec.validation_end();
    if start < first {
        return Err(Error::Window(format!(
            "training window starts {} but data begins {}",
            format_timestamp(start),
            format_timestamp(first)
        )));
    }
    if end - Duration::hours(1) > last {
        return Err(Error::Window(format!(
            "validation window ends {} but data ends {}",
            format_timestamp(end),
            format_timestamp(last)
        )));
    }
    let train = series.window(start, spec.anchor);
    let validation = series.window(spec.anchor, end);
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Window("a window contains no rows".into()));
    }
    Ok((train, validation))
}
