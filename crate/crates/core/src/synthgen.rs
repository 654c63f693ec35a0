//! Seeded synthetic hourly scenarios whose load/temperature and load/price
//! pairs carry Gumbel upper-tail dependence.

use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::copula::{diagonal_level, GumbelCopula, PseudoSample};
use crate::error::{Error, Result};
use crate::ingest::{Record, RecordSeries};
use crate::seed::{rng_for, rng_from_seed, Rng};
use crate::transform::std_normal_quantile;

pub const MIN_DAYS: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub alpha_temp: f64,
    pub alpha_price: f64,
    pub days: usize,
    pub start: NaiveDateTime,
    pub base_load: f64,
    pub daily_amp: f64,
    pub weekly_amp: f64,
    pub noise_sd: f64,
    /// Load added in hours whose temperature sits in the joint upper tail.
    pub spike_amp: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            alpha_temp: 3.52,
            alpha_price: 1.19,
            days: 365,
            start: NaiveDate::from_ymd_opt(2016, 1, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid start"),
            base_load: 40_000.0,
            daily_amp: 8_000.0,
            weekly_amp: 2_000.0,
            noise_sd: 600.0,
            spike_amp: 3_000.0,
            seed: 42,
        }
    }
}

/// Relative swing of the annual cycle applied to the base load.
const ANNUAL_SWING: f64 = 0.08;

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.alpha_temp >= 1.0 && self.alpha_temp.is_finite()) {
            return bad(format!("alpha_temp must be >= 1, got {}", self.alpha_temp));
        }
        if !(self.alpha_price >= 1.0 && self.alpha_price.is_finite()) {
            return bad(format!("alpha_price must be >= 1, got {}", self.alpha_price));
        }
        if self.days < MIN_DAYS {
            return bad(format!("days must be >= {MIN_DAYS}, got {}", self.days));
        }
        if !(self.base_load > 0.0 && self.base_load.is_finite()) {
            return bad(format!("base_load must be positive, got {}", self.base_load));
        }
        for (name, v) in [
            ("daily_amp", self.daily_amp),
            ("weekly_amp", self.weekly_amp),
            ("noise_sd", self.noise_sd),
            ("spike_amp", self.spike_amp),
        ] {
            if !(v >= 0.0 && v < self.base_load) {
                return bad(format!("{name} must lie in [0, base_load), got {v}"));
            }
        }
        let swing = ANNUAL_SWING * self.base_load + self.daily_amp + self.weekly_amp + 6.0 * self.noise_sd;
        if swing >= self.base_load {
            return bad(format!(
                "amplitudes plus six noise deviations ({swing}) must stay below base_load ({})",
                self.base_load
            ));
        }
        Ok(())
    }
}

/// Positive-stable variate with Laplace transform `exp(-t^a)`, `0 < a <= 1`
/// (Kanter's representation).
pub fn positive_stable(a: f64, rng: &mut Rng) -> f64 {
    if a >= 1.0 {
        return 1.0;
    }
    let u: f64 = PI * rng.random::<f64>();
    let w: f64 = Exp1.sample(rng);
    let u = u.max(f64::MIN_POSITIVE);
    (a * u).sin() / u.sin().powf(1.0 / a) * ((((1.0 - a) * u).sin()) / w).powf((1.0 - a) / a)
}

fn open_unit(x: f64) -> f64 {
    x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn draw_pairs(alpha: f64, n: usize, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let a = 1.0 / alpha;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        let s = positive_stable(a, rng);
        let e1: f64 = Exp1.sample(rng);
        let e2: f64 = Exp1.sample(rng);
        u.push(open_unit((-(e1 / s).powf(a)).exp()));
        v.push(open_unit((-(e2 / s).powf(a)).exp()));
    }
    (u, v)
}

/// `n` pairs from the Gumbel copula via the frailty construction.
pub fn sample_gumbel_pairs(alpha: f64, n: usize, seed: u64) -> Result<PseudoSample> {
    GumbelCopula::new(alpha)?;
    if n == 0 {
        return Err(Error::Parameter("n must be >= 1".into()));
    }
    let (u, v) = draw_pairs(alpha, n, &mut rng_from_seed(seed));
    PseudoSample::new(u, v)
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Hour of the daily load maximum.
fn peak_hour(t: NaiveDateTime) -> f64 {
    match t.month() {
        6..=11 => 14.5,
        _ => 10.0,
    }
}

fn deterministic_load(cfg: &ScenarioConfig, t: NaiveDateTime) -> f64 {
    let doy = f64::from(t.ordinal0());
    let hour = f64::from(t.hour());
    let annual = 1.0 + ANNUAL_SWING * (2.0 * PI * (doy - 200.0) / 365.0).cos();
    let daily = cfg.daily_amp * (2.0 * PI * (hour - peak_hour(t)) / 24.0).cos();
    let weekday = t.weekday().num_days_from_monday();
    let weekly = if weekday >= 5 {
        -cfg.weekly_amp
    } else {
        0.4 * cfg.weekly_amp
    };
    cfg.base_load * annual + daily + weekly
}

/// Reorders `(u, v)` pairs so that the `i`-th smallest `u` lands on the hour
/// holding the `i`-th smallest load, returning the `v` for each hour.
fn couple_to_ranks(load: &[f64], alpha: f64, rng: &mut Rng) -> Vec<f64> {
    let n = load.len();
    let (u, v) = draw_pairs(alpha, n, rng);
    let mut by_u: Vec<usize> = (0..n).collect();
    by_u.sort_by(|&a, &b| u[a].total_cmp(&u[b]));
    let mut by_load: Vec<usize> = (0..n).collect();
    by_load.sort_by(|&a, &b| load[a].total_cmp(&load[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; n];
    for (&hour, &pair) in by_load.iter().zip(&by_u) {
        out[hour] = v[pair];
    }
    out
}

/// One synthetic hourly series.
///
/// Load is a seasonal base with daily and weekly cycles plus noise.
/// Temperature and price uniforms are drawn from Gumbel copulas and matched
/// to hours by load rank, then pushed through fixed marginals (normal for
/// temperature, lognormal for price). Hours whose temperature uniform
/// exceeds the 95% diagonal level receive an extra `spike_amp` of load.
pub fn gen_scenario(cfg: &ScenarioConfig) -> Result<RecordSeries> {
    cfg.validate()?;
    let n = cfg.days * 24;
    let times: Vec<NaiveDateTime> = (0..n as i64).map(|h| cfg.start + Duration::hours(h)).collect();

    let mut noise_rng = rng_for(cfg.seed, "synthgen/noise");
    let mut load: Vec<f64> = times
        .iter()
        .map(|&t| {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            deterministic_load(cfg, t) + cfg.noise_sd * z
        })
        .collect();

    let v_temp = couple_to_ranks(&load, cfg.alpha_temp, &mut rng_for(cfg.seed, "synthgen/temperature"));
    let v_price = couple_to_ranks(&load, cfg.alpha_price, &mut rng_for(cfg.seed, "synthgen/price"));

    if cfg.spike_amp > 0.0 {
        let level = diagonal_level(cfg.alpha_temp, 0.95)?;
        for (l, &v) in load.iter_mut().zip(&v_temp) {
            if v >= level {
                *l += cfg.spike_amp;
            }
        }
    }

    let mut nuisance = rng_for(cfg.seed, "synthgen/nuisance");
    let mut pressure = 1013.0;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let temperature = 75.0 + 10.0 * std_normal_quantile(v_temp[i]);
        let price = 10.0 * (0.3 * std_normal_quantile(v_price[i])).exp();
        let z: [f64; 3] = [
            StandardNormal.sample(&mut nuisance),
            StandardNormal.sample(&mut nuisance),
            StandardNormal.sample(&mut nuisance),
        ];
        let humidity = (60.0 - 0.8 * (temperature - 75.0) + 8.0 * z[0]).clamp(5.0, 100.0);
        pressure = 1013.0 + 0.95 * (pressure - 1013.0) + 1.5 * z[1];
        let wind_speed = (10.0 + 3.0 * z[2]).abs();
        rows.push(Record {
            timestamp: times[i],
            load_mw: round3(load[i].max(0.01 * cfg.base_load)),
            temperature: round3(temperature),
            price: round3(price),
            humidity: round3(humidity),
            pressure: round3(pressure),
            wind_speed: round3(wind_speed),
        });
    }
    RecordSeries::new(rows)
}
