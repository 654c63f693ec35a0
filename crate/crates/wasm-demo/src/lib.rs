//! Browser demo. Each entry point takes plain numbers and returns a JSON
//! string, so the page needs no bindings beyond `wasm-bindgen`'s defaults.

use copula_dbn::copula::{fit_gumbel_mle, pseudo_observations, upper_tail_dependence, CopulaPair};
use copula_dbn::dbn::TrainConfig;
use copula_dbn::eval::{
    default_anchor, forecast_horizon, peak_window_eval, train_for_split, Algorithm, ExperimentSettings,
};
use copula_dbn::ingest::{Horizon, Season, SplitSpec};
use copula_dbn::seed::rng_from_seed;
use copula_dbn::synthgen::{gen_scenario, sample_gumbel_pairs, ScenarioConfig};
use copula_dbn::transform::{anderson_darling, box_cox, estimate_lambda, jarque_bera};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Caps on user input so a slider cannot lock the tab.
const MAX_PAIRS: usize = 5_000;
const MAX_SAMPLE: usize = 5_000;
const HISTOGRAM_BINS: usize = 30;

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct GumbelView {
    alpha: f64,
    tail_upper: f64,
    fitted_alpha: f64,
    fitted_tail_upper: f64,
    kendall_tau: f64,
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Samples `n` Gumbel pairs at `alpha` and refits the dependence from ranks.
pub fn gumbel_explorer(alpha: f64, n: usize, seed: u64) -> Result<String, String> {
    if !(2..=MAX_PAIRS).contains(&n) {
        return Err(format!("n must be between 2 and {MAX_PAIRS}"));
    }
    let sample = sample_gumbel_pairs(alpha, n, seed).map_err(|e| e.to_string())?;
    let ranked = pseudo_observations(sample.u(), sample.v()).map_err(|e| e.to_string())?;
    let fit = fit_gumbel_mle(&ranked).map_err(|e| e.to_string())?;
    to_json(&GumbelView {
        alpha,
        tail_upper: upper_tail_dependence(alpha).map_err(|e| e.to_string())?,
        fitted_alpha: fit.alpha,
        fitted_tail_upper: fit.tail_upper,
        kendall_tau: fit.tau,
        u: sample.u().to_vec(),
        v: sample.v().to_vec(),
    })
}

#[derive(Serialize)]
struct Histogram {
    lo: f64,
    hi: f64,
    counts: Vec<usize>,
}

impl Histogram {
    fn of(values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo).max(f64::MIN_POSITIVE) / HISTOGRAM_BINS as f64;
        let mut counts = vec![0; HISTOGRAM_BINS];
        for &v in values {
            counts[(((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1)] += 1;
        }
        Self { lo, hi, counts }
    }
}

#[derive(Serialize)]
struct BoxCoxView {
    lambda: f64,
    shift: f64,
    raw: Histogram,
    transformed: Histogram,
    p_ad_raw: f64,
    p_ad: f64,
    p_jb: f64,
}

/// Draws `exp(sigma * Z)` and normalizes it with the fitted Box-Cox power.
pub fn box_cox_explorer(sigma: f64, n: usize, seed: u64) -> Result<String, String> {
    if !(20..=MAX_SAMPLE).contains(&n) {
        return Err(format!("n must be between 20 and {MAX_SAMPLE}"));
    }
    if !(sigma > 0.0 && sigma <= 3.0) {
        return Err("sigma must be in (0, 3]".into());
    }
    let mut rng = rng_from_seed(seed);
    let raw: Vec<f64> = (0..n)
        .map(|_| (sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).exp())
        .collect();
    let params = estimate_lambda(&raw).map_err(|e| e.to_string())?;
    let z = box_cox(&raw, &params).map_err(|e| e.to_string())?;
    let p =
        |r: copula_dbn::Result<copula_dbn::transform::NormalityResult>| r.map(|t| t.p_value).map_err(|e| e.to_string());
    to_json(&BoxCoxView {
        lambda: params.lambda,
        shift: params.shift,
        raw: Histogram::of(&raw),
        transformed: Histogram::of(&z),
        p_ad_raw: p(anderson_darling(&raw))?,
        p_ad: p(anderson_darling(&z))?,
        p_jb: p(jarque_bera(&z))?,
    })
}

#[derive(Serialize)]
struct Series {
    label: String,
    predicted: Vec<f64>,
    peak_mape: f64,
    mape: f64,
}

#[derive(Serialize)]
struct ForecastView {
    anchor: String,
    hours: Vec<u32>,
    actual: Vec<f64>,
    peak_hours: [u32; 2],
    temperature_threshold: f64,
    runs: Vec<Series>,
}

/// Generates a scenario through late July, trains the DBN with and without
/// peak-load indicators, and forecasts the summer validation week.
pub fn forecast_demo(alpha_temp: f64, spike_amp: f64, seed: u64) -> Result<String, String> {
    let err = |e: copula_dbn::Error| e.to_string();
    let series = gen_scenario(&ScenarioConfig {
        alpha_temp,
        spike_amp,
        seed,
        days: 210,
        ..ScenarioConfig::default()
    })
    .map_err(err)?;
    let (season, horizon) = (Season::Summer, Horizon::WeekAhead);
    let spec = SplitSpec {
        season,
        horizon,
        anchor: default_anchor(&series, season, horizon).map_err(err)?,
    };
    let settings = ExperimentSettings {
        train: TrainConfig {
            seed,
            ..TrainConfig::default()
        },
        ..ExperimentSettings::default()
    };
    let copulas = CopulaPair::fit(&series.before(spec.anchor), settings.p, Some(season)).map_err(err)?;
    let hours = horizon.validation_hours() as usize;
    let mut runs = Vec::new();
    let mut actual = Vec::new();
    let mut clock = Vec::new();
    for algorithm in [Algorithm::CopulaDbn, Algorithm::Dbn] {
        let model = train_for_split(&series, &spec, algorithm, Some(&copulas), &settings).map_err(err)?;
        let used = model.with_indicators().then_some(&copulas);
        let trace = forecast_horizon(&model, &series, used, spec.anchor, hours).map_err(err)?;
        actual = trace.actual();
        clock = trace
            .points
            .iter()
            .map(|p| chrono::Timelike::hour(&p.timestamp))
            .collect();
        runs.push(Series {
            label: algorithm.to_string(),
            predicted: trace.predicted(),
            peak_mape: peak_window_eval(&trace, season, settings.hr_tol).map_err(err)?.mape,
            mape: trace.metrics(settings.hr_tol).map_err(err)?.mape,
        });
    }
    let peak = season.peak_hours();
    to_json(&ForecastView {
        anchor: spec.anchor.format("%Y-%m-%d %H:%M").to_string(),
        hours: clock,
        actual,
        peak_hours: [peak.start, peak.end],
        temperature_threshold: copulas.temperature.var_raw,
        runs,
    })
}

#[wasm_bindgen(js_name = gumbelExplorer)]
pub fn gumbel_explorer_js(alpha: f64, n: u32, seed: u32) -> Result<String, JsValue> {
    gumbel_explorer(alpha, n as usize, u64::from(seed)).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = boxCoxExplorer)]
pub fn box_cox_explorer_js(sigma: f64, n: u32, seed: u32) -> Result<String, JsValue> {
    box_cox_explorer(sigma, n as usize, u64::from(seed)).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = forecastDemo)]
pub fn forecast_demo_js(alpha_temp: f64, spike_amp: f64, seed: u32) -> Result<String, JsValue> {
    forecast_demo(alpha_temp, spike_amp, u64::from(seed)).map_err(|e| JsValue::from_str(&e))
}
