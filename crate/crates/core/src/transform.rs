//! Box-Cox normalization, normality tests and min-max scaling.

use rand::seq::index::sample as sample_indices;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::seed;

/// Offset that keeps the smallest shifted value strictly positive.
pub const SHIFT_EPSILON: f64 = 1e-6;
pub const LAMBDA_MIN: f64 = -2.0;
pub const LAMBDA_MAX: f64 = 2.0;
pub const LAMBDA_STEP: f64 = 0.01;
pub const MIN_LAMBDA_SAMPLE: usize = 20;
pub const MIN_TEST_SAMPLE: usize = 8;
pub const MIN_LILLIEFORS_REPS: usize = 1000;
pub const DEFAULT_LILLIEFORS_REPS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxParams {
    pub lambda: f64,
    pub shift: f64,
}

impl BoxCoxParams {
    pub fn new(lambda: f64, shift: f64) -> Self {
        Self { lambda, shift }
    }

    /// Shift that lifts every value of `values` to at least [`SHIFT_EPSILON`].
    pub fn shift_for(values: &[f64]) -> f64 {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        (SHIFT_EPSILON - min).max(0.0)
    }

    pub fn apply(&self, y: f64) -> Result<f64> {
        let x = y + self.shift;
        if !(x > 0.0) {
            return Err(Error::Domain(format!("shifted value {x} is not positive")));
        }
        Ok(if self.lambda == 0.0 {
            x.ln()
        } else {
            let t = self.lambda * x.ln();
            if t.abs() < 1e-2 {
                t.exp_m1() / self.lambda
            } else {
                (x.powf(self.lambda) - 1.0) / self.lambda
            }
        })
    }

    pub fn invert(&self, v: f64) -> Result<f64> {
        let x = if self.lambda == 0.0 {
            v.exp()
        } else {
            let base = self.lambda * v + 1.0;
            if !(base > 0.0) {
                return Err(Error::Domain(format!(
                    "lambda*v + 1 = {base} is not positive (lambda {}, v {v})",
                    self.lambda
                )));
            }
            let lv = self.lambda * v;
            if lv.abs() < 1e-2 {
                (lv.ln_1p() / self.lambda).exp()
            } else {
                base.powf(1.0 / self.lambda)
            }
        };
        Ok(x - self.shift)
    }
}

pub fn box_cox(values: &[f64], params: &BoxCoxParams) -> Result<Vec<f64>> {
    values.iter().map(|&y| params.apply(y)).collect()
}

pub fn inverse_box_cox(values: &[f64], params: &BoxCoxParams) -> Result<Vec<f64>> {
    values.iter().map(|&v| params.invert(v)).collect()
}

/// The candidate grid `-2.00, -1.99, ..., 2.00`; zero is exact.
pub fn lambda_grid() -> impl Iterator<Item = f64> {
    let steps = ((LAMBDA_MAX - LAMBDA_MIN) / LAMBDA_STEP).round() as i64;
    let offset = (LAMBDA_MIN / LAMBDA_STEP).round() as i64;
    (0..=steps).map(move |k| (k + offset) as f64 / 100.0)
}

/// Outcome of the lambda grid search, with every candidate's score.
#[derive(Debug, Clone)]
pub struct LambdaSearch {
    pub params: BoxCoxParams,
    pub best: NormalityResult,
    /// `(lambda, A-D statistic, A-D p-value)` per grid point.
    pub scores: Vec<(f64, f64, f64)>,
}

/// Picks the lambda on the grid whose transform gives the largest
/// Anderson-Darling p-value; ties go to the smaller statistic.
pub fn estimate_lambda(sample: &[f64]) -> Result<BoxCoxParams> {
    search_lambda(sample, BoxCoxParams::shift_for(sample)).map(|s| s.params)
}

pub fn search_lambda(sample: &[f64], shift: f64) -> Result<LambdaSearch> {
    if sample.len() < MIN_LAMBDA_SAMPLE {
        return Err(Error::SampleTooSmall {
            needed: MIN_LAMBDA_SAMPLE,
            got: sample.len(),
        });
    }
    if let Some(x) = sample.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite sample value {x}")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut scores = Vec::new();
    let mut best: Option<(f64, NormalityResult)> = None;
    let mut buf = vec![0.0; sorted.len()];
    for lambda in lambda_grid() {
        let params = BoxCoxParams::new(lambda, shift);
        for (b, &y) in buf.iter_mut().zip(&sorted) {
            *b = params.apply(y)?;
        }
        // Box-Cox is increasing, so the transformed sample stays sorted.
        let res = match anderson_darling_sorted(&buf) {
            Ok(r) => r,
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        };
        scores.push((lambda, res.statistic, res.p_value));
        let better = match &best {
            None => true,
            Some((_, b)) => res.p_value > b.p_value || (res.p_value == b.p_value && res.statistic < b.statistic),
        };
        if better {
            best = Some((lambda, res));
        }
    }
    let (lambda, best) = best.ok_or_else(|| Error::Degenerate("every lambda candidate was degenerate".into()))?;
    Ok(LambdaSearch {
        params: BoxCoxParams::new(lambda, shift),
        best,
        scores,
    })
}

/// Estimates lambda on a seeded random subsample of `values` and returns
/// parameters valid for the whole series.
pub fn fit_box_cox(values: &[f64], fraction: f64, seed: u64) -> Result<BoxCoxParams> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Parameter(format!("subsample fraction {fraction} not in (0, 1]")));
    }
    let shift = BoxCoxParams::shift_for(values);
    let k = ((values.len() as f64 * fraction).round() as usize).max(MIN_LAMBDA_SAMPLE.min(values.len()));
    let sub = subsample(values, k, seed);
    search_lambda(&sub, shift).map(|s| s.params)
}

/// `k` values drawn without replacement, in their original order.
pub fn subsample(values: &[f64], k: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng_from_seed(seed);
    let mut idx = sample_indices(&mut rng, values.len(), k.min(values.len())).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| values[i]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

fn mean_sd(sample: &[f64]) -> Result<(f64, f64)> {
    let n = sample.len();
    if n < MIN_TEST_SAMPLE {
        return Err(Error::SampleTooSmall {
            needed: MIN_TEST_SAMPLE,
            got: n,
        });
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Degenerate(format!("sample variance is {var}")));
    }
    Ok((mean, var.sqrt()))
}

/// Anderson-Darling test against a normal with estimated mean and
/// variance. The p-value uses the small-sample corrected statistic
/// `A*² = A²(1 + 0.75/n + 2.25/n²)` and the D'Agostino-Stephens fits.
pub fn anderson_darling(sample: &[f64]) -> Result<NormalityResult> {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    anderson_darling_sorted(&sorted)
}

fn anderson_darling_sorted(sorted: &[f64]) -> Result<NormalityResult> {
    let (mean, sd) = mean_sd(sorted)?;
    let n = sorted.len();
    let nf = n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let zi = (sorted[i] - mean) / sd;
        let zj = (sorted[n - 1 - i] - mean) / sd;
        let lo = std_normal_cdf(zi).max(f64::MIN_POSITIVE).ln();
        let hi = std_normal_sf(zj).max(f64::MIN_POSITIVE).ln();
        s += (2 * i + 1) as f64 * (lo + hi);
    }
    let a2 = -nf - s / nf;
    let a_star = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    Ok(NormalityResult {
        statistic: a2,
        p_value: anderson_darling_p(a_star),
    })
}

/// p-value of the corrected A-D statistic for the estimated-parameter case.
pub fn anderson_darling_p(a_star: f64) -> f64 {
    let p = if a_star >= 153.467 {
        // Past the vertex of the exponent's quadratic the fit turns upward.
        0.0
    } else if a_star >= 0.6 {
        (1.2937 - 5.709 * a_star + 0.0186 * a_star * a_star).exp()
    } else if a_star >= 0.34 {
        (0.9177 - 4.279 * a_star - 1.38 * a_star * a_star).exp()
    } else if a_star >= 0.2 {
        1.0 - (-8.318 + 42.796 * a_star - 59.938 * a_star * a_star).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a_star - 223.73 * a_star * a_star).exp()
    };
    p.clamp(0.0, 1.0)
}

/// Jarque-Bera test; `JB = n/6 (S² + K²/4)` with excess kurtosis `K`, and
/// the chi-square(2) upper tail `exp(-JB/2)` as p-value.
pub fn jarque_bera(sample: &[f64]) -> Result<NormalityResult> {
    let n = sample.len();
    if n < MIN_TEST_SAMPLE {
        return Err(Error::SampleTooSmall {
            needed: MIN_TEST_SAMPLE,
            got: n,
        });
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in sample {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if !(m2 > 0.0) {
        return Err(Error::Degenerate(format!("sample variance is {m2}")));
    }
    let skew = m3 / m2.powf(1.5);
    let excess = m4 / (m2 * m2) - 3.0;
    let jb = nf / 6.0 * (skew * skew + excess * excess / 4.0);
    Ok(NormalityResult {
        statistic: jb,
        p_value: (-jb / 2.0).exp().clamp(0.0, 1.0),
    })
}

/// Kolmogorov-Smirnov distance between a sample and the normal with the
/// sample's own mean and standard deviation.
pub fn lilliefors_statistic(sample: &[f64]) -> Result<f64> {
    let (mean, sd) = mean_sd(sample)?;
    let mut z: Vec<f64> = sample.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        let f = std_normal_cdf(zi);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Monte Carlo null distribution of the Lilliefors statistic for one
/// sample size. Each replicate has its own derived seed, so the table does
/// not depend on thread scheduling.
#[derive(Debug, Clone)]
pub struct LillieforsNull {
    n: usize,
    sorted_stats: Vec<f64>,
}

impl LillieforsNull {
    pub fn simulate(n: usize, mc_reps: usize, seed: u64) -> Result<Self> {
        if n < MIN_TEST_SAMPLE {
            return Err(Error::SampleTooSmall {
                needed: MIN_TEST_SAMPLE,
                got: n,
            });
        }
        if mc_reps < MIN_LILLIEFORS_REPS {
            return Err(Error::Parameter(format!(
                "mc_reps {mc_reps} below the minimum {MIN_LILLIEFORS_REPS}"
            )));
        }
        let one = |rep: usize| -> f64 {
            let mut rng = seed::rng_from_seed(seed::derive_indexed(seed, rep as u64));
            let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            lilliefors_statistic(&x).unwrap_or(0.0)
        };
        #[cfg(feature = "parallel")]
        let mut stats: Vec<f64> = {
            use rayon::prelude::*;
            (0..mc_reps).into_par_iter().map(one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let mut stats: Vec<f64> = (0..mc_reps).map(one).collect();
        stats.sort_by(f64::total_cmp);
        Ok(Self { n, sorted_stats: stats })
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    /// Fraction of simulated statistics at least as large as `d`.
    pub fn p_value(&self, d: f64) -> f64 {
        let below = self.sorted_stats.partition_point(|&s| s < d);
        (self.sorted_stats.len() - below) as f64 / self.sorted_stats.len() as f64
    }

    pub fn test(&self, sample: &[f64]) -> Result<NormalityResult> {
        if sample.len() != self.n {
            return Err(Error::Shape(format!(
                "null table is for n = {}, sample has {}",
                self.n,
                sample.len()
            )));
        }
        let d = lilliefors_statistic(sample)?;
        Ok(NormalityResult {
            statistic: d,
            p_value: self.p_value(d),
        })
    }
}

pub fn lilliefors(sample: &[f64], mc_reps: usize, seed: u64) -> Result<NormalityResult> {
    // Validate the sample before paying for the simulation.
    lilliefors_statistic(sample)?;
    LillieforsNull::simulate(sample.len(), mc_reps, seed)?.test(sample)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub min: f64,
    pub max: f64,
}

impl ScaleParams {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::Degenerate(format!("scale range [{min}, {max}] is empty")));
        }
        Ok(Self { min, max })
    }

    pub fn fit(values: &[f64]) -> Result<Self> {
        let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        Self::new(min, max)
    }

    /// Like [`ScaleParams::fit`], but a constant column maps to `[c, c + 1]`
    /// so a window without variation still conditions cleanly.
    pub fn fit_or_unit(values: &[f64]) -> Result<Self> {
        match Self::fit(values) {
            Ok(s) => Ok(s),
            Err(_) if values.first().is_some_and(|v| v.is_finite()) => Self::new(values[0], values[0] + 1.0),
            Err(e) => Err(e),
        }
    }

    /// Widens the range by `fraction` of its span on each side.
    pub fn padded(self, fraction: f64) -> Self {
        let pad = (self.max - self.min) * fraction;
        Self {
            min: self.min - pad,
            max: self.max + pad,
        }
    }

    pub fn scale(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn unscale(&self, s: f64) -> f64 {
        self.min + s * (self.max - self.min)
    }
}

pub fn minmax_scale(values: &[f64]) -> Result<(Vec<f64>, ScaleParams)> {
    let p = ScaleParams::fit(values)?;
    Ok((values.iter().map(|&v| p.scale(v)).collect(), p))
}

pub fn minmax_unscale(scaled: &[f64], params: &ScaleParams) -> Vec<f64> {
    scaled.iter().map(|&s| params.unscale(s)).collect()
}
