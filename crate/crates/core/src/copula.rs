//! Gumbel-Hougaard copula: pseudo-observations, likelihood fitting, upper
//! tail dependence, diagonal Value-at-Risk thresholds and the binary
//! peak-load indicators built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{PeakFlags, Record, RecordSeries, Season, Variable};

/// Upper end of the dependence parameter search; beyond it the copula is
/// comonotone to working precision.
pub const ALPHA_MAX: f64 = 50.0;
pub const MIN_FIT_PAIRS: usize = 100;
pub const MIN_TAU_PAIRS: usize = 10;
/// Default VaR percentile.
pub const DEFAULT_P: f64 = 0.95;

/// Pairs of marginal probabilities strictly inside the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSample {
    u: Vec<f64>,
    v: Vec<f64>,
}

impl PseudoSample {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::Shape(format!("u has {} entries, v has {}", u.len(), v.len())));
        }
        if let Some(x) = u.iter().chain(&v).find(|x| !(**x > 0.0 && **x < 1.0)) {
            return Err(Error::Domain(format!("pseudo-observation {x} outside (0, 1)")));
        }
        Ok(Self { u, v })
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.u.iter().copied().zip(self.v.iter().copied())
    }
}

/// 1-based ranks; tied values share the average of their ranks.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// `u_i = rank(x_i) / (n + 1)`, likewise for `y`.
pub fn pseudo_observations(x: &[f64], y: &[f64]) -> Result<PseudoSample> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("x has {} values, y has {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::EmptyData("no pairs".into()));
    }
    let denom = (x.len() + 1) as f64;
    let u = average_ranks(x).into_iter().map(|r| r / denom).collect();
    let v = average_ranks(y).into_iter().map(|r| r / denom).collect();
    PseudoSample::new(u, v)
}

/// Gumbel-Hougaard copula with a validated dependence parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GumbelCopula {
    alpha: f64,
}

impl GumbelCopula {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0) || !alpha.is_finite() {
            return Err(Error::Parameter(format!(
                "Gumbel alpha must be finite and >= 1, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `(x^a + y^a)^(1/a)` evaluated without overflow.
    fn combine(&self, x: f64, y: f64) -> f64 {
        let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
        if hi == 0.0 {
            return 0.0;
        }
        if hi.is_infinite() {
            return f64::INFINITY;
        }
        hi * ((lo / hi).powf(self.alpha).ln_1p() / self.alpha).exp()
    }

    /// `C(u, v) = exp(-[(-ln u)^a + (-ln v)^a]^(1/a))` on the closed square.
    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        if u <= 0.0 || v <= 0.0 {
            return 0.0;
        }
        let a = self.combine(-u.min(1.0).ln(), -v.min(1.0).ln());
        (-a).exp()
    }

    /// Log of the copula density `d²C/du dv` on the open square.
    pub fn log_density(&self, u: f64, v: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0) {
            return Err(Error::Domain(format!("density undefined at ({u}, {v})")));
        }
        let x = -u.ln();
        let y = -v.ln();
        let a = self.alpha;
        let s = self.combine(x, y);
        Ok(-s + x + y + (a - 1.0) * (x.ln() + y.ln()) + (1.0 - 2.0 * a) * s.ln() + (s + a - 1.0).ln())
    }

    /// Conditional distribution `P(V <= v | U = u) = dC/du`.
    pub fn conditional_cdf(&self, u: f64, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        let x = -u.ln();
        let y = -v.ln();
        let s = self.combine(x, y);
        ((-s) + (1.0 - self.alpha) * s.ln() + (self.alpha - 1.0) * x.ln() + x).exp()
    }

    pub fn log_likelihood(&self, sample: &PseudoSample) -> f64 {
        sample
            .pairs()
            .map(|(u, v)| self.log_density(u, v).unwrap_or(f64::NEG_INFINITY))
            .sum()
    }
}

pub fn gumbel_cdf(u: f64, v: f64, alpha: f64) -> Result<f64> {
    Ok(GumbelCopula::new(alpha)?.cdf(u, v))
}

pub fn gumbel_log_density(u: f64, v: f64, alpha: f64) -> Result<f64> {
    GumbelCopula::new(alpha)?.log_density(u, v)
}

/// `2 - 2^(1/alpha)`.
pub fn upper_tail_dependence(alpha: f64) -> Result<f64> {
    GumbelCopula::new(alpha)?;
    Ok(2.0 - 2f64.powf(1.0 / alpha))
}

/// Kendall's tau-b in O(n log n) (Knight's merge-sort count).
/// Returns NaN when either margin is constant.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return f64::NAN;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let pairs = |len: u64| len * len.saturating_sub(1) / 2;
    let (mut tied_x, mut tied_xy) = (0u64, 0u64);
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                tied_xy += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            tied_x += pairs(run_x);
            tied_xy += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    tied_x += pairs(run_x);
    tied_xy += pairs(run_xy);

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);

    let mut tied_y = 0u64;
    let mut run_y = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_y += 1;
        } else {
            tied_y += pairs(run_y);
            run_y = 1;
        }
    }
    tied_y += pairs(run_y);

    let total = pairs(n as u64);
    let num = total as f64 - tied_x as f64 - tied_y as f64 + tied_xy as f64 - 2.0 * swaps as f64;
    let den = ((total - tied_x) as f64 * (total - tied_y) as f64).sqrt();
    if den == 0.0 {
        f64::NAN
    } else {
        num / den
    }
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Moment-style starting value `1 / (1 - tau)`, clamped to `[1, 50]`.
pub fn kendall_tau_alpha(sample: &PseudoSample) -> Result<f64> {
    if sample.n() < MIN_TAU_PAIRS {
        return Err(Error::SampleTooSmall {
            needed: MIN_TAU_PAIRS,
            got: sample.n(),
        });
    }
    Ok(alpha_from_tau(kendall_tau(sample.u(), sample.v())))
}

pub fn alpha_from_tau(tau: f64) -> f64 {
    if !(tau > 0.0) {
        return 1.0;
    }
    if tau >= 1.0 {
        return ALPHA_MAX;
    }
    (1.0 / (1.0 - tau)).clamp(1.0, ALPHA_MAX)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GumbelFit {
    pub alpha: f64,
    pub tail_upper: f64,
    pub tau: f64,
    pub alpha_init: f64,
    pub log_likelihood: f64,
    pub n: usize,
    pub evaluations: usize,
    /// Set when the sample shows no positive dependence.
    pub warning: Option<String>,
}

/// Maximum-likelihood alpha over `[1, 50]`: a bracket is grown from the
/// Kendall's-tau starting point, then closed by golden-section search in
/// `ln(alpha)`.
pub fn fit_gumbel_mle(sample: &PseudoSample) -> Result<GumbelFit> {
    if sample.n() < MIN_FIT_PAIRS {
        return Err(Error::SampleTooSmall {
            needed: MIN_FIT_PAIRS,
            got: sample.n(),
        });
    }
    let tau = kendall_tau(sample.u(), sample.v());
    let alpha_init = alpha_from_tau(tau);
    let warning = if tau.is_nan() || tau <= 0.0 {
        let msg = format!("Kendall's tau {tau:.4} shows no positive dependence; alpha starts at 1");
        log::warn!("{msg}");
        Some(msg)
    } else {
        None
    };
    let mut evaluations = 0usize;
    let mut objective = |t: f64| {
        evaluations += 1;
        let ll = GumbelCopula { alpha: t.exp() }.log_likelihood(sample);
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            ll
        }
    };
    let (t_best, ll) = maximize_bracketed(&mut objective, 0.0, ALPHA_MAX.ln(), alpha_init.ln())?;
    let alpha = if t_best >= ALPHA_MAX.ln() {
        ALPHA_MAX
    } else {
        t_best.exp().clamp(1.0, ALPHA_MAX)
    };
    Ok(GumbelFit {
        alpha,
        tail_upper: 2.0 - 2f64.powf(1.0 / alpha),
        tau,
        alpha_init,
        log_likelihood: ll,
        n: sample.n(),
        evaluations,
        warning,
    })
}

/// Maximizes a unimodal `f` on `[lo, hi]` starting near `x0`.
fn maximize_bracketed(f: &mut impl FnMut(f64) -> f64, lo: f64, hi: f64, x0: f64) -> Result<(f64, f64)> {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let mut step = 0.05 * (hi - lo);
    let x0 = x0.clamp(lo, hi);
    let (mut a, mut b, mut c) = ((x0 - step).max(lo), x0, (x0 + step).min(hi));
    let (mut fa, mut fb, mut fc) = (f(a), f(b), f(c));
    let mut bracketed = false;
    for _ in 0..200 {
        if fb >= fa && fb >= fc {
            bracketed = true;
            break;
        }
        step *= 1.6;
        if fa > fb {
            (c, fc) = (b, fb);
            (b, fb) = (a, fa);
            if a <= lo {
                bracketed = true;
                break;
            }
            a = (b - step).max(lo);
            fa = f(a);
        } else {
            (a, fa) = (b, fb);
            (b, fb) = (c, fc);
            if c >= hi {
                bracketed = true;
                break;
            }
            c = (b + step).min(hi);
            fc = f(c);
        }
    }
    if !bracketed || !fb.is_finite() {
        return Err(Error::Fit("could not bracket a finite likelihood maximum".into()));
    }

    let (mut x1, mut x2) = (a + GOLD * (c - a), c - GOLD * (c - a));
    let (mut f1, mut f2) = (f(x1), f(x2));
    while c - a > 1e-10 {
        if f1 >= f2 {
            c = x2;
            (x2, f2) = (x1, f1);
            x1 = a + GOLD * (c - a);
            f1 = f(x1);
        } else {
            a = x1;
            (x1, f1) = (x2, f2);
            x2 = c - GOLD * (c - a);
            f2 = f(x2);
        }
    }
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for edge in [lo, hi] {
        if (edge - best.0).abs() < 1e-6 {
            let fe = f(edge);
            if fe >= best.1 {
                best = (edge, fe);
            }
        }
    }
    Ok(best)
}

/// Empirical marginal distribution of one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMarginal {
    sorted: Vec<f64>,
}

impl EmpiricalMarginal {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyData("marginal needs at least one value".into()));
        }
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite marginal value {x}")));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of the sample at or below `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    /// Smallest sample value whose empirical cdf reaches `q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        let qn = q.clamp(0.0, 1.0) * n as f64;
        let r = qn.round();
        let k = if (qn - r).abs() < 1e-9 { r } else { qn.ceil() };
        let idx = (k as usize).saturating_sub(1).min(n - 1);
        self.sorted[idx]
    }
}

/// Marginal level `u*` solving `C(u, u) = p`, i.e. `p^(2^(-1/alpha))`.
pub fn diagonal_level(alpha: f64, p: f64) -> Result<f64> {
    GumbelCopula::new(alpha)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Parameter(format!("percentile {p} not in (0, 1)")));
    }
    Ok(p.powf(2f64.powf(-1.0 / alpha)))
}

/// Raw-unit threshold: the marginal quantile at the diagonal level.
pub fn var_threshold(alpha: f64, marginal: &EmpiricalMarginal, p: f64) -> Result<f64> {
    if !(p > 0.5 && p < 1.0) {
        return Err(Error::Parameter(format!("VaR percentile {p} not in (0.5, 1)")));
    }
    Ok(marginal.quantile(diagonal_level(alpha, p)?))
}

/// `1` where `value >= threshold`.
pub fn indicator_series(values: &[f64], threshold: f64) -> Vec<bool> {
    values.iter().map(|&v| v >= threshold).collect()
}

/// Fitted load-vs-variable copula with its VaR threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GumbelModel {
    pub variable_name: String,
    pub alpha: f64,
    pub tail_upper: f64,
    pub p: f64,
    /// Threshold in the variable's raw units.
    pub var_raw: f64,
    pub n: usize,
    pub season: Option<Season>,
}

impl GumbelModel {
    /// Fits load against `variable` over `series` and sets the threshold.
    pub fn fit(series: &RecordSeries, variable: Variable, p: f64, season: Option<Season>) -> Result<Self> {
        let load = series.loads();
        let other = series.column(variable);
        let fit = fit_gumbel_mle(&pseudo_observations(&load, &other)?)?;
        let marginal = EmpiricalMarginal::new(&other)?;
        let var_raw = var_threshold(fit.alpha, &marginal, p)?;
        Ok(Self {
            variable_name: variable.name().to_string(),
            alpha: fit.alpha,
            tail_upper: fit.tail_upper,
            p,
            var_raw,
            n: fit.n,
            season,
        })
    }

    pub fn validate(&self) -> Result<()> {
        GumbelCopula::new(self.alpha).map_err(|e| Error::document("alpha", e.to_string()))?;
        let expected = 2.0 - 2f64.powf(1.0 / self.alpha);
        if (self.tail_upper - expected).abs() > 1e-12 {
            return Err(Error::document(
                "tail_upper",
                format!("{} disagrees with alpha (expected {expected})", self.tail_upper),
            ));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::document("p", format!("{} not in (0, 1)", self.p)));
        }
        if !self.var_raw.is_finite() {
            return Err(Error::document("var_raw", "not finite"));
        }
        Ok(())
    }
}

/// The temperature and price copulas that drive the two indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaPair {
    pub temperature: GumbelModel,
    pub price: GumbelModel,
}

impl CopulaPair {
    pub fn fit(series: &RecordSeries, p: f64, season: Option<Season>) -> Result<Self> {
        Ok(Self {
            temperature: GumbelModel::fit(series, Variable::Temperature, p, season)?,
            price: GumbelModel::fit(series, Variable::Price, p, season)?,
        })
    }

    pub fn flags(&self, r: &Record) -> PeakFlags {
        PeakFlags {
            temp: r.temperature >= self.temperature.var_raw,
            price: r.price >= self.price.var_raw,
        }
    }

    pub fn flags_for(&self, series: &RecordSeries) -> Vec<PeakFlags> {
        series.rows().iter().map(|r| self.flags(r)).collect()
    }
}
