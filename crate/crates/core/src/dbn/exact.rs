//! Exact RBM quantities by enumerating every joint binary state. Only
//! feasible for tiny machines; used to check the sampled training rules.

// Sums are written with explicit (j, i) indices to match `weights[(j, i)]`.
#![allow(clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};

use super::rbm::RbmParams;
use crate::error::{Error, Result};

/// Largest `n_visible + n_hidden` accepted for enumeration.
pub const MAX_ENUMERATION_UNITS: usize = 16;

/// Gradient (or update) with the same layout as [`RbmParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct RbmGradient {
    pub weights: DMatrix<f64>,
    pub visible_bias: DVector<f64>,
    pub hidden_bias: DVector<f64>,
}

impl RbmGradient {
    fn zeros_like(p: &RbmParams) -> Self {
        Self {
            weights: DMatrix::zeros(p.n_hidden(), p.n_visible()),
            visible_bias: DVector::zeros(p.n_visible()),
            hidden_bias: DVector::zeros(p.n_hidden()),
        }
    }

    pub fn dot(&self, other: &RbmGradient) -> f64 {
        self.weights.dot(&other.weights)
            + self.visible_bias.dot(&other.visible_bias)
            + self.hidden_bias.dot(&other.hidden_bias)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.weights
            .iter()
            .chain(self.visible_bias.iter())
            .chain(self.hidden_bias.iter())
            .copied()
            .collect()
    }

    /// `params + step * self`.
    pub fn apply(&self, params: &RbmParams, step: f64) -> RbmParams {
        RbmParams {
            weights: &params.weights + &self.weights * step,
            visible_bias: &params.visible_bias + &self.visible_bias * step,
            hidden_bias: &params.hidden_bias + &self.hidden_bias * step,
        }
    }
}

/// All binary vectors of length `n`, in counting order.
pub fn binary_states(n: usize) -> impl Iterator<Item = Vec<f64>> {
    (0u32..1 << n).map(move |s| (0..n).map(|i| f64::from((s >> i) & 1)).collect())
}

fn check_size(p: &RbmParams) -> Result<()> {
    let units = p.n_visible() + p.n_hidden();
    if units > MAX_ENUMERATION_UNITS {
        return Err(Error::Parameter(format!(
            "enumeration needs n_visible + n_hidden <= {MAX_ENUMERATION_UNITS}, got {units}"
        )));
    }
    Ok(())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Visible state, hidden state, negative energy.
type JointState = (Vec<f64>, Vec<f64>, f64);

fn joint_states(p: &RbmParams) -> Result<Vec<JointState>> {
    check_size(p)?;
    let hidden: Vec<Vec<f64>> = binary_states(p.n_hidden()).collect();
    let mut out = Vec::with_capacity(hidden.len() << p.n_visible());
    for v in binary_states(p.n_visible()) {
        for h in &hidden {
            let neg = -p.energy(&v, h)?;
            out.push((v.clone(), h.clone(), neg));
        }
    }
    Ok(out)
}

/// `ln Z` summed over all `2^(n_v + n_h)` joint states.
pub fn log_partition(p: &RbmParams) -> Result<f64> {
    let negs: Vec<f64> = joint_states(p)?.into_iter().map(|s| s.2).collect();
    Ok(log_sum_exp(&negs))
}

/// `P(v, h) = exp(-E(v, h)) / Z`.
pub fn joint_probability(p: &RbmParams, v: &[f64], h: &[f64]) -> Result<f64> {
    Ok((-p.energy(v, h)? - log_partition(p)?).exp())
}

/// Mean over data rows of `ln P(v)`, marginalizing `h` by enumeration.
pub fn log_likelihood(p: &RbmParams, data: &DMatrix<f64>) -> Result<f64> {
    check_size(p)?;
    if data.nrows() == 0 {
        return Err(Error::EmptyData("no data rows".into()));
    }
    let log_z = log_partition(p)?;
    let hidden: Vec<Vec<f64>> = binary_states(p.n_hidden()).collect();
    let mut total = 0.0;
    for row in data.row_iter() {
        let v: Vec<f64> = row.iter().copied().collect();
        let negs = hidden
            .iter()
            .map(|h| p.energy(&v, h).map(|e| -e))
            .collect::<Result<Vec<_>>>()?;
        total += log_sum_exp(&negs) - log_z;
    }
    Ok(total / data.nrows() as f64)
}

/// Exact gradient of [`log_likelihood`]: data expectation minus model
/// expectation, the latter summed over every joint state.
pub fn exact_loglik_gradient(p: &RbmParams, data: &DMatrix<f64>) -> Result<RbmGradient> {
    let states = joint_states(p)?;
    if data.nrows() == 0 {
        return Err(Error::EmptyData("no data rows".into()));
    }
    let mut g = RbmGradient::zeros_like(p);
    let inv_n = 1.0 / data.nrows() as f64;
    for row in data.row_iter() {
        let v: Vec<f64> = row.iter().copied().collect();
        let ph = p.hidden_probs(&v)?;
        for j in 0..p.n_hidden() {
            for i in 0..p.n_visible() {
                g.weights[(j, i)] += inv_n * ph[j] * v[i];
            }
            g.hidden_bias[j] += inv_n * ph[j];
        }
        for i in 0..p.n_visible() {
            g.visible_bias[i] += inv_n * v[i];
        }
    }
    let negs: Vec<f64> = states.iter().map(|s| s.2).collect();
    let log_z = log_sum_exp(&negs);
    for (v, h, neg) in &states {
        let prob = (neg - log_z).exp();
        for j in 0..p.n_hidden() {
            for i in 0..p.n_visible() {
                g.weights[(j, i)] -= prob * h[j] * v[i];
            }
            g.hidden_bias[j] -= prob * h[j];
        }
        for i in 0..p.n_visible() {
            g.visible_bias[i] -= prob * v[i];
        }
    }
    Ok(g)
}

/// Expectation of one CD-1 step (per unit learning rate) over the sampled
/// hidden state, obtained by enumerating that state.
pub fn expected_cd1_update(p: &RbmParams, data: &DMatrix<f64>) -> Result<RbmGradient> {
    check_size(p)?;
    if data.nrows() == 0 {
        return Err(Error::EmptyData("no data rows".into()));
    }
    let mut g = RbmGradient::zeros_like(p);
    let inv_n = 1.0 / data.nrows() as f64;
    for row in data.row_iter() {
        let v0: Vec<f64> = row.iter().copied().collect();
        let ph0 = p.hidden_probs(&v0)?;
        for j in 0..p.n_hidden() {
            for i in 0..p.n_visible() {
                g.weights[(j, i)] += inv_n * ph0[j] * v0[i];
            }
            g.hidden_bias[j] += inv_n * ph0[j];
        }
        for i in 0..p.n_visible() {
            g.visible_bias[i] += inv_n * v0[i];
        }
        for h0 in binary_states(p.n_hidden()) {
            let weight: f64 = h0
                .iter()
                .zip(&ph0)
                .map(|(&h, &q)| if h == 1.0 { q } else { 1.0 - q })
                .product::<f64>()
                * inv_n;
            let v1 = p.visible_probs(&h0)?;
            let ph1 = p.hidden_probs(&v1)?;
            for j in 0..p.n_hidden() {
                for i in 0..p.n_visible() {
                    g.weights[(j, i)] -= weight * ph1[j] * v1[i];
                }
                g.hidden_bias[j] -= weight * ph1[j];
            }
            for i in 0..p.n_visible() {
                g.visible_bias[i] -= weight * v1[i];
            }
        }
    }
    Ok(g)
}
