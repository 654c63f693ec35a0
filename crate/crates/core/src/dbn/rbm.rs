use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed::Rng;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli-Bernoulli RBM. `weights` is `n_hidden x n_visible`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    pub weights: DMatrix<f64>,
    pub visible_bias: DVector<f64>,
    pub hidden_bias: DVector<f64>,
}

impl RbmParams {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            weights: DMatrix::zeros(n_hidden, n_visible),
            visible_bias: DVector::zeros(n_visible),
            hidden_bias: DVector::zeros(n_hidden),
        }
    }

    /// Weights drawn from `N(0, sd^2)`, zero biases.
    pub fn random(n_visible: usize, n_hidden: usize, sd: f64, rng: &mut Rng) -> Self {
        let normal = Normal::new(0.0, sd).expect("finite sd");
        let mut p = Self::zeros(n_visible, n_hidden);
        p.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
        p
    }

    pub fn from_parts(weights: DMatrix<f64>, visible_bias: DVector<f64>, hidden_bias: DVector<f64>) -> Result<Self> {
        let p = Self {
            weights,
            visible_bias,
            hidden_bias,
        };
        p.check()?;
        Ok(p)
    }

    pub fn n_visible(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.nrows()
    }

    pub fn check(&self) -> Result<()> {
        if self.visible_bias.len() != self.n_visible() || self.hidden_bias.len() != self.n_hidden() {
            return Err(Error::Shape(format!(
                "weights {}x{} with visible bias {} and hidden bias {}",
                self.n_hidden(),
                self.n_visible(),
                self.visible_bias.len(),
                self.hidden_bias.len()
            )));
        }
        let finite = self
            .weights
            .iter()
            .chain(self.visible_bias.iter())
            .chain(self.hidden_bias.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Parameter("RBM parameters must be finite".into()));
        }
        Ok(())
    }

    fn check_visible(&self, len: usize) -> Result<()> {
        if len != self.n_visible() {
            return Err(Error::Shape(format!(
                "visible vector has {len} entries, RBM has {}",
                self.n_visible()
            )));
        }
        Ok(())
    }

    fn check_hidden(&self, len: usize) -> Result<()> {
        if len != self.n_hidden() {
            return Err(Error::Shape(format!(
                "hidden vector has {len} entries, RBM has {}",
                self.n_hidden()
            )));
        }
        Ok(())
    }

    /// `E(v, h) = -a.v - b.h - h' W v`.
    pub fn energy(&self, v: &[f64], h: &[f64]) -> Result<f64> {
        self.check_visible(v.len())?;
        self.check_hidden(h.len())?;
        let v = DVector::from_column_slice(v);
        let h = DVector::from_column_slice(h);
        Ok(-self.visible_bias.dot(&v) - self.hidden_bias.dot(&h) - h.dot(&(&self.weights * &v)))
    }

    /// `P(h_j = 1 | v)` for every hidden unit.
    pub fn hidden_probs(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_visible(v.len())?;
        let act = &self.weights * DVector::from_column_slice(v) + &self.hidden_bias;
        Ok(act.iter().map(|&x| sigmoid(x)).collect())
    }

    /// `P(v_i = 1 | h)` for every visible unit.
    pub fn visible_probs(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_hidden(h.len())?;
        let act = self.weights.tr_mul(&DVector::from_column_slice(h)) + &self.visible_bias;
        Ok(act.iter().map(|&x| sigmoid(x)).collect())
    }

    /// Row-wise hidden probabilities for a batch whose rows are samples.
    pub fn hidden_probs_batch(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_visible(v.ncols())?;
        let mut act = v * self.weights.transpose();
        for mut row in act.row_iter_mut() {
            row += self.hidden_bias.transpose();
        }
        act.apply(|x| *x = sigmoid(*x));
        Ok(act)
    }

    pub fn visible_probs_batch(&self, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_hidden(h.ncols())?;
        let mut act = h * &self.weights;
        for mut row in act.row_iter_mut() {
            row += self.visible_bias.transpose();
        }
        act.apply(|x| *x = sigmoid(*x));
        Ok(act)
    }

    /// One contrastive-divergence step on a batch (rows are samples).
    ///
    /// Hidden states are sampled for the reconstruction; statistics use
    /// probabilities. Updates are averaged over the batch.
    pub fn cd1_update(&self, batch: &DMatrix<f64>, eta: f64, rng: &mut Rng) -> Result<RbmParams> {
        self.check_visible(batch.ncols())?;
        if batch.nrows() == 0 {
            return Err(Error::Training("empty batch".into()));
        }
        if eta == 0.0 {
            return Ok(self.clone());
        }
        let ph0 = self.hidden_probs_batch(batch)?;
        let h0 = ph0.map(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        let v1 = self.visible_probs_batch(&h0)?;
        let ph1 = self.hidden_probs_batch(&v1)?;

        let scale = eta / batch.nrows() as f64;
        let dw = ph0.tr_mul(batch) - ph1.tr_mul(&v1);
        let da = column_sums(batch) - column_sums(&v1);
        let db = column_sums(&ph0) - column_sums(&ph1);
        Ok(RbmParams {
            weights: &self.weights + dw * scale,
            visible_bias: &self.visible_bias + da * scale,
            hidden_bias: &self.hidden_bias + db * scale,
        })
    }

    /// Mean over rows of `|v - P(v | P(h | v))|^2`.
    pub fn reconstruction_error(&self, data: &DMatrix<f64>) -> Result<f64> {
        if data.nrows() == 0 {
            return Err(Error::Training("no rows to reconstruct".into()));
        }
        let recon = self.visible_probs_batch(&self.hidden_probs_batch(data)?)?;
        Ok((recon - data).norm_squared() / data.nrows() as f64)
    }
}

pub(crate) fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    m.row_sum().transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn unit() -> RbmParams {
        RbmParams::from_parts(
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap()
    }

    #[test]
    fn energy_substitution() {
        assert_eq!(unit().energy(&[1.0], &[1.0]).unwrap(), -4.0);
        let z = RbmParams::zeros(3, 2);
        assert_eq!(z.energy(&[1.0, 0.3, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn energy_with_hidden_off_is_visible_term() {
        let mut rng = rng_from_seed(3);
        let mut p = RbmParams::random(3, 2, 1.0, &mut rng);
        p.visible_bias = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        p.hidden_bias = DVector::from_vec(vec![3.0, -4.0]);
        let v = [0.2, 1.0, 0.7];
        let e = p.energy(&v, &[0.0, 0.0]).unwrap();
        assert!((e + (0.5 * 0.2 - 1.0 + 1.4)).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let p = RbmParams::zeros(3, 2);
        assert!(matches!(p.energy(&[1.0], &[0.0, 0.0]), Err(Error::Shape(_))));
        assert!(matches!(p.hidden_probs(&[1.0, 0.0]), Err(Error::Shape(_))));
        assert!(matches!(p.visible_probs(&[1.0]), Err(Error::Shape(_))));
        assert!(RbmParams::from_parts(DMatrix::zeros(2, 3), DVector::zeros(2), DVector::zeros(2)).is_err());
    }

    #[test]
    fn zero_params_give_half() {
        let p = RbmParams::zeros(4, 3);
        assert!(p.hidden_probs(&[1.0, 0.0, 0.5, 1.0]).unwrap().iter().all(|&x| x == 0.5));
        assert!(p.visible_probs(&[1.0, 0.0, 1.0]).unwrap().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn saturated_bias() {
        let mut p = RbmParams::zeros(2, 2);
        p.hidden_bias.fill(50.0);
        p.visible_bias.fill(50.0);
        assert!(p.hidden_probs(&[0.0, 1.0]).unwrap().iter().all(|&x| (1.0 - x) < 1e-9));
        assert!(p.visible_probs(&[0.0, 1.0]).unwrap().iter().all(|&x| (1.0 - x) < 1e-9));
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = rng_from_seed(9);
        let p = RbmParams::random(3, 2, 0.7, &mut rng);
        let data = DMatrix::from_row_slice(2, 3, &[0.1, 0.9, 0.4, 1.0, 0.0, 0.5]);
        let hb = p.hidden_probs_batch(&data).unwrap();
        for r in 0..2 {
            let row: Vec<f64> = data.row(r).iter().copied().collect();
            let single = p.hidden_probs(&row).unwrap();
            for j in 0..2 {
                assert!((hb[(r, j)] - single[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_rate_is_identity() {
        let mut rng = rng_from_seed(1);
        let p = RbmParams::random(3, 2, 0.1, &mut rng);
        let batch = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 1.0]);
        assert_eq!(p.cd1_update(&batch, 0.0, &mut rng).unwrap(), p);
    }

    #[test]
    fn repeated_pattern_reconstructs() {
        let mut rng = rng_from_seed(11);
        let mut p = RbmParams::random(6, 4, 0.01, &mut rng);
        let batch = DMatrix::from_row_slice(1, 6, &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let before = p.reconstruction_error(&batch).unwrap();
        for _ in 0..200 {
            p = p.cd1_update(&batch, 0.1, &mut rng).unwrap();
        }
        let after = p.reconstruction_error(&batch).unwrap();
        assert!(after <= 0.5 * before, "{before} -> {after}");
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
    }
}
