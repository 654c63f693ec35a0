//! Feed-forward sigmoid network with a single sigmoid regression unit, the
//! input/target scaling shared by every trained model, and mini-batch
//! back-propagation.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::rbm::{column_sums, sigmoid};
use crate::error::{Error, Result};
use crate::ingest::{FeatureMatrix, WIDTH_PLAIN};
use crate::seed::Rng;
use crate::transform::ScaleParams;

/// Fraction of the observed target span added on each side of the target
/// scale, so the bounded output can reach slightly past the training range.
pub const TARGET_PADDING: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `outputs x inputs`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.weights * x + &self.bias).map(sigmoid)
    }

    fn forward_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.weights.transpose();
        for mut row in z.row_iter_mut() {
            row += self.bias.transpose();
        }
        z.map(sigmoid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputUnit {
    pub weights: DVector<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub hidden: Vec<Dense>,
    pub head: OutputUnit,
}

impl Network {
    pub fn input_width(&self) -> usize {
        self.hidden
            .first()
            .map_or(self.head.weights.len(), |d| d.weights.ncols())
    }

    /// Layer widths from input to the single output.
    pub fn architecture(&self) -> Vec<usize> {
        let mut a = vec![self.input_width()];
        a.extend(self.hidden.iter().map(|d| d.weights.nrows()));
        a.push(1);
        a
    }

    pub fn check(&self) -> Result<()> {
        let mut width = self.input_width();
        for (k, d) in self.hidden.iter().enumerate() {
            if d.weights.ncols() != width || d.bias.len() != d.weights.nrows() {
                return Err(Error::Shape(format!(
                    "layer {k}: weights {}x{} with bias {} after width {width}",
                    d.weights.nrows(),
                    d.weights.ncols(),
                    d.bias.len()
                )));
            }
            width = d.weights.nrows();
        }
        if self.head.weights.len() != width {
            return Err(Error::Shape(format!(
                "output unit has {} weights after width {width}",
                self.head.weights.len()
            )));
        }
        if !self.params().iter().all(|x| x.is_finite()) {
            return Err(Error::Parameter("network parameters must be finite".into()));
        }
        Ok(())
    }

    /// Output in scaled target units.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_width() {
            return Err(Error::Shape(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.input_width()
            )));
        }
        let mut a = DVector::from_column_slice(x);
        for d in &self.hidden {
            a = d.forward(&a);
        }
        Ok(sigmoid(self.head.weights.dot(&a) + self.head.bias))
    }

    /// Activations of every layer, input first, plus the outputs.
    fn activations(&self, x: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let mut acts = Vec::with_capacity(self.hidden.len() + 1);
        acts.push(x.clone());
        for d in &self.hidden {
            let next = d.forward_batch(acts.last().expect("input present"));
            acts.push(next);
        }
        let last = acts.last().expect("input present");
        let out = (last * &self.head.weights).map(|z| sigmoid(z + self.head.bias));
        (acts, out)
    }

    pub fn predict_batch(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.activations(x).1.iter().copied().collect()
    }

    /// Sum of squared errors in scaled units.
    pub fn sse(&self, x: &DMatrix<f64>, targets: &[f64]) -> f64 {
        let (_, out) = self.activations(x);
        out.iter().zip(targets).map(|(y, t)| (y - t).powi(2)).sum()
    }

    /// Half the mean squared error over the batch.
    pub fn loss(&self, x: &DMatrix<f64>, targets: &[f64]) -> f64 {
        0.5 * self.sse(x, targets) / x.nrows() as f64
    }

    /// Gradient of [`Network::loss`], laid out as a network of the same shape.
    pub fn gradient(&self, x: &DMatrix<f64>, targets: &[f64]) -> Network {
        let (acts, out) = self.activations(x);
        let n = x.nrows() as f64;
        let delta_out = DVector::from_iterator(
            out.len(),
            out.iter().zip(targets).map(|(&y, &t)| (y - t) / n * y * (1.0 - y)),
        );
        let last = acts.last().expect("input present");
        let head = OutputUnit {
            weights: last.tr_mul(&delta_out),
            bias: delta_out.sum(),
        };

        let mut grads = Vec::with_capacity(self.hidden.len());
        let mut delta = &delta_out * self.head.weights.transpose();
        for k in (0..self.hidden.len()).rev() {
            let a = &acts[k + 1];
            delta.zip_apply(a, |d, s| *d *= s * (1.0 - s));
            grads.push(Dense {
                weights: delta.tr_mul(&acts[k]),
                bias: column_sums(&delta),
            });
            if k > 0 {
                delta = &delta * &self.hidden[k].weights;
            }
        }
        grads.reverse();
        Network { hidden: grads, head }
    }

    /// `self += step * g`.
    pub fn add_scaled(&mut self, g: &Network, step: f64) {
        for (d, gd) in self.hidden.iter_mut().zip(&g.hidden) {
            d.weights += &gd.weights * step;
            d.bias += &gd.bias * step;
        }
        self.head.weights += &g.head.weights * step;
        self.head.bias += g.head.bias * step;
    }

    /// Every parameter, layer by layer (weights column-major, then bias),
    /// head last.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for d in &self.hidden {
            v.extend(d.weights.iter());
            v.extend(d.bias.iter());
        }
        v.extend(self.head.weights.iter());
        v.push(self.head.bias);
        v
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.params().len() {
            return Err(Error::Shape(format!(
                "{} parameters for a network of {}",
                p.len(),
                self.params().len()
            )));
        }
        let mut it = p.iter().copied();
        for d in &mut self.hidden {
            d.weights
                .iter_mut()
                .for_each(|w| *w = it.next().expect("length checked"));
            d.bias.iter_mut().for_each(|w| *w = it.next().expect("length checked"));
        }
        self.head
            .weights
            .iter_mut()
            .for_each(|w| *w = it.next().expect("length checked"));
        self.head.bias = it.next().expect("length checked");
        Ok(())
    }
}

/// Min-max scaling of the input columns and the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub inputs: Vec<ScaleParams>,
    pub target: ScaleParams,
}

impl Scaling {
    /// Input columns are fitted on the data (constant columns map to a unit
    /// span); indicator columns use the fixed `{0, 1}` range. The target
    /// range is padded on both sides.
    pub fn fit(features: &FeatureMatrix) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Training("no training rows".into()));
        }
        let width = features.width();
        let mut inputs = Vec::with_capacity(width);
        for c in 0..width {
            if c >= WIDTH_PLAIN {
                inputs.push(ScaleParams::new(0.0, 1.0)?);
            } else {
                let col: Vec<f64> = features.rows.iter().map(|r| r.inputs[c]).collect();
                inputs.push(ScaleParams::fit_or_unit(&col)?);
            }
        }
        let target = ScaleParams::fit_or_unit(&features.targets())?.padded(TARGET_PADDING);
        Ok(Self { inputs, target })
    }

    pub fn width(&self) -> usize {
        self.inputs.len()
    }

    pub fn scale_inputs(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.inputs.len() {
            return Err(Error::Shape(format!(
                "input has {} values, model expects {}",
                raw.len(),
                self.inputs.len()
            )));
        }
        Ok(raw.iter().zip(&self.inputs).map(|(&x, s)| s.scale(x)).collect())
    }

    pub fn input_matrix(&self, features: &FeatureMatrix) -> Result<DMatrix<f64>> {
        if features.width() != self.width() {
            return Err(Error::Shape(format!(
                "features have width {}, scaling expects {}",
                features.width(),
                self.width()
            )));
        }
        let mut m = DMatrix::zeros(features.len(), self.width());
        for (r, row) in features.rows.iter().enumerate() {
            for (c, (&x, s)) in row.inputs.iter().zip(&self.inputs).enumerate() {
                m[(r, c)] = s.scale(x);
            }
        }
        Ok(m)
    }

    pub fn scaled_targets(&self, features: &FeatureMatrix) -> Vec<f64> {
        features.rows.iter().map(|r| self.target.scale(r.target)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Consecutive training errors differed by less than the tolerance.
    Converged,
    EpochCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneReport {
    /// Training SSE before the first epoch, then after each epoch.
    pub errors: Vec<f64>,
    pub epochs: usize,
    pub best_epoch: usize,
    pub stop: StopReason,
}

impl FineTuneReport {
    pub fn initial_error(&self) -> f64 {
        self.errors[0]
    }

    pub fn best_error(&self) -> f64 {
        self.errors[self.best_epoch]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineTuneSettings {
    pub eta: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub beta: f64,
}

/// Mini-batch gradient descent on the half mean squared error.
///
/// After each epoch the training SSE is recomputed; training stops once it
/// changes by less than `beta` or the epoch cap is reached. The returned
/// network is the lowest-error snapshot seen, so it never does worse than
/// the input on the training set. An SSE above ten times the initial value
/// aborts with a divergence error.
pub fn fine_tune_network(
    net: &Network,
    x: &DMatrix<f64>,
    targets: &[f64],
    settings: &FineTuneSettings,
    rng: &mut Rng,
) -> Result<(Network, FineTuneReport)> {
    net.check()?;
    if x.nrows() == 0 {
        return Err(Error::Training("no training rows".into()));
    }
    if x.nrows() != targets.len() || x.ncols() != net.input_width() {
        return Err(Error::Shape(format!(
            "{}x{} inputs with {} targets for a network of width {}",
            x.nrows(),
            x.ncols(),
            targets.len(),
            net.input_width()
        )));
    }
    let initial = net.sse(x, targets);
    let mut report = FineTuneReport {
        errors: vec![initial],
        epochs: 0,
        best_epoch: 0,
        stop: StopReason::EpochCap,
    };
    let mut best = net.clone();
    let mut current = net.clone();
    let mut prev = initial;
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let batch = settings.batch_size.max(1);

    for epoch in 1..=settings.max_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            let xb = x.select_rows(chunk);
            let tb: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let g = current.gradient(&xb, &tb);
            current.add_scaled(&g, -settings.eta);
        }
        let err = current.sse(x, targets);
        report.errors.push(err);
        report.epochs = epoch;
        if !err.is_finite() || err > 10.0 * initial.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence {
                epoch,
                error: err,
                initial,
            });
        }
        if err < report.best_error() {
            best = current.clone();
            report.best_epoch = epoch;
        }
        if (err - prev).abs() < settings.beta {
            report.stop = StopReason::Converged;
            break;
        }
        prev = err;
    }
    Ok((best, report))
}
