//! Comparator models: a back-propagation MLP with random initialization and
//! an extreme learning machine.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use crate::dbn::network::{fine_tune_network, Dense, FineTuneReport, Network, OutputUnit, Scaling};
use crate::dbn::rbm::sigmoid;
use crate::dbn::{architecture_for, TrainConfig, FINETUNE_STREAM};
use crate::error::{Error, Result};
use crate::ingest::FeatureMatrix;
use crate::seed::{rng_for, Rng};

pub const DEFAULT_ELM_HIDDEN: usize = 30;
pub const ELM_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub network: Network,
    pub scaling: Scaling,
    pub config: TrainConfig,
}

impl MlpModel {
    pub fn architecture(&self) -> Vec<usize> {
        self.network.architecture()
    }

    pub fn predict(&self, raw: &[f64]) -> Result<f64> {
        let y = self.network.forward(&self.scaling.scale_inputs(raw)?)?;
        Ok(self.scaling.target.unscale(y))
    }

    pub fn check(&self) -> Result<()> {
        self.network.check()?;
        if self.scaling.width() != self.network.input_width() {
            return Err(Error::Shape(format!(
                "{} input scales for input width {}",
                self.scaling.width(),
                self.network.input_width()
            )));
        }
        Ok(())
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

/// Glorot-uniform weights, zero biases.
pub fn init_network(architecture: &[usize], seed: u64) -> Result<Network> {
    if architecture.len() < 3 || architecture.last() != Some(&1) || architecture.contains(&0) {
        return Err(Error::Shape(format!(
            "architecture {architecture:?} needs an input, at least one hidden layer and one output"
        )));
    }
    let mut rng = rng_for(seed, "mlp/init");
    let n = architecture.len();
    let hidden = architecture[..n - 1]
        .windows(2)
        .map(|w| Dense {
            weights: glorot(w[1], w[0], &mut rng),
            bias: DVector::zeros(w[1]),
        })
        .collect();
    let head = glorot(1, architecture[n - 2], &mut rng).row(0).transpose();
    Ok(Network {
        hidden,
        head: OutputUnit {
            weights: head,
            bias: 0.0,
        },
    })
}

pub fn train_mlp(data: &FeatureMatrix, hidden: &[usize], cfg: &TrainConfig) -> Result<(MlpModel, FineTuneReport)> {
    cfg.validate()?;
    let scaling = Scaling::fit(data)?;
    let network = init_network(&architecture_for(data.width(), hidden), cfg.seed)?;
    fine_tune_mlp(
        &MlpModel {
            network,
            scaling,
            config: cfg.clone(),
        },
        data,
        cfg,
    )
}

/// Back-propagation from the model's current weights.
pub fn fine_tune_mlp(model: &MlpModel, data: &FeatureMatrix, cfg: &TrainConfig) -> Result<(MlpModel, FineTuneReport)> {
    cfg.validate()?;
    model.check()?;
    let x = model.scaling.input_matrix(data)?;
    let t = model.scaling.scaled_targets(data);
    let mut rng = rng_for(cfg.seed, FINETUNE_STREAM);
    let (network, report) = fine_tune_network(&model.network, &x, &t, &cfg.finetune_settings(), &mut rng)?;
    Ok((
        MlpModel {
            network,
            scaling: model.scaling.clone(),
            config: cfg.clone(),
        },
        report,
    ))
}

/// Single hidden sigmoid layer with frozen random weights; the output layer
/// (with intercept) is a ridge least-squares fit in raw target units.
#[derive(Debug, Clone, PartialEq)]
pub struct ElmModel {
    pub hidden: Dense,
    /// One weight per hidden unit followed by the intercept.
    pub output: DVector<f64>,
    pub scaling: Scaling,
    pub seed: u64,
}

impl ElmModel {
    pub fn n_hidden(&self) -> usize {
        self.hidden.weights.nrows()
    }

    pub fn input_width(&self) -> usize {
        self.hidden.weights.ncols()
    }

    /// Hidden activations with a trailing column of ones.
    pub fn design(&self, scaled: &DMatrix<f64>) -> DMatrix<f64> {
        let n_h = self.n_hidden();
        let mut h = DMatrix::from_element(scaled.nrows(), n_h + 1, 1.0);
        let z = scaled * self.hidden.weights.transpose();
        for r in 0..scaled.nrows() {
            for j in 0..n_h {
                h[(r, j)] = sigmoid(z[(r, j)] + self.hidden.bias[j]);
            }
        }
        h
    }

    pub fn predict(&self, raw: &[f64]) -> Result<f64> {
        let x = self.scaling.scale_inputs(raw)?;
        let z = &self.hidden.weights * DVector::from_column_slice(&x) + &self.hidden.bias;
        let n_h = self.n_hidden();
        let mut y = self.output[n_h];
        for j in 0..n_h {
            y += self.output[j] * sigmoid(z[j]);
        }
        Ok(y)
    }

    pub fn check(&self) -> Result<()> {
        let n_h = self.n_hidden();
        if self.hidden.bias.len() != n_h || self.output.len() != n_h + 1 {
            return Err(Error::Shape(format!(
                "{n_h} hidden units with {} biases and {} output weights",
                self.hidden.bias.len(),
                self.output.len()
            )));
        }
        if self.scaling.width() != self.input_width() {
            return Err(Error::Shape(format!(
                "{} input scales for input width {}",
                self.scaling.width(),
                self.input_width()
            )));
        }
        let finite = self
            .hidden
            .weights
            .iter()
            .chain(self.hidden.bias.iter())
            .chain(self.output.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Parameter("ELM parameters must be finite".into()));
        }
        Ok(())
    }
}

pub fn train_elm(data: &FeatureMatrix, hidden: usize, seed: u64) -> Result<ElmModel> {
    if hidden == 0 {
        return Err(Error::Parameter("ELM needs at least one hidden unit".into()));
    }
    let scaling = Scaling::fit(data)?;
    let width = data.width();
    let mut rng = rng_for(seed, "elm/hidden");
    let layer = Dense {
        weights: DMatrix::from_fn(hidden, width, |_, _| rng.random_range(-1.0..1.0)),
        bias: DVector::from_fn(hidden, |_, _| rng.random_range(-1.0..1.0)),
    };
    let mut model = ElmModel {
        hidden: layer,
        output: DVector::zeros(hidden + 1),
        scaling,
        seed,
    };
    let x = model.scaling.input_matrix(data)?;
    let h = model.design(&x);
    let t = DVector::from_vec(data.targets());
    let mut gram = h.tr_mul(&h);
    for i in 0..gram.nrows() {
        gram[(i, i)] += ELM_RIDGE;
    }
    let rhs = h.tr_mul(&t);
    model.output = gram
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::Fit("ridge system is not positive definite".into()))?;
    model.check()?;
    Ok(model)
}
