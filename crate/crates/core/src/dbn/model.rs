use nalgebra::DVector;
use rand_distr::{Distribution, Normal};

use super::network::{fine_tune_network, Dense, FineTuneReport, Network, OutputUnit, Scaling};
use super::pretrain::pretrain;
use super::rbm::RbmParams;
use super::{architecture_for, TrainConfig, INIT_SD};
use crate::error::{Error, Result};
use crate::ingest::{FeatureMatrix, WIDTH_PLAIN, WIDTH_WITH_INDICATORS};
use crate::seed::rng_for;

/// Seed label of the fine-tuning shuffle, shared with the MLP baseline so both
/// see identical batch orders.
pub const FINETUNE_STREAM: &str = "finetune";

#[derive(Debug, Clone, PartialEq)]
pub struct DbnModel {
    /// Input width, hidden widths, then 1.
    pub architecture: Vec<usize>,
    pub rbms: Vec<RbmParams>,
    pub head: OutputUnit,
    pub scaling: Scaling,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbnReport {
    pub reconstruction_errors: Vec<Vec<f64>>,
    pub fine_tune: FineTuneReport,
}

impl DbnModel {
    pub fn check(&self) -> Result<()> {
        let a = &self.architecture;
        if a.len() < 2 || a.last() != Some(&1) {
            return Err(Error::Shape(format!("architecture {a:?} must end in a single output")));
        }
        if a[0] != WIDTH_PLAIN && a[0] != WIDTH_WITH_INDICATORS {
            return Err(Error::Shape(format!(
                "input width {} is neither {WIDTH_PLAIN} nor {WIDTH_WITH_INDICATORS}",
                a[0]
            )));
        }
        if self.rbms.len() != a.len() - 2 {
            return Err(Error::Shape(format!("{} RBMs for architecture {a:?}", self.rbms.len())));
        }
        for (k, r) in self.rbms.iter().enumerate() {
            r.check()?;
            if (r.n_visible(), r.n_hidden()) != (a[k], a[k + 1]) {
                return Err(Error::Shape(format!(
                    "RBM {k} is {}x{}, architecture needs {}x{}",
                    r.n_hidden(),
                    r.n_visible(),
                    a[k + 1],
                    a[k]
                )));
            }
        }
        if self.scaling.width() != a[0] {
            return Err(Error::Shape(format!(
                "{} input scales for input width {}",
                self.scaling.width(),
                a[0]
            )));
        }
        self.network().check()
    }

    pub fn with_indicators(&self) -> bool {
        self.architecture[0] == WIDTH_WITH_INDICATORS
    }

    /// The up-pass network: RBM weights and hidden biases plus the head.
    pub fn network(&self) -> Network {
        Network {
            hidden: self
                .rbms
                .iter()
                .map(|r| Dense {
                    weights: r.weights.clone(),
                    bias: r.hidden_bias.clone(),
                })
                .collect(),
            head: self.head.clone(),
        }
    }

    fn absorb(&mut self, net: Network) {
        for (r, d) in self.rbms.iter_mut().zip(net.hidden) {
            r.weights = d.weights;
            r.hidden_bias = d.bias;
        }
        self.head = net.head;
    }

    /// Load in MW for one raw input row.
    pub fn predict(&self, raw: &[f64]) -> Result<f64> {
        let x = self.scaling.scale_inputs(raw)?;
        let mut a = DVector::from_column_slice(&x);
        for r in &self.rbms {
            a = (&r.weights * a + &r.hidden_bias).map(super::rbm::sigmoid);
        }
        let y = super::rbm::sigmoid(self.head.weights.dot(&a) + self.head.bias);
        Ok(self.scaling.target.unscale(y))
    }
}

/// Pre-trains the stack on the scaled inputs, adds a small random head and
/// fine-tunes the whole network.
pub fn train_dbn(features: &FeatureMatrix, hidden: &[usize], cfg: &TrainConfig) -> Result<(DbnModel, DbnReport)> {
    cfg.validate()?;
    if hidden.is_empty() || hidden.contains(&0) {
        return Err(Error::Shape(format!(
            "hidden widths {hidden:?} must be non-empty and positive"
        )));
    }
    let scaling = Scaling::fit(features)?;
    let x = scaling.input_matrix(features)?;
    let architecture = architecture_for(features.width(), hidden);
    let pre = pretrain(&architecture[..architecture.len() - 1], &x, cfg)?;

    let normal = Normal::new(0.0, INIT_SD).expect("finite sd");
    let mut rng = rng_for(cfg.seed, "dbn/head");
    let head = OutputUnit {
        weights: DVector::from_fn(hidden[hidden.len() - 1], |_, _| normal.sample(&mut rng)),
        bias: 0.0,
    };
    let model = DbnModel {
        architecture,
        rbms: pre.rbms,
        head,
        scaling,
        config: cfg.clone(),
    };
    let (model, report) = fine_tune(&model, features, cfg)?;
    Ok((
        model,
        DbnReport {
            reconstruction_errors: pre.reconstruction_errors,
            fine_tune: report,
        },
    ))
}

/// Back-propagation through the whole stack on the model's own scaling.
pub fn fine_tune(model: &DbnModel, features: &FeatureMatrix, cfg: &TrainConfig) -> Result<(DbnModel, FineTuneReport)> {
    cfg.validate()?;
    model.check()?;
    let x = model.scaling.input_matrix(features)?;
    let t = model.scaling.scaled_targets(features);
    let mut rng = rng_for(cfg.seed, FINETUNE_STREAM);
    let (net, report) = fine_tune_network(&model.network(), &x, &t, &cfg.finetune_settings(), &mut rng)?;
    let mut out = model.clone();
    out.absorb(net);
    out.config = cfg.clone();
    Ok((out, report))
}
