//! Deep belief network: stacked RBMs pre-trained greedily with CD-1, a
//! sigmoid regression unit on top, and back-propagation fine-tuning.

pub mod exact;
mod model;
pub mod network;
mod pretrain;
pub mod rbm;
mod search;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use model::{fine_tune, train_dbn, DbnModel, DbnReport, FINETUNE_STREAM};
pub use network::{Dense, FineTuneReport, Network, OutputUnit, Scaling, StopReason};
pub use pretrain::{pretrain, Pretrained};
pub use rbm::RbmParams;
pub use search::{structure_search, StructureSearch, SEARCH_FRACTION};

/// Hidden widths of the default 14-30-30-30-1 network.
pub const DEFAULT_HIDDEN: [usize; 3] = [30, 30, 30];
/// Standard deviation of the initial RBM weights.
pub const INIT_SD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub eta_pretrain: f64,
    pub eta_finetune: f64,
    pub pretrain_epochs: usize,
    pub max_finetune_epochs: usize,
    pub batch_size: usize,
    /// Fine-tuning stops once the training error changes by less than this.
    pub beta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta_pretrain: 0.05,
            eta_finetune: 0.01,
            pretrain_epochs: 100,
            max_finetune_epochs: 1000,
            batch_size: 10,
            beta: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta_pretrain", self.eta_pretrain),
            ("eta_finetune", self.eta_finetune),
            ("beta", self.beta),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn finetune_settings(&self) -> network::FineTuneSettings {
        network::FineTuneSettings {
            eta: self.eta_finetune,
            max_epochs: self.max_finetune_epochs,
            batch_size: self.batch_size,
            beta: self.beta,
        }
    }
}

/// `[input, hidden..., 1]`.
pub fn architecture_for(input_width: usize, hidden: &[usize]) -> Vec<usize> {
    let mut a = Vec::with_capacity(hidden.len() + 2);
    a.push(input_width);
    a.extend_from_slice(hidden);
    a.push(1);
    a
}
