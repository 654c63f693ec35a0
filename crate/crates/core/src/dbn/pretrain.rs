use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use super::rbm::RbmParams;
use super::{TrainConfig, INIT_SD};
use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub struct Pretrained {
    pub rbms: Vec<RbmParams>,
    /// Per RBM, the mean reconstruction error after each epoch.
    pub reconstruction_errors: Vec<Vec<f64>>,
}

/// Greedy layer-wise CD-1 training. `widths` lists the visible width of the
/// first RBM followed by every hidden width; RBM `k` trains on the hidden
/// probabilities produced by RBM `k - 1`.
pub fn pretrain(widths: &[usize], data: &DMatrix<f64>, cfg: &TrainConfig) -> Result<Pretrained> {
    cfg.validate()?;
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::Shape(format!("cannot stack RBMs over widths {widths:?}")));
    }
    if data.nrows() == 0 {
        return Err(Error::Training("no rows to pre-train on".into()));
    }
    if data.ncols() != widths[0] {
        return Err(Error::Shape(format!(
            "data has {} columns, first RBM expects {}",
            data.ncols(),
            widths[0]
        )));
    }

    let mut rbms = Vec::with_capacity(widths.len() - 1);
    let mut errors = Vec::with_capacity(widths.len() - 1);
    let mut layer_input = data.clone();
    for (k, w) in widths.windows(2).enumerate() {
        let mut rbm = RbmParams::random(w[0], w[1], INIT_SD, &mut rng_for(cfg.seed, &format!("dbn/init/{k}")));
        let mut rng = rng_for(cfg.seed, &format!("dbn/cd/{k}"));
        let mut order: Vec<usize> = (0..layer_input.nrows()).collect();
        let mut layer_errors = Vec::with_capacity(cfg.pretrain_epochs);
        for _ in 0..cfg.pretrain_epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                rbm = rbm.cd1_update(&layer_input.select_rows(chunk), cfg.eta_pretrain, &mut rng)?;
            }
            layer_errors.push(rbm.reconstruction_error(&layer_input)?);
        }
        layer_input = rbm.hidden_probs_batch(&layer_input)?;
        rbms.push(rbm);
        errors.push(layer_errors);
    }
    Ok(Pretrained {
        rbms,
        reconstruction_errors: errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> DMatrix<f64> {
        DMatrix::from_fn(40, 5, |r, c| ((r * 7 + c * 3) % 11) as f64 / 10.0)
    }

    #[test]
    fn paper_shape_blocks() {
        let cfg = TrainConfig {
            pretrain_epochs: 1,
            ..Default::default()
        };
        let x = DMatrix::from_fn(20, 14, |r, c| ((r + c) % 5) as f64 / 4.0);
        let p = pretrain(&[14, 30, 30, 30], &x, &cfg).unwrap();
        let shapes: Vec<(usize, usize)> = p.rbms.iter().map(|r| r.weights.shape()).collect();
        assert_eq!(shapes, vec![(30, 14), (30, 30), (30, 30)]);
    }

    #[test]
    fn zero_epochs_is_initialization() {
        let cfg = TrainConfig {
            pretrain_epochs: 0,
            seed: 5,
            ..Default::default()
        };
        let p = pretrain(&[5, 4], &data(), &cfg).unwrap();
        let init = RbmParams::random(5, 4, INIT_SD, &mut rng_for(5, "dbn/init/0"));
        assert_eq!(p.rbms[0], init);
        assert!(p.reconstruction_errors[0].is_empty());
    }

    #[test]
    fn replay_is_bit_identical() {
        let cfg = TrainConfig {
            pretrain_epochs: 5,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(
            pretrain(&[5, 4, 3], &data(), &cfg).unwrap(),
            pretrain(&[5, 4, 3], &data(), &cfg).unwrap()
        );
    }

    #[test]
    fn errors_for_bad_inputs() {
        let cfg = TrainConfig::default();
        assert!(matches!(
            pretrain(&[5, 4], &DMatrix::zeros(0, 5), &cfg),
            Err(Error::Training(_))
        ));
        assert!(matches!(pretrain(&[6, 4], &data(), &cfg), Err(Error::Shape(_))));
        assert!(matches!(pretrain(&[5], &data(), &cfg), Err(Error::Shape(_))));
    }
}
