use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::train_dbn;
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::ingest::FeatureMatrix;
use crate::seed::rng_for;

/// Share of the rows used for the search.
pub const SEARCH_FRACTION: f64 = 0.1;
/// Share of the search rows held out for scoring.
const HOLDOUT_FRACTION: f64 = 0.2;
const MIN_SEARCH_ROWS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSearch {
    pub width: usize,
    pub depth: usize,
    /// Holdout MAPE for each single-layer width.
    pub width_scan: Vec<(usize, f64)>,
    /// Holdout MAPE for each depth at the chosen width.
    pub depth_scan: Vec<(usize, f64)>,
}

impl StructureSearch {
    pub fn hidden(&self) -> Vec<usize> {
        vec![self.width; self.depth]
    }
}

fn holdout_mape(train: &FeatureMatrix, holdout: &FeatureMatrix, hidden: &[usize], cfg: &TrainConfig) -> f64 {
    let Ok((model, _)) = train_dbn(train, hidden, cfg) else {
        return f64::INFINITY;
    };
    let mut total = 0.0;
    for row in &holdout.rows {
        match model.predict(&row.inputs) {
            Ok(p) if row.target != 0.0 => total += ((p - row.target) / row.target).abs(),
            _ => return f64::INFINITY,
        }
    }
    total / holdout.len() as f64
}

fn scan(items: Vec<usize>, eval: impl Fn(usize) -> f64 + Sync + Send) -> Vec<(usize, f64)> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(|i| (i, eval(i))).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(|i| (i, eval(i))).collect()
    }
}

/// First entry with the strictly lowest score; ranges are scanned in
/// increasing size, so ties keep the smaller network.
fn argmin(scores: &[(usize, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(k, s) in scores {
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((k, s));
        }
    }
    best.filter(|b| b.1.is_finite()).map(|b| b.0)
}

/// Two-phase architecture search on a seeded subsample: single-layer widths
/// first, then depths at the winning width. Candidates share `cfg.seed`.
pub fn structure_search(
    data: &FeatureMatrix,
    neurons: RangeInclusive<usize>,
    layers: RangeInclusive<usize>,
    cfg: &TrainConfig,
) -> Result<StructureSearch> {
    cfg.validate()?;
    if neurons.is_empty() || *neurons.start() == 0 || layers.is_empty() || *layers.start() == 0 {
        return Err(Error::Config(format!("empty search ranges {neurons:?} x {layers:?}")));
    }
    let k = ((data.len() as f64 * SEARCH_FRACTION).ceil() as usize).min(data.len());
    if k < MIN_SEARCH_ROWS {
        return Err(Error::SampleTooSmall {
            needed: MIN_SEARCH_ROWS,
            got: k,
        });
    }
    let mut rng = rng_for(cfg.seed, "dbn/search");
    let mut picked = rand::seq::index::sample(&mut rng, data.len(), k).into_vec();
    picked.shuffle(&mut rng);
    let n_hold = ((k as f64 * HOLDOUT_FRACTION).round() as usize).max(1);
    let (hold_idx, train_idx) = picked.split_at(n_hold);
    let holdout = data.select(hold_idx);
    let train = data.select(train_idx);

    let width_scan = scan(neurons.collect(), |w| holdout_mape(&train, &holdout, &[w], cfg));
    let width = argmin(&width_scan).ok_or_else(|| Error::Training("no width candidate trained".into()))?;
    let depth_scan = scan(layers.collect(), |d| {
        holdout_mape(&train, &holdout, &vec![width; d], cfg)
    });
    let depth = argmin(&depth_scan).ok_or_else(|| Error::Training("no depth candidate trained".into()))?;
    Ok(StructureSearch {
        width,
        depth,
        width_scan,
        depth_scan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_keep_the_first() {
        assert_eq!(argmin(&[(2, 0.1), (3, 0.1), (4, 0.2)]), Some(2));
        assert_eq!(argmin(&[(2, 0.3), (3, 0.1), (4, 0.1)]), Some(3));
        assert_eq!(argmin(&[(2, f64::INFINITY)]), None);
    }
}
