//! Mini-batch Adam training over [`Example`]s.
//!
//! Runs are single-threaded and fully determined by the seed: the shuffle
//! order comes from a ChaCha stream and every reduction has a fixed order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::network::{Example, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Stop after this many epochs without relative improvement of the
    /// training objective by `min_delta`. `None` trains for all epochs.
    pub patience: Option<usize>,
    pub min_delta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            seed: 0,
            adam: AdamConfig::default(),
            patience: Some(5),
            min_delta: 1e-3,
        }
    }
}

/// Mean losses observed during one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean unweighted loss per head over samples carrying that head's target.
    pub head_loss: Vec<Option<f64>>,
    /// Mean weighted objective per sample.
    pub objective: f64,
}

pub fn fit(
    network: &Network,
    params: &mut [f64],
    examples: &[Example],
    config: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    if examples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let n_heads = network.heads().len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(network.param_count(), config.adam);
    let mut ws = network.workspace();
    let mut grad = vec![0.0; network.param_count()];
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = vec![0.0; n_heads];
        let mut count = vec![0usize; n_heads];
        let mut objective = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            grad.fill(0.0);
            let loss = network.batch_loss(params, &batch, &mut ws, Some(&mut grad))?;
            if !loss.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: loss.total,
                });
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            network.check_gradient(&grad)?;
            adam.step(params, &grad)?;
            for h in 0..n_heads {
                loss_sum[h] += loss.head_loss[h];
                count[h] += loss.head_count[h];
            }
            objective += loss.total;
        }
        let objective = objective / examples.len() as f64;
        if !objective.is_finite() {
            return Err(Error::Diverged { epoch, loss: objective });
        }
        history.push(EpochStats {
            epoch,
            head_loss: loss_sum
                .iter()
                .zip(&count)
                .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
                .collect(),
            objective,
        });
        if let Some(patience) = config.patience {
            if objective < best * (1.0 - config.min_delta) {
                best = objective;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }
    Ok(history)
}
