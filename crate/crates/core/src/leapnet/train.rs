use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{shape_err, Error, Result};
use crate::nn::{adam_step, AdamConfig, AdamState, Tensor2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Last epoch to reach (epochs are numbered from 1).
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, batch_size: 64, learning_rate: 1e-3, seed: 0 }
    }
}

/// Progress that survives a checkpoint: the last completed epoch and the
/// optimizer moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub adam: AdamState,
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Self {
        Self { epoch: 0, adam: AdamState::new(AdamConfig { lr: config.learning_rate, ..AdamConfig::default() }) }
    }
}

/// Standardized training rows.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub x: Tensor2,
    pub tau: Tensor2,
    pub y: Tensor2,
}

impl TrainingSet {
    pub fn new(x: Tensor2, tau: Tensor2, y: Tensor2) -> Result<Self> {
        if x.rows() != tau.rows() || x.rows() != y.rows() {
            return Err(shape_err!("row counts differ: x {}, tau {}, y {}", x.rows(), tau.rows(), y.rows()));
        }
        Ok(Self { x, tau, y })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
}

/// Shuffle order for one epoch. Depends only on `(seed, epoch)` so a resumed
/// run replays the same batches as an uninterrupted one.
fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Minibatch Adam on the standardized mean-square error, from
/// `state.epoch + 1` through `config.epochs`.
///
/// `on_epoch(epoch, model, mean_batch_loss)` runs after every epoch and may
/// abort training by returning an error. Returns the mean batch loss of
/// each epoch run.
pub fn train<F>(
    model: &mut Model,
    state: &mut TrainState,
    data: &TrainingSet,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<f64>>
where
    F: FnMut(usize, &Model, f64) -> Result<()>,
{
    if data.is_empty() {
        return Err(Error::Precondition("empty training set".into()));
    }
    let (n_x, n_tau, n_y) = model.net.dims();
    if data.x.cols() != n_x || data.tau.cols() != n_tau || data.y.cols() != n_y {
        return Err(shape_err!(
            "training data ({}, {}, {}) does not match model ({n_x}, {n_tau}, {n_y})",
            data.x.cols(),
            data.tau.cols(),
            data.y.cols()
        ));
    }
    let batch_size = config.batch_size.max(1);
    let mut losses = Vec::new();
    for epoch in state.epoch + 1..=config.epochs {
        let order = epoch_order(config.seed, epoch, data.len());
        let mut total = 0.0;
        for (b, idx) in order.chunks(batch_size).enumerate() {
            let (x, tau, y) = (data.x.select_rows(idx), data.tau.select_rows(idx), data.y.select_rows(idx));
            let (loss, grads) = model.net.loss_and_grads(&x, &tau, &y)?;
            if !loss.is_finite() {
                return Err(Error::Numerics(format!("non-finite loss at epoch {epoch}, batch {b}")));
            }
            adam_step(&mut model.net.params_mut(), &grads, &mut state.adam).map_err(|e| match e {
                Error::Numerics(m) => Error::Numerics(format!("{m} at epoch {epoch}, batch {b}")),
                other => other,
            })?;
            total += loss * idx.len() as f64;
        }
        let mean = total / data.len() as f64;
        state.epoch = epoch;
        losses.push(mean);
        on_epoch(epoch, model, mean)?;
    }
    Ok(losses)
}
