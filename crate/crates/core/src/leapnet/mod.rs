//! LEAP net and the residual baseline that takes the topology as an input,
//! plus standardization, training and checkpoints.

mod baseline;
mod checkpoint;
mod leap;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::{mse_loss, Activation, Tensor2};

pub use baseline::BaselineNet;
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use leap::{superposition_check, LeapNet};
pub use train::{train, TrainConfig, TrainState, TrainingSet};

/// Architecture sizes. `hidden` is the latent width shared by `E`, `d` and
/// the decoder's hidden layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeapConfig {
    pub n_x: usize,
    pub n_tau: usize,
    pub n_y: usize,
    pub hidden: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub units_per_action: usize,
    pub latent_activation: Activation,
}

impl LeapConfig {
    /// Default sizing: a single dense layer for `E` and for `D`, with a
    /// latent width of 128 or `200 * n_x / 153`, whichever is larger.
    pub fn for_dims(n_x: usize, n_tau: usize, n_y: usize) -> Self {
        let hidden = ((200.0 * n_x as f64 / 153.0).round() as usize).max(128);
        Self {
            n_x,
            n_tau,
            n_y,
            hidden,
            encoder_layers: 1,
            decoder_layers: 1,
            units_per_action: 2,
            latent_activation: Activation::LeakyRelu(0.1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Leap,
    Baseline,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Leap => "leap",
            ModelKind::Baseline => "baseline",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leap" => Ok(ModelKind::Leap),
            "baseline" => Ok(ModelKind::Baseline),
            other => Err(Error::Validation(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "layers")]
pub enum Net {
    Leap(LeapNet),
    Baseline(BaselineNet),
}

impl Net {
    pub fn kind(&self) -> ModelKind {
        match self {
            Net::Leap(_) => ModelKind::Leap,
            Net::Baseline(_) => ModelKind::Baseline,
        }
    }

    pub fn forward(&self, x: &Tensor2, tau: &Tensor2) -> Result<Tensor2> {
        match self {
            Net::Leap(n) => n.forward(x, tau),
            Net::Baseline(n) => n.forward(x, tau),
        }
    }

    /// Mean-square loss against `target` and its gradient for every
    /// parameter slice, in `params()` order.
    pub fn loss_and_grads(&self, x: &Tensor2, tau: &Tensor2, target: &Tensor2) -> Result<(f64, Vec<Vec<f64>>)> {
        match self {
            Net::Leap(n) => {
                let (y, cache) = n.forward_cached(x, tau)?;
                let (loss, g) = mse_loss(&y, target)?;
                Ok((loss, n.backward(&cache, &g)?))
            }
            Net::Baseline(n) => {
                let (y, cache) = n.forward_cached(x, tau)?;
                let (loss, g) = mse_loss(&y, target)?;
                Ok((loss, n.backward(&cache, &g)?))
            }
        }
    }

    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Net::Leap(n) => n.params(),
            Net::Baseline(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Net::Leap(n) => n.params_mut(),
            Net::Baseline(n) => n.params_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Net::Leap(n) => n.param_count(),
            Net::Baseline(n) => n.param_count(),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            Net::Leap(n) => (n.n_x(), n.n_tau(), n.n_y()),
            Net::Baseline(n) => (n.n_x, n.n_tau(), n.n_y()),
        }
    }
}

/// Per-feature affine scaling of inputs and targets. Topology vectors are
/// never scaled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

const MIN_STD: f64 = 1e-9;

fn column_stats(t: &Tensor2) -> (Vec<f64>, Vec<f64>) {
    let n = t.rows().max(1) as f64;
    let mean: Vec<f64> = t.sum_rows().iter().map(|s| s / n).collect();
    let mut var = vec![0.0; t.cols()];
    for i in 0..t.rows() {
        for ((v, x), m) in var.iter_mut().zip(t.row(i)).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var.iter().map(|v| (v / n).sqrt()).map(|s| if s < MIN_STD { 1.0 } else { s }).collect();
    (mean, std)
}

impl Standardizer {
    /// Fits mean and population standard deviation per column. Constant
    /// columns get a unit scale.
    pub fn fit(x: &Tensor2, y: &Tensor2) -> Self {
        let (x_mean, x_std) = column_stats(x);
        let (y_mean, y_std) = column_stats(y);
        Self { x_mean, x_std, y_mean, y_std }
    }

    pub fn identity(n_x: usize, n_y: usize) -> Self {
        Self { x_mean: vec![0.0; n_x], x_std: vec![1.0; n_x], y_mean: vec![0.0; n_y], y_std: vec![1.0; n_y] }
    }

    fn apply(t: &Tensor2, mean: &[f64], std: &[f64]) -> Result<Tensor2> {
        if t.cols() != mean.len() {
            return Err(shape_err!("{} columns, standardizer has {}", t.cols(), mean.len()));
        }
        let mut out = t.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(mean).zip(std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn scale_x(&self, x: &Tensor2) -> Result<Tensor2> {
        Self::apply(x, &self.x_mean, &self.x_std)
    }

    pub fn scale_y(&self, y: &Tensor2) -> Result<Tensor2> {
        Self::apply(y, &self.y_mean, &self.y_std)
    }

    pub fn unscale_y(&self, y: &Tensor2) -> Result<Tensor2> {
        if y.cols() != self.y_mean.len() {
            return Err(shape_err!("{} columns, standardizer has {}", y.cols(), self.y_mean.len()));
        }
        let mut out = y.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.y_mean).zip(&self.y_std) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }
}

/// A network together with the scaling it was trained under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub net: Net,
    pub standardizer: Standardizer,
}

impl Model {
    /// Fresh model with seeded initialization. The baseline gets a parameter
    /// budget matched to the LEAP net of the same configuration.
    pub fn new(kind: ModelKind, cfg: &LeapConfig, standardizer: Standardizer, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = match kind {
            ModelKind::Leap => Net::Leap(LeapNet::new(cfg, &mut rng)),
            ModelKind::Baseline => Net::Baseline(BaselineNet::matched(cfg, &mut rng)),
        };
        Self { net, standardizer }
    }

    pub fn kind(&self) -> ModelKind {
        self.net.kind()
    }

    /// Physical-unit prediction from physical-unit injections.
    pub fn predict(&self, x: &Tensor2, tau: &Tensor2) -> Result<Tensor2> {
        let out = self.net.forward(&self.standardizer.scale_x(x)?, tau)?;
        self.standardizer.unscale_y(&out)
    }
}
