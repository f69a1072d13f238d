use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LeapConfig;
use crate::error::{shape_err, Result};
use crate::nn::{Activation, DenseLayer, LayerCache, Tensor2};

/// Residual MLP on the concatenation `(x, tau)`:
/// `h0 = relu(W0 [x, tau] + b0)`, `h_{k+1} = h_k + relu(W_k h_k + b_k)`,
/// `y = W_out h_K + b_out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineNet {
    pub input: DenseLayer,
    pub blocks: Vec<DenseLayer>,
    pub head: DenseLayer,
    pub n_x: usize,
}

pub(crate) struct BaselineCache {
    input: LayerCache,
    blocks: Vec<LayerCache>,
    head: LayerCache,
}

impl BaselineNet {
    pub fn new<R: Rng>(n_x: usize, n_tau: usize, n_y: usize, width: usize, blocks: usize, rng: &mut R) -> Self {
        let input = DenseLayer::he_uniform(n_x + n_tau, width, true, Activation::Relu, rng);
        let blocks = (0..blocks).map(|_| DenseLayer::he_uniform(width, width, true, Activation::Relu, rng)).collect();
        let head = DenseLayer::he_uniform(width, n_y, true, Activation::Identity, rng);
        Self { input, blocks, head, n_x }
    }

    pub fn param_count_for(n_in: usize, n_y: usize, width: usize, blocks: usize) -> usize {
        (n_in + 1) * width + blocks * (width + 1) * width + (width + 1) * n_y
    }

    /// Width whose parameter count is closest to the LEAP net built from
    /// the same configuration, with `cfg.decoder_layers` residual blocks.
    pub fn matched_width(cfg: &LeapConfig) -> usize {
        let target = cfg.param_count() as i64;
        let blocks = cfg.decoder_layers;
        (1..=8 * cfg.hidden.max(1))
            .min_by_key(|&w| (Self::param_count_for(cfg.n_x + cfg.n_tau, cfg.n_y, w, blocks) as i64 - target).abs())
            .unwrap_or(1)
    }

    /// Baseline with a parameter budget matched to the LEAP configuration.
    pub fn matched<R: Rng>(cfg: &LeapConfig, rng: &mut R) -> Self {
        Self::new(cfg.n_x, cfg.n_tau, cfg.n_y, Self::matched_width(cfg), cfg.decoder_layers, rng)
    }

    pub fn n_tau(&self) -> usize {
        self.input.inputs() - self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.head.outputs()
    }

    fn concat(&self, x: &Tensor2, tau: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.n_x || tau.cols() != self.n_tau() || x.rows() != tau.rows() {
            return Err(shape_err!(
                "baseline expects x ({}) and tau ({}), got {:?} and {:?}",
                self.n_x,
                self.n_tau(),
                x.shape(),
                tau.shape()
            ));
        }
        x.hcat(tau)
    }

    pub fn forward(&self, x: &Tensor2, tau: &Tensor2) -> Result<Tensor2> {
        let mut h = self.input.forward(&self.concat(x, tau)?)?;
        for block in &self.blocks {
            h = h.add(&block.forward(&h)?)?;
        }
        self.head.forward(&h)
    }

    pub(crate) fn forward_cached(&self, x: &Tensor2, tau: &Tensor2) -> Result<(Tensor2, BaselineCache)> {
        let (mut h, input) = self.input.forward_cached(&self.concat(x, tau)?)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (r, c) = block.forward_cached(&h)?;
            blocks.push(c);
            h = h.add(&r)?;
        }
        let (y, head) = self.head.forward_cached(&h)?;
        Ok((y, BaselineCache { input, blocks, head }))
    }

    pub(crate) fn backward(&self, cache: &BaselineCache, grad_y: &Tensor2) -> Result<Vec<Vec<f64>>> {
        let (g_head, mut grad_h) = self.head.backward(&cache.head, grad_y)?;
        let mut g_blocks = Vec::with_capacity(self.blocks.len());
        for (block, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            let (g, through) = block.backward(c, &grad_h)?;
            g_blocks.push(g);
            grad_h = grad_h.add(&through)?;
        }
        g_blocks.reverse();
        let (g_input, _) = self.input.backward(&cache.input, &grad_h)?;

        let mut flat = Vec::new();
        for g in std::iter::once(g_input).chain(g_blocks).chain([g_head]) {
            g.into_flat(&mut flat);
        }
        Ok(flat)
    }

    fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        std::iter::once(&self.input).chain(self.blocks.iter()).chain([&self.head])
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers().flat_map(DenseLayer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        std::iter::once(&mut self.input)
            .chain(self.blocks.iter_mut())
            .chain([&mut self.head])
            .flat_map(DenseLayer::params_mut)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(DenseLayer::param_count).sum()
    }
}

impl LeapConfig {
    /// Parameter count of the LEAP net this configuration builds.
    pub fn param_count(&self) -> usize {
        let h = self.hidden;
        let wide = self.n_tau * self.units_per_action;
        let enc = (self.n_x + 1) * h + self.encoder_layers.max(1).saturating_sub(1) * (h + 1) * h;
        let latent = (h + 1) * wide + wide * h;
        let dec = self.decoder_layers.max(1).saturating_sub(1) * (h + 1) * h + (h + 1) * self.n_y;
        enc + latent + dec
    }
}
