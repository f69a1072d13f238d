use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LeapConfig;
use crate::error::{shape_err, Error, Result};
use crate::nn::{self, Activation, DenseLayer, LayerCache, Tensor2};

/// `y = D(h + d(e(h) ⊙ tau~))` with `h = E(x)`, where `tau~` repeats every
/// topology bit `units_per_action` times.
///
/// `latent_decoder` is linear without bias, so a zero topology vector adds
/// exactly nothing to the latent code and leaps from disjoint actions add up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeapNet {
    pub encoder: Vec<DenseLayer>,
    pub latent_encoder: DenseLayer,
    pub latent_decoder: DenseLayer,
    pub decoder: Vec<DenseLayer>,
    pub units_per_action: usize,
}

pub(crate) struct LeapCache {
    encoder: Vec<LayerCache>,
    latent_encoder: LayerCache,
    latent_decoder: LayerCache,
    decoder: Vec<LayerCache>,
    tau_wide: Tensor2,
}

impl LeapNet {
    pub fn new<R: Rng>(cfg: &LeapConfig, rng: &mut R) -> Self {
        let h = cfg.hidden;
        let mut encoder = Vec::with_capacity(cfg.encoder_layers);
        let mut width = cfg.n_x;
        for _ in 0..cfg.encoder_layers.max(1) {
            encoder.push(DenseLayer::he_uniform(width, h, true, Activation::Relu, rng));
            width = h;
        }
        let wide = cfg.n_tau * cfg.units_per_action;
        let latent_encoder = DenseLayer::he_uniform(h, wide, true, cfg.latent_activation, rng);
        let latent_decoder = DenseLayer::he_uniform(wide, h, false, Activation::Identity, rng);
        let mut decoder = Vec::with_capacity(cfg.decoder_layers);
        for _ in 1..cfg.decoder_layers.max(1) {
            decoder.push(DenseLayer::he_uniform(h, h, true, Activation::Relu, rng));
        }
        decoder.push(DenseLayer::he_uniform(h, cfg.n_y, true, Activation::Identity, rng));
        Self { encoder, latent_encoder, latent_decoder, decoder, units_per_action: cfg.units_per_action }
    }

    /// Assembles a network from explicit parts, checking that `h + L(h)` is
    /// well typed and that the latent decoder is bias-free.
    pub fn from_parts(
        encoder: Vec<DenseLayer>,
        latent_encoder: DenseLayer,
        latent_decoder: DenseLayer,
        decoder: Vec<DenseLayer>,
        units_per_action: usize,
    ) -> Result<Self> {
        let net = Self { encoder, latent_encoder, latent_decoder, decoder, units_per_action };
        net.check()?;
        Ok(net)
    }

    fn check(&self) -> Result<()> {
        let latent = self.latent_dim();
        if self.latent_decoder.bias.is_some() || self.latent_decoder.activation != Activation::Identity {
            return Err(Error::Precondition("latent decoder must be linear without bias".into()));
        }
        if self.latent_encoder.inputs() != latent || self.latent_decoder.outputs() != latent {
            return Err(shape_err!("latent modules do not match latent width {latent}"));
        }
        if self.latent_encoder.outputs() != self.latent_decoder.inputs() {
            return Err(shape_err!("latent encoder/decoder widths differ"));
        }
        if self.units_per_action == 0 || !self.latent_encoder.outputs().is_multiple_of(self.units_per_action) {
            return Err(shape_err!("latent width is not a multiple of units per action"));
        }
        if self.decoder.first().map(DenseLayer::inputs) != Some(latent) {
            return Err(shape_err!("decoder does not accept latent width {latent}"));
        }
        Ok(())
    }

    pub fn n_x(&self) -> usize {
        self.encoder.first().map_or(0, DenseLayer::inputs)
    }

    pub fn n_tau(&self) -> usize {
        self.latent_encoder.outputs() / self.units_per_action
    }

    pub fn n_y(&self) -> usize {
        self.decoder.last().map_or(0, DenseLayer::outputs)
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.last().map_or(0, DenseLayer::outputs)
    }

    /// `E(x)`.
    pub fn encode(&self, x: &Tensor2) -> Result<Tensor2> {
        nn::predict(&self.encoder, x)
    }

    /// `D(h)`.
    pub fn decode(&self, h: &Tensor2) -> Result<Tensor2> {
        nn::predict(&self.decoder, h)
    }

    /// The leap `L_tau(h) = d(e(h) ⊙ tau~)`.
    pub fn latent_leap(&self, h: &Tensor2, tau: &Tensor2) -> Result<Tensor2> {
        self.check_tau(h.rows(), tau)?;
        let z = self.latent_encoder.forward(h)?;
        let masked = z.hadamard(&tau.repeat_cols(self.units_per_action))?;
        self.latent_decoder.forward(&masked)
    }

    fn check_tau(&self, rows: usize, tau: &Tensor2) -> Result<()> {
        if tau.shape() != (rows, self.n_tau()) {
            return Err(shape_err!("topology batch {:?}, expected ({rows}, {})", tau.shape(), self.n_tau()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor2, tau: &Tensor2) -> Result<Tensor2> {
        let h = self.encode(x)?;
        let leap = self.latent_leap(&h, tau)?;
        self.decode(&h.add(&leap)?)
    }

    pub(crate) fn forward_cached(&self, x: &Tensor2, tau: &Tensor2) -> Result<(Tensor2, LeapCache)> {
        let (h, encoder) = nn::forward(&self.encoder, x)?;
        self.check_tau(h.rows(), tau)?;
        let (z, latent_encoder) = self.latent_encoder.forward_cached(&h)?;
        let tau_wide = tau.repeat_cols(self.units_per_action);
        let masked = z.hadamard(&tau_wide)?;
        let (leap, latent_decoder) = self.latent_decoder.forward_cached(&masked)?;
        let (y, decoder) = nn::forward(&self.decoder, &h.add(&leap)?)?;
        Ok((y, LeapCache { encoder, latent_encoder, latent_decoder, decoder, tau_wide }))
    }

    /// Gradients in `params()` order.
    pub(crate) fn backward(&self, cache: &LeapCache, grad_y: &Tensor2) -> Result<Vec<Vec<f64>>> {
        let (g_dec, grad_latent) = nn::backward(&self.decoder, &cache.decoder, grad_y)?;
        let (g_d, grad_masked) = self.latent_decoder.backward(&cache.latent_decoder, &grad_latent)?;
        let grad_z = grad_masked.hadamard(&cache.tau_wide)?;
        let (g_e, grad_h_leap) = self.latent_encoder.backward(&cache.latent_encoder, &grad_z)?;
        let grad_h = grad_latent.add(&grad_h_leap)?;
        let (g_enc, _) = nn::backward(&self.encoder, &cache.encoder, &grad_h)?;

        let mut flat = Vec::new();
        for g in g_enc.into_iter().chain([g_e, g_d]).chain(g_dec) {
            g.into_flat(&mut flat);
        }
        Ok(flat)
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers().flat_map(DenseLayer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .iter_mut()
            .chain([&mut self.latent_encoder, &mut self.latent_decoder])
            .chain(self.decoder.iter_mut())
            .flat_map(DenseLayer::params_mut)
            .collect()
    }

    fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.encoder.iter().chain([&self.latent_encoder, &self.latent_decoder]).chain(self.decoder.iter())
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(DenseLayer::param_count).sum()
    }
}

/// Largest absolute entry of `L_{tau_i ∨ tau_j}(h) - L_{tau_i}(h) - L_{tau_j}(h)`
/// over the latent codes `h = E(x)` of a batch of inputs.
pub fn superposition_check(net: &LeapNet, x: &Tensor2, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::Precondition(format!("superposition needs two distinct actions, got {i} twice")));
    }
    let n_tau = net.n_tau();
    if i >= n_tau || j >= n_tau {
        return Err(Error::Precondition(format!("action index out of range for {n_tau} actions")));
    }
    let h = net.encode(x)?;
    let tau_of = |idx: &[usize]| {
        let mut t = Tensor2::zeros(h.rows(), n_tau);
        for r in 0..h.rows() {
            for &k in idx {
                t.row_mut(r)[k] = 1.0;
            }
        }
        t
    };
    let both = net.latent_leap(&h, &tau_of(&[i, j]))?;
    let sum = net.latent_leap(&h, &tau_of(&[i]))?.add(&net.latent_leap(&h, &tau_of(&[j]))?)?;
    Ok(both.max_abs_diff(&sum))
}
