use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor2;
use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if v > 0.0 {
                    v
                } else {
                    a * v
                }
            }
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if pre > 0.0 {
                    1.0
                } else {
                    a
                }
            }
        }
    }
}

/// `act(x · W + b)` with `W` stored as `inputs x outputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Tensor2,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

/// What `backward` needs from the matching `forward` call.
#[derive(Clone, Debug)]
pub struct LayerCache {
    input: Tensor2,
    pre: Tensor2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub weight: Tensor2,
    pub bias: Option<Vec<f64>>,
}

impl DenseLayer {
    pub fn new(weight: Tensor2, bias: Option<Vec<f64>>, activation: Activation) -> Result<Self> {
        if let Some(b) = &bias {
            if b.len() != weight.cols() {
                return Err(shape_err!("bias has {} entries for {} outputs", b.len(), weight.cols()));
            }
        }
        Ok(Self { weight, bias, activation })
    }

    /// He-style uniform initialization, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`,
    /// zero bias.
    pub fn he_uniform<R: Rng>(
        inputs: usize,
        outputs: usize,
        with_bias: bool,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / inputs.max(1) as f64).sqrt();
        let data = (0..inputs * outputs).map(|_| rng.random_range(-limit..=limit)).collect();
        Self {
            weight: Tensor2::from_vec(inputs, outputs, data).expect("sized"),
            bias: with_bias.then(|| vec![0.0; outputs]),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weight.data().len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    fn pre_activation(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.inputs() {
            return Err(shape_err!("layer expects {} inputs, got {}", self.inputs(), x.cols()));
        }
        let mut z = x.matmul(&self.weight)?;
        if let Some(b) = &self.bias {
            for i in 0..z.rows() {
                for (v, bj) in z.row_mut(i).iter_mut().zip(b) {
                    *v += bj;
                }
            }
        }
        Ok(z)
    }

    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        let act = self.activation;
        Ok(self.pre_activation(x)?.map(|v| act.apply(v)))
    }

    pub fn forward_cached(&self, x: &Tensor2) -> Result<(Tensor2, LayerCache)> {
        let pre = self.pre_activation(x)?;
        let act = self.activation;
        let out = pre.map(|v| act.apply(v));
        Ok((out, LayerCache { input: x.clone(), pre }))
    }

    /// Returns parameter gradients and the gradient with respect to the
    /// layer input.
    pub fn backward(&self, cache: &LayerCache, grad_out: &Tensor2) -> Result<(LayerGrads, Tensor2)> {
        if cache.input.cols() != self.inputs() || cache.pre.cols() != self.outputs() {
            return Err(shape_err!("cache does not belong to this layer"));
        }
        if grad_out.shape() != cache.pre.shape() {
            return Err(shape_err!("upstream gradient {:?} vs output {:?}", grad_out.shape(), cache.pre.shape()));
        }
        let act = self.activation;
        let delta = grad_out.zip_with(&cache.pre, |g, z| g * act.derivative(z))?;
        let weight = cache.input.t_matmul(&delta)?;
        let bias = self.bias.as_ref().map(|_| delta.sum_rows());
        let grad_in = delta.matmul_t(&self.weight)?;
        Ok((LayerGrads { weight, bias }, grad_in))
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut v = vec![self.weight.data()];
        if let Some(b) = &self.bias {
            v.push(b.as_slice());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![self.weight.data_mut()];
        if let Some(b) = &mut self.bias {
            v.push(b.as_mut_slice());
        }
        v
    }
}

impl LayerGrads {
    pub(crate) fn into_flat(self, out: &mut Vec<Vec<f64>>) {
        out.push(self.weight.into_data());
        if let Some(b) = self.bias {
            out.push(b);
        }
    }
}

/// Runs a layer stack, keeping every cache for `backward`.
pub fn forward(layers: &[DenseLayer], x: &Tensor2) -> Result<(Tensor2, Vec<LayerCache>)> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut h = x.clone();
    for layer in layers {
        let (out, cache) = layer.forward_cached(&h)?;
        caches.push(cache);
        h = out;
    }
    Ok((h, caches))
}

/// Inference-only pass through a layer stack.
pub fn predict(layers: &[DenseLayer], x: &Tensor2) -> Result<Tensor2> {
    let mut h = x.clone();
    for layer in layers {
        h = layer.forward(&h)?;
    }
    Ok(h)
}

/// Reverse pass over a stack. Gradients come back in layer order.
pub fn backward(
    layers: &[DenseLayer],
    caches: &[LayerCache],
    upstream: &Tensor2,
) -> Result<(Vec<LayerGrads>, Tensor2)> {
    if caches.len() != layers.len() {
        return Err(shape_err!("{} caches for {} layers", caches.len(), layers.len()));
    }
    let mut grads = Vec::with_capacity(layers.len());
    let mut g = upstream.clone();
    for (layer, cache) in layers.iter().zip(caches).rev() {
        let (lg, gin) = layer.backward(cache, &g)?;
        grads.push(lg);
        g = gin;
    }
    grads.reverse();
    Ok((grads, g))
}
