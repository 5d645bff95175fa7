//! Fully connected tanh networks with hand-written backpropagation.
//!
//! The learning equations only provide gradients with respect to the
//! network outputs, so each trainer computes that output gradient and hands
//! it to [`NetworkParams::backward`].

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ContinuousCodes, Modality};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `fan_in x fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    modality: Modality,
    layer_dims: Vec<usize>,
    seed: u64,
    layers: Vec<Layer>,
}

/// Per-layer gradients, shaped like [`NetworkParams`] layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input followed by every layer's tanh output.
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkManifest {
    pub modality: Modality,
    pub layer_dims: Vec<usize>,
    pub seed: u64,
}

impl NetworkParams {
    /// Uniform weights on `±sqrt(3 / fan_in)` (unit variance per unit of
    /// fan-in), zero biases.
    pub fn init(layer_dims: &[usize], modality: Modality, seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer dims {layer_dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let bound = (3.0 / w[0] as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || rng.gen_range(-bound..bound)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self {
            modality,
            layer_dims: layer_dims.to_vec(),
            seed,
            layers,
        })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn manifest(&self) -> NetworkManifest {
        NetworkManifest {
            modality: self.modality,
            layer_dims: self.layer_dims.clone(),
            seed: self.seed,
        }
    }

    fn check_input(&self, input: ArrayView2<'_, f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::shape("network input", self.input_dim(), input.ncols()));
        }
        Ok(())
    }

    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<ContinuousCodes> {
        self.check_input(input)?;
        let mut x = input.to_owned();
        for layer in &self.layers {
            x = affine_tanh(x.view(), layer);
        }
        ContinuousCodes::new(x)
    }

    pub fn forward_cached(&self, input: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_owned());
        for layer in &self.layers {
            let next = affine_tanh(activations.last().unwrap().view(), layer);
            activations.push(next);
        }
        Ok(ForwardCache { activations })
    }

    /// Gradient of `sum(upstream * output)` with respect to every weight and
    /// bias, for the batch recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache, upstream: ArrayView2<'_, f64>) -> Result<Gradients> {
        let out = cache.output();
        if upstream.dim() != out.dim() {
            return Err(Error::shape(
                "backward upstream",
                format!("{:?}", out.dim()),
                format!("{:?}", upstream.dim()),
            ));
        }
        let mut delta = upstream.to_owned();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let a_out = &cache.activations[l + 1];
            let a_in = &cache.activations[l];
            Zip::from(&mut delta).and(a_out).for_each(|d, &a| *d *= 1.0 - a * a);
            let weights = a_in.t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if l > 0 {
                delta = delta.dot(&layer.weights.t());
            }
            grads.push(Layer { weights, bias });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Plain step `p -= lr * g`. Nothing is modified if any gradient entry
    /// is non-finite.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {learning_rate} must be >= 0")));
        }
        self.check_gradients(grads)?;
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.scaled_add(-learning_rate, &g.weights);
            layer.bias.scaled_add(-learning_rate, &g.bias);
        }
        self.check_finite()
    }

    fn check_gradients(&self, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::shape("gradients", self.layers.len(), grads.layers.len()));
        }
        for (l, (layer, g)) in self.layers.iter().zip(&grads.layers).enumerate() {
            if layer.weights.dim() != g.weights.dim() || layer.bias.dim() != g.bias.dim() {
                return Err(Error::shape("gradients", format!("layer {l}"), "mismatched shape"));
            }
            if !g.weights.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("{}.layer{l}.weights gradient", self.modality)));
            }
            if !g.bias.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("{}.layer{l}.bias gradient", self.modality)));
            }
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        for (l, layer) in self.layers.iter().enumerate() {
            if !layer.weights.iter().chain(layer.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("{}.layer{l} parameters", self.modality)));
            }
        }
        Ok(())
    }

    /// Raw little-endian `f32`: for each layer, weights row-major
    /// (`fan_in x fan_out`) followed by the bias.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect()
    }

    pub fn from_bytes(manifest: &NetworkManifest, bytes: &[u8]) -> Result<Self> {
        let mut params = Self::init(&manifest.layer_dims, manifest.modality, manifest.seed)?;
        let expected: usize = manifest.layer_dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        if bytes.len() != expected * 4 {
            return Err(Error::Data(format!(
                "{} parameter file holds {} bytes, expected {}",
                manifest.modality,
                bytes.len(),
                expected * 4
            )));
        }
        let mut values = bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())));
        for layer in &mut params.layers {
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *v = values.next().unwrap();
            }
        }
        params.check_finite()?;
        Ok(params)
    }
}

fn affine_tanh(x: ArrayView2<'_, f64>, layer: &Layer) -> Array2<f64> {
    let mut z = x.dot(&layer.weights);
    z += &layer.bias;
    z.mapv_inplace(f64::tanh);
    z
}

/// SGD with optional momentum and L2 weight decay.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Option<Gradients>,
}

impl Sgd {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            weight_decay,
            velocity: None,
        }
    }

    pub fn step(&mut self, params: &mut NetworkParams, grads: Gradients) -> Result<()> {
        if self.momentum == 0.0 && self.weight_decay == 0.0 {
            return params.sgd_step(&grads, self.learning_rate);
        }
        params.check_gradients(&grads)?;
        let mut effective = grads;
        if self.weight_decay > 0.0 {
            for (g, p) in effective.layers.iter_mut().zip(params.layers()) {
                g.weights.scaled_add(self.weight_decay, &p.weights);
                g.bias.scaled_add(self.weight_decay, &p.bias);
            }
        }
        if self.momentum > 0.0 {
            match &mut self.velocity {
                Some(v) => {
                    for (v, g) in v.layers.iter_mut().zip(&effective.layers) {
                        v.weights.mapv_inplace(|x| x * self.momentum);
                        v.weights += &g.weights;
                        v.bias.mapv_inplace(|x| x * self.momentum);
                        v.bias += &g.bias;
                    }
                }
                None => self.velocity = Some(effective.clone()),
            }
            effective = self.velocity.clone().unwrap();
        }
        params.sgd_step(&effective, self.learning_rate)
    }
}
