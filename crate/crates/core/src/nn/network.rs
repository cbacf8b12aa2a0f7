//! U-Net variant: encode blocks E*, E1..E(L-1), decode blocks with
//! nearest-neighbour up-scaling and skip concatenation, 1x1 classifier and
//! soft-max.
//!
//! Every block is two (3x3 conv, zero pad, ReLU) stages. E* skips the max
//! pooling that opens the other encode blocks. Features double and extents
//! halve with each level.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::ops::{self, ConvGrads};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub levels: usize,
    pub base_features: usize,
    pub classes: usize,
    pub kernel_size: usize,
    pub input_channels: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            base_features: 16,
            classes: 4,
            kernel_size: 3,
            input_channels: 1,
        }
    }
}

impl NetworkConfig {
    pub fn desk_scale() -> Self {
        Self {
            levels: 3,
            base_features: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::Config(format!(
                "levels must be >= 2, got {}",
                self.levels
            )));
        }
        if self.base_features == 0 || self.classes == 0 || self.input_channels == 0 {
            return Err(Error::Config(
                "feature, class and channel counts must be positive".into(),
            ));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel_size must be odd to preserve extents, got {}",
                self.kernel_size
            )));
        }
        if self.classes > u8::MAX as usize + 1 {
            return Err(Error::Config("at most 256 classes".into()));
        }
        Ok(())
    }

    /// Feature count at `level`.
    pub fn features(&self, level: usize) -> usize {
        self.base_features << level
    }

    /// Input extents must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << (self.levels - 1)
    }

    /// `(name, kernel, in, out)` for every convolution in execution order.
    fn layers(&self) -> Vec<(String, usize, usize, usize)> {
        let k = self.kernel_size;
        let mut layers = Vec::new();
        for level in 0..self.levels {
            let cin = if level == 0 {
                self.input_channels
            } else {
                self.features(level - 1)
            };
            let f = self.features(level);
            layers.push((format!("enc{level}.conv1"), k, cin, f));
            layers.push((format!("enc{level}.conv2"), k, f, f));
        }
        for level in (0..self.levels - 1).rev() {
            let f = self.features(level);
            layers.push((
                format!("dec{level}.conv1"),
                k,
                self.features(level + 1) + f,
                f,
            ));
            layers.push((format!("dec{level}.conv2"), k, f, f));
        }
        layers.push(("head".to_string(), 1, self.features(0), self.classes));
        layers
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Parameters are stored as `weight, bias` pairs, one per convolution, in
/// execution order: encoder top-down, decoder bottom-up, then the head.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    config: NetworkConfig,
    params: Vec<Param<T>>,
}

/// Output scale of the classifier at initialization relative to a
/// fan-in-normalized layer; keeps the initial predictions near uniform.
const HEAD_INIT_SCALE: f64 = 0.01;

struct EncCache<T> {
    /// Pre-pool input shape and argmax, absent for E*.
    pool: Option<(Vec<usize>, Vec<u8>)>,
    input: Tensor<T>,
    h1: Tensor<T>,
    h2: Tensor<T>,
}

struct DecCache<T> {
    up_extent: [usize; 2],
    up_channels: usize,
    input: Tensor<T>,
    h1: Tensor<T>,
    h2: Tensor<T>,
}

/// Activations retained by [`Network::forward_cached`] for the backward pass.
pub struct ForwardCache<T> {
    enc: Vec<EncCache<T>>,
    dec: Vec<DecCache<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Output shapes of the encode blocks, level 0 first.
    pub fn encoder_shapes(&self) -> Vec<Vec<usize>> {
        self.enc.iter().map(|e| e.h2.shape().to_vec()).collect()
    }

    /// Every post-ReLU activation.
    pub fn activations(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.enc
            .iter()
            .flat_map(|e| [&e.h1, &e.h2])
            .chain(self.dec.iter().flat_map(|d| [&d.h1, &d.h2]))
    }
}

impl<T: Scalar> Network<T> {
    /// All-zero parameters.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut params = Vec::new();
        for (name, k, cin, cout) in config.layers() {
            params.push(Param {
                name: format!("{name}.weight"),
                value: Tensor::zeros(&[k, k, cin, cout]),
            });
            params.push(Param {
                name: format!("{name}.bias"),
                value: Tensor::zeros(&[cout]),
            });
        }
        Ok(Self { config, params })
    }

    /// Fan-in-scaled uniform (He) initialization of all kernels, zero biases.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = stream_rng(seed, 0x1417);
        let n_layers = net.params.len() / 2;
        for (i, pair) in net.params.chunks_exact_mut(2).enumerate() {
            let shape = pair[0].value.shape().to_vec();
            let fan_in = (shape[0] * shape[1] * shape[2]) as f64;
            let bound = if i + 1 == n_layers {
                HEAD_INIT_SCALE * (3.0 / fan_in).sqrt()
            } else {
                (6.0 / fan_in).sqrt()
            };
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for v in pair[0].value.data_mut() {
                *v = T::of(dist.sample(&mut rng));
            }
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Replaces all parameter values; names and shapes must match.
    pub fn set_params(&mut self, values: Vec<Tensor<T>>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (p, v) in self.params.iter().zip(&values) {
            if p.value.shape() != v.shape() {
                return Err(Error::Shape(format!(
                    "{}: expected shape {:?}, got {:?}",
                    p.name,
                    p.value.shape(),
                    v.shape()
                )));
            }
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            p.value = v;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
        }
    }

    fn conv(&self, layer: usize, x: &Tensor<T>) -> Result<Tensor<T>> {
        let w = &self.params[2 * layer].value;
        let b = &self.params[2 * layer + 1].value;
        let pad = (w.shape()[0] - 1) / 2;
        ops::conv2d(x, w, b, pad)
    }

    fn conv_relu(&self, layer: usize, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = self.conv(layer, x)?;
        ops::relu_inplace(&mut y);
        Ok(y)
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let [_, h, w, c] = x.dims4()?;
        if c != self.config.input_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {c}",
                self.config.input_channels
            )));
        }
        let d = self.config.divisor();
        if h == 0 || w == 0 || h % d != 0 || w % d != 0 {
            return Err(Error::Shape(format!(
                "input extents {h}x{w} must be positive multiples of {d} for {} levels",
                self.config.levels
            )));
        }
        Ok(())
    }

    /// Pre-soft-max class scores together with the activations needed for
    /// [`Network::backward`].
    pub fn logits_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let levels = self.config.levels;
        let mut enc: Vec<EncCache<T>> = Vec::with_capacity(levels);
        let mut layer = 0;
        for level in 0..levels {
            let (pool, input) = if level == 0 {
                (None, x.clone())
            } else {
                let prev = &enc[level - 1].h2;
                let (pooled, arg) = ops::maxpool2(prev)?;
                (Some((prev.shape().to_vec(), arg)), pooled)
            };
            let h1 = self.conv_relu(layer, &input)?;
            let h2 = self.conv_relu(layer + 1, &h1)?;
            layer += 2;
            enc.push(EncCache {
                pool,
                input,
                h1,
                h2,
            });
        }

        let mut dec: Vec<DecCache<T>> = Vec::with_capacity(levels - 1);
        for level in (0..levels - 1).rev() {
            let below = dec.last().map_or(&enc[level + 1].h2, |d| &d.h2);
            let skip = &enc[level].h2;
            let [_, sh, sw, _] = skip.dims4()?;
            let up = ops::upsample2(below)?;
            let [_, uh, uw, uc] = up.dims4()?;
            let input = ops::concat_channels(&ops::pad_to(&up, sh, sw)?, skip)?;
            let h1 = self.conv_relu(layer, &input)?;
            let h2 = self.conv_relu(layer + 1, &h1)?;
            layer += 2;
            dec.push(DecCache {
                up_extent: [uh, uw],
                up_channels: uc,
                input,
                h1,
                h2,
            });
        }

        let top = dec.last().map(|d| &d.h2).expect("levels >= 2");
        let logits = self.conv(layer, top)?;
        Ok((logits, ForwardCache { enc, dec }))
    }

    /// Per-pixel class probabilities `[n, h, w, classes]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (logits, _) = self.logits_cached(x)?;
        ops::softmax(&logits)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let (logits, cache) = self.logits_cached(x)?;
        Ok((ops::softmax(&logits)?, cache))
    }

    /// Gradients of all parameters (in [`Network::params`] order) given the
    /// gradient of the loss with respect to the logits.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_logits: &Tensor<T>,
    ) -> Result<Vec<Tensor<T>>> {
        let levels = self.config.levels;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.params.len()];
        let mut store = |layer: usize, g: ConvGrads<T>| -> Option<Tensor<T>> {
            grads[2 * layer] = Some(g.kernel);
            grads[2 * layer + 1] = Some(g.bias);
            g.input
        };
        let back = |layer: usize, input: &Tensor<T>, grad_out: &Tensor<T>, need_input: bool| {
            let w = &self.params[2 * layer].value;
            ops::conv2d_backward(input, w, grad_out, (w.shape()[0] - 1) / 2, need_input)
        };

        let head = 2 * (2 * levels - 1);
        let top = &cache.dec.last().expect("levels >= 2").h2;
        let mut g = store(head, back(head, top, grad_logits, true)?).expect("input grad");

        // decoder, shallowest block first
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; levels];
        for (i, d) in cache.dec.iter().enumerate().rev() {
            let level = levels - 2 - i;
            let layer = 2 * levels + 2 * i;
            ops::relu_backward_inplace(&mut g, &d.h2);
            let mut g1 = store(layer + 1, back(layer + 1, &d.h1, &g, true)?).expect("input grad");
            ops::relu_backward_inplace(&mut g1, &d.h1);
            let g_in = store(layer, back(layer, &d.input, &g1, true)?).expect("input grad");
            let (g_up, g_skip) = ops::split_channels(&g_in, d.up_channels)?;
            skip_grads[level] = Some(g_skip);
            let g_up = ops::crop_to(&g_up, d.up_extent[0], d.up_extent[1])?;
            g = ops::upsample2_backward(&g_up)?;
        }

        // encoder, deepest block first; `g` now flows into the bottom block
        for level in (0..levels).rev() {
            let e = &cache.enc[level];
            if let Some(skip) = skip_grads[level].take() {
                g.add_scaled(&skip, T::one());
            }
            let layer = 2 * level;
            ops::relu_backward_inplace(&mut g, &e.h2);
            let mut g1 = store(layer + 1, back(layer + 1, &e.h1, &g, true)?).expect("input grad");
            ops::relu_backward_inplace(&mut g1, &e.h1);
            let g_in = store(layer, back(layer, &e.input, &g1, level > 0)?);
            if let (Some((shape, arg)), Some(g_in)) = (&e.pool, g_in) {
                g = ops::maxpool2_backward(&g_in, arg, shape)?;
            }
        }

        Ok(grads
            .into_iter()
            .map(|g| g.expect("every layer visited"))
            .collect())
    }
}

/// Draws a random tensor, handy for tests and gradient checks.
pub fn random_tensor<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n).map(|_| T::of(rng.random_range(-1.0..1.0))).collect(),
    )
    .expect("length matches shape")
}
