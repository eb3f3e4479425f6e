//! MLP decoder `f: M -> X` with reverse-mode gradients.
//!
//! Layers are dense `y = x W^T + b` with SiLU between hidden layers and a
//! linear output head. Batches are row-major `(batch, features)` matrices.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_HIDDEN: [usize; 5] = [16, 32, 64, 128, 256];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecoderError {
    #[error("{what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("BCE target at ({row}, {col}) is {value}, expected 0 or 1")]
    InvalidTarget { row: usize, col: usize, value: f64 },
    #[error("decoder needs at least one layer")]
    NoLayers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Silu,
}

/// Reconstruction loss. `Bce` treats decoder outputs as logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
    Bce,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `(out, in)`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let a = (6.0 / (input + output) as f64).sqrt();
        let weight = Array2::from_shape_fn((output, input), |_| rng.random_range(-a..a));
        Dense {
            weight,
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Decoder parameters: weights and biases in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    layers: Vec<Dense>,
    activation: Activation,
}

/// Gradients with the same layout as [`Decoder`]'s layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderGrads {
    pub layers: Vec<Dense>,
}

/// Result of a full backward pass.
#[derive(Debug, Clone)]
pub struct Backward {
    pub loss: f64,
    pub params: DecoderGrads,
    /// `d loss / d z`, same shape as the input batch.
    pub inputs: Array2<f64>,
}

struct Cache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(output_dim);
        let layers = sizes
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], rng))
            .collect();
        Decoder {
            layers,
            activation: Activation::Silu,
        }
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self, DecoderError> {
        if layers.is_empty() {
            return Err(DecoderError::NoLayers);
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(DecoderError::Shape {
                    what: if i == 0 {
                        "layer 1 input"
                    } else {
                        "layer input"
                    },
                    expected: w[0].output_dim(),
                    got: w[1].input_dim(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(DecoderError::Shape {
                    what: "bias length",
                    expected: l.output_dim(),
                    got: l.bias.len(),
                });
            }
        }
        Ok(Decoder { layers, activation })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.output_dim())
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, z: &ArrayView2<f64>) -> Result<(), DecoderError> {
        if z.ncols() != self.input_dim() {
            return Err(DecoderError::Shape {
                what: "latent dimension",
                expected: self.input_dim(),
                got: z.ncols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, z: ArrayView2<f64>) -> Result<Array2<f64>, DecoderError> {
        self.check_input(&z)?;
        let last = self.layers.len() - 1;
        let mut h = z.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut a = h.dot(&layer.weight.t());
            a += &layer.bias;
            if i < last {
                a.mapv_inplace(silu);
            }
            h = a;
        }
        Ok(h)
    }

    fn forward_cached(&self, z: ArrayView2<f64>) -> (Array2<f64>, Cache) {
        let last = self.layers.len() - 1;
        let mut cache = Cache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(last),
        };
        let mut h = z.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut a = h.dot(&layer.weight.t());
            a += &layer.bias;
            cache.inputs.push(h);
            if i < last {
                h = a.mapv(silu);
                cache.pre.push(a);
            } else {
                h = a;
            }
        }
        (h, cache)
    }

    /// Back-propagates `d_out` through the cached pass. Parameter gradients are
    /// skipped when `with_params` is false.
    fn backprop(
        &self,
        cache: &Cache,
        d_out: Array2<f64>,
        with_params: bool,
    ) -> (Option<DecoderGrads>, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_out;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i < self.layers.len() - 1 {
                let pre = &cache.pre[i];
                ndarray::Zip::from(&mut delta)
                    .and(pre)
                    .for_each(|d, &a| *d *= silu_grad(a));
            }
            if with_params {
                grads.push(Dense {
                    weight: delta.t().dot(&cache.inputs[i]),
                    bias: delta.sum_axis(Axis(0)),
                });
            }
            delta = delta.dot(&layer.weight);
        }
        let params = with_params.then(|| {
            grads.reverse();
            DecoderGrads { layers: grads }
        });
        (params, delta)
    }

    /// Exact gradients of `loss(forward(z), targets)` with respect to the
    /// parameters and to `z`.
    pub fn backward(
        &self,
        z: ArrayView2<f64>,
        targets: ArrayView2<f64>,
        kind: LossKind,
    ) -> Result<Backward, DecoderError> {
        self.check_input(&z)?;
        let (out, cache) = self.forward_cached(z);
        let (loss, d_out) = loss_and_grad(out.view(), targets, kind)?;
        let (params, inputs) = self.backprop(&cache, d_out, true);
        Ok(Backward {
            loss,
            params: params.expect("requested"),
            inputs,
        })
    }

    /// Loss and `d loss / d z` only; the decoder is treated as frozen.
    pub fn input_gradient(
        &self,
        z: ArrayView2<f64>,
        targets: ArrayView2<f64>,
        kind: LossKind,
    ) -> Result<(f64, Array2<f64>), DecoderError> {
        self.check_input(&z)?;
        let (out, cache) = self.forward_cached(z);
        let (loss, d_out) = loss_and_grad(out.view(), targets, kind)?;
        let (_, inputs) = self.backprop(&cache, d_out, false);
        Ok((loss, inputs))
    }

    /// Jacobian `d f / d z` at a single latent, `(output_dim, input_dim)`,
    /// from one backward pass per output coordinate.
    pub fn jacobian(&self, z: &[f64]) -> Result<Array2<f64>, DecoderError> {
        if z.len() != self.input_dim() {
            return Err(DecoderError::Shape {
                what: "latent dimension",
                expected: self.input_dim(),
                got: z.len(),
            });
        }
        let m = self.output_dim();
        let batch = Array2::from_shape_fn((m, z.len()), |(_, j)| z[j]);
        let (_, cache) = self.forward_cached(batch.view());
        let (_, jac) = self.backprop(&cache, Array2::eye(m), false);
        Ok(jac)
    }

    /// Parameters flattened in layer order: weight (row-major) then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), DecoderError> {
        if flat.len() != self.n_params() {
            return Err(DecoderError::Shape {
                what: "parameter count",
                expected: self.n_params(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            for w in l.weight.iter_mut() {
                *w = *it.next().unwrap();
            }
            for b in l.bias.iter_mut() {
                *b = *it.next().unwrap();
            }
        }
        Ok(())
    }

    /// Mutable parameter tensors for an optimizer, flagged `true` for weights.
    pub fn tensors_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push((l.weight.as_slice_mut().expect("standard layout"), true));
            out.push((l.bias.as_slice_mut().expect("standard layout"), false));
        }
        out
    }
}

impl DecoderGrads {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }
}

fn check_shapes(outputs: &ArrayView2<f64>, targets: &ArrayView2<f64>) -> Result<(), DecoderError> {
    if outputs.nrows() != targets.nrows() {
        return Err(DecoderError::Shape {
            what: "target rows",
            expected: outputs.nrows(),
            got: targets.nrows(),
        });
    }
    if outputs.ncols() != targets.ncols() {
        return Err(DecoderError::Shape {
            what: "target columns",
            expected: outputs.ncols(),
            got: targets.ncols(),
        });
    }
    Ok(())
}

fn check_binary(targets: &ArrayView2<f64>) -> Result<(), DecoderError> {
    for ((row, col), &t) in targets.indexed_iter() {
        if t != 0.0 && t != 1.0 {
            return Err(DecoderError::InvalidTarget { row, col, value: t });
        }
    }
    Ok(())
}

/// `-[t log s(o) + (1-t) log(1-s(o))]` in log-sum-exp form.
fn bce_term(o: f64, t: f64) -> f64 {
    o.max(0.0) - o * t + (-o.abs()).exp().ln_1p()
}

/// Mean reconstruction loss over all entries.
pub fn loss(
    outputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    kind: LossKind,
) -> Result<f64, DecoderError> {
    check_shapes(&outputs, &targets)?;
    if kind == LossKind::Bce {
        check_binary(&targets)?;
    }
    let n = outputs.len().max(1) as f64;
    let mut sum = 0.0;
    for (o, t) in outputs.iter().zip(targets.iter()) {
        sum += match kind {
            LossKind::Mse => (o - t) * (o - t),
            LossKind::Bce => bce_term(*o, *t),
        };
    }
    Ok(sum / n)
}

/// Per-row mean loss, used to rank latent candidates.
pub fn row_losses(
    outputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    kind: LossKind,
) -> Result<Vec<f64>, DecoderError> {
    check_shapes(&outputs, &targets)?;
    if kind == LossKind::Bce {
        check_binary(&targets)?;
    }
    let d = outputs.ncols().max(1) as f64;
    Ok(outputs
        .outer_iter()
        .zip(targets.outer_iter())
        .map(|(o, t)| {
            o.iter()
                .zip(t.iter())
                .map(|(o, t)| match kind {
                    LossKind::Mse => (o - t) * (o - t),
                    LossKind::Bce => bce_term(*o, *t),
                })
                .sum::<f64>()
                / d
        })
        .collect())
}

/// Mean loss and its gradient with respect to the outputs.
pub fn loss_and_grad(
    outputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    kind: LossKind,
) -> Result<(f64, Array2<f64>), DecoderError> {
    let l = loss(outputs, targets, kind)?;
    let n = outputs.len().max(1) as f64;
    let mut grad = Array2::zeros(outputs.raw_dim());
    ndarray::Zip::from(&mut grad)
        .and(&outputs)
        .and(&targets)
        .for_each(|g, &o, &t| {
            *g = match kind {
                LossKind::Mse => 2.0 * (o - t) / n,
                LossKind::Bce => (sigmoid(o) - t) / n,
            }
        });
    Ok((l, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.995,
            eps: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

/// Bias-corrected Adam with decoupled weight decay on weight tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. `params[i]` pairs with `grads[i]`; the flag marks tensors
    /// that receive weight decay.
    pub fn step(&mut self, lr: f64, params: Vec<(&mut [f64], bool)>, grads: &[&[f64]]) {
        assert_eq!(params.len(), grads.len(), "tensor count mismatch");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
            ..
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (k, ((p, decay), g)) in params.into_iter().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "tensor {k} shape mismatch");
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            for i in 0..p.len() {
                if decay && weight_decay != 0.0 {
                    p[i] *= 1.0 - lr * weight_decay;
                }
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }

    /// Convenience wrapper for decoder parameters.
    pub fn step_decoder(&mut self, lr: f64, decoder: &mut Decoder, grads: &DecoderGrads) {
        let g = grads.tensors();
        self.step(lr, decoder.tensors_mut(), &g);
    }
}

/// Cosine annealing with warm restarts every `t0` epochs, period multiplier 1
/// and floor 0.
pub fn lr_schedule(epoch: usize, base_lr: f64, t0: usize) -> f64 {
    let t0 = t0.max(1);
    let phase = (epoch % t0) as f64 / t0 as f64;
    base_lr * (1.0 + (std::f64::consts::PI * phase).cos()) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_decoder() -> Decoder {
        let layer = Dense {
            weight: Array2::eye(2),
            bias: Array1::zeros(2),
        };
        Decoder::from_layers(vec![layer], Activation::Silu).unwrap()
    }

    #[test]
    fn forward_examples() {
        let d = identity_decoder();
        let out = d.forward(array![[0.2, -0.1]].view()).unwrap();
        assert_eq!(out, array![[0.2, -0.1]]);
        assert_eq!(silu(0.0), 0.0);
        assert_abs_diff_eq!(silu(1.0), 1.0 / (1.0 + (-1f64).exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(silu(1.0), 0.7311, epsilon = 1e-4);
    }

    #[test]
    fn forward_shape_error() {
        let d = identity_decoder();
        assert!(matches!(
            d.forward(array![[1.0, 2.0, 3.0]].view()),
            Err(DecoderError::Shape { .. })
        ));
    }

    #[test]
    fn forward_is_rowwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Decoder::new(3, &[8, 4], 5, &mut rng);
        let z = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - 1.5) * 0.3 + j as f64 * 0.1);
        let out = d.forward(z.view()).unwrap();
        let perm = [2, 0, 3, 1];
        let zp = z.select(Axis(0), &perm);
        let outp = d.forward(zp.view()).unwrap();
        for (k, &p) in perm.iter().enumerate() {
            for j in 0..5 {
                assert_abs_diff_eq!(outp[[k, j]], out[[p, j]], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn loss_examples() {
        let o = array![[1.0, 1.0]];
        let t = array![[0.0, 0.0]];
        assert_eq!(loss(o.view(), o.view(), LossKind::Mse).unwrap(), 0.0);
        assert_eq!(loss(o.view(), t.view(), LossKind::Mse).unwrap(), 1.0);
        let bce = loss(array![[0.0]].view(), array![[1.0]].view(), LossKind::Bce).unwrap();
        assert_abs_diff_eq!(bce, std::f64::consts::LN_2, epsilon = 1e-15);
        let err = loss(array![[0.0]].view(), array![[0.5]].view(), LossKind::Bce);
        assert!(matches!(err, Err(DecoderError::InvalidTarget { .. })));
        // Large logits stay finite.
        let big = loss(
            array![[800.0, -800.0]].view(),
            array![[0.0, 1.0]].view(),
            LossKind::Bce,
        )
        .unwrap();
        assert_abs_diff_eq!(big, 800.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_residual_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = Decoder::new(2, &[6], 3, &mut rng);
        let z = array![[0.1, 0.4], [-0.3, 0.2]];
        let t = d.forward(z.view()).unwrap();
        let b = d.backward(z.view(), t.view(), LossKind::Mse).unwrap();
        assert_eq!(b.loss, 0.0);
        assert!(b.params.to_flat().iter().all(|g| *g == 0.0));
        assert!(b.inputs.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient() {
        // L = mean_k (Wz - t)_k^2 over dim outputs => dL/dW = 2 (Wz - t) z^T / dim.
        let w = array![[0.5, -1.0], [2.0, 0.25], [0.0, 1.5]];
        let layer = Dense {
            weight: w.clone(),
            bias: Array1::zeros(3),
        };
        let d = Decoder::from_layers(vec![layer], Activation::Silu).unwrap();
        let z = array![0.3, -0.7];
        let t = array![1.0, 0.0, -2.0];
        let r = w.dot(&z) - &t;
        let b = d
            .backward(
                z.view().insert_axis(Axis(0)),
                t.view().insert_axis(Axis(0)),
                LossKind::Mse,
            )
            .unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let expected = 2.0 * r[i] * z[j] / 3.0;
                assert_abs_diff_eq!(b.params.layers[0].weight[[i, j]], expected, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn jacobian_of_linear_and_constant_decoders() {
        let a = array![[1.0, 2.0], [-0.5, 0.0], [3.0, 0.25]];
        let lin = Decoder::from_layers(
            vec![Dense {
                weight: a.clone(),
                bias: array![0.1, 0.2, 0.3],
            }],
            Activation::Silu,
        )
        .unwrap();
        assert_eq!(lin.jacobian(&[0.7, -0.2]).unwrap(), a);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut constant = Decoder::new(2, &[4], 3, &mut rng);
        let n = constant.n_params();
        let mut flat = vec![0.0; n];
        // bias of the output layer is the last 3 entries
        flat[n - 3..].copy_from_slice(&[1.0, -1.0, 2.0]);
        constant.set_flat(&flat).unwrap();
        assert!(constant
            .jacobian(&[0.3, 0.3])
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn adam_examples() {
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let mut adam = Adam::new(cfg);
        let mut p = [0.0];
        adam.step(0.1, vec![(&mut p[..], true)], &[&[1.0]]);
        assert_abs_diff_eq!(p[0], -0.1, epsilon = 1e-8);
        assert_eq!(adam.steps(), 1);

        let mut adam = Adam::new(cfg);
        let mut q = [0.3, -2.0];
        adam.step(0.1, vec![(&mut q[..], true)], &[&[0.0, 0.0]]);
        assert_eq!(q, [0.3, -2.0]);

        let mut adam = Adam::new(cfg);
        let mut r = [1.5, 1.5];
        adam.step(0.1, vec![(&mut r[..], true)], &[&[0.4, 0.4]]);
        assert_eq!(r[0], r[1]);
    }

    #[test]
    fn adam_without_momentum_is_sign_descent() {
        let cfg = AdamConfig {
            lr: 0.05,
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let mut adam = Adam::new(cfg);
        let mut p = [1.0, 1.0, 1.0];
        let g = [3.0, -0.2, 1e-3];
        adam.step(0.05, vec![(&mut p[..], true)], &[&g]);
        for i in 0..3 {
            let expected = 1.0 - 0.05 * g[i] / (g[i].abs() + 1e-8);
            assert_abs_diff_eq!(p[i], expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn weight_decay_only_touches_weights() {
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg);
        let mut w = [2.0];
        let mut b = [2.0];
        adam.step(
            0.1,
            vec![(&mut w[..], true), (&mut b[..], false)],
            &[&[0.0], &[0.0]],
        );
        assert_abs_diff_eq!(w[0], 2.0 * (1.0 - 0.05), epsilon = 1e-15);
        assert_eq!(b[0], 2.0);
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(lr_schedule(0, 2e-3, 40), 2e-3);
        assert_abs_diff_eq!(lr_schedule(20, 2e-3, 40), 1e-3, epsilon = 1e-18);
        assert_eq!(lr_schedule(40, 2e-3, 40), 2e-3);
        assert!(lr_schedule(39, 2e-3, 40) < 1e-5);
    }
}
