//! Fully connected ReLU network with softmax cross-entropy.
//!
//! Layer `p` computes `z⁽ᵖ⁾ = W⁽ᵖ⁾x⁽ᵖ⁾ + b⁽ᵖ⁾`; every layer but the last is
//! followed by ReLU, `x⁽ᵖ⁺¹⁾ = D⁽ᵖ⁾z⁽ᵖ⁾` with `D⁽ᵖ⁾ = diag([z⁽ᵖ⁾ ≥ 0])`.
//! The parameter vector is `θ = (vec W⁽¹⁾, b⁽¹⁾, …, vec W⁽ᴸ⁾, b⁽ᴸ⁾)` with
//! row-major `vec`; bias blocks are absent when biases are disabled.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, KahanSum, Matrix};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_classes: usize,
    pub bias: bool,
}

/// Location of one layer's parameters inside `θ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weight_offset: usize,
    pub bias_offset: Option<usize>,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden_dim: usize, num_layers: usize, num_classes: usize, bias: bool) -> Result<Self> {
        let c = Self {
            input_dim,
            hidden_dim,
            num_layers,
            num_classes,
            bias,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be >= 1".into()));
        }
        if self.num_layers == 0 {
            return Err(Error::InvalidArgument("num_layers must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument("num_classes must be >= 2".into()));
        }
        if self.num_layers > 1 && self.hidden_dim == 0 {
            return Err(Error::InvalidArgument("hidden_dim must be >= 1 for deep networks".into()));
        }
        Ok(())
    }

    /// `(out, in)` for each layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.num_layers)
            .map(|p| {
                let in_dim = if p == 0 { self.input_dim } else { self.hidden_dim };
                let out_dim = if p + 1 == self.num_layers {
                    self.num_classes
                } else {
                    self.hidden_dim
                };
                (out_dim, in_dim)
            })
            .collect()
    }

    pub fn layout(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_shapes()
            .into_iter()
            .map(|(out_dim, in_dim)| {
                let weight_offset = offset;
                offset += out_dim * in_dim;
                let bias_offset = self.bias.then(|| {
                    let b = offset;
                    offset += out_dim;
                    b
                });
                LayerLayout {
                    out_dim,
                    in_dim,
                    weight_offset,
                    bias_offset,
                }
            })
            .collect()
    }

    /// Parameter count `P`.
    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(o, i)| o * i + if self.bias { o } else { 0 })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    config: MlpConfig,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl MlpParams {
    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        Ok(Self {
            config,
            weights: shapes.iter().map(|&(o, i)| Matrix::zeros(o, i)).collect(),
            biases: shapes.iter().map(|&(o, _)| vec![0.0; o]).collect(),
        })
    }

    /// Builds parameters from explicit layers. Biases must be all zero when
    /// the configuration disables them.
    pub fn from_layers(config: MlpConfig, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if weights.len() != shapes.len() || biases.len() != shapes.len() {
            return Err(Error::DimensionMismatch {
                context: "MlpParams layers",
                expected: shapes.len(),
                found: weights.len().min(biases.len()),
            });
        }
        for ((w, b), &(o, i)) in weights.iter().zip(&biases).zip(&shapes) {
            if w.shape() != (o, i) {
                return Err(Error::DimensionMismatch {
                    context: "MlpParams weight shape",
                    expected: o * i,
                    found: w.rows() * w.cols(),
                });
            }
            if b.len() != o {
                return Err(Error::DimensionMismatch {
                    context: "MlpParams bias length",
                    expected: o,
                    found: b.len(),
                });
            }
            if !config.bias && b.iter().any(|&v| v != 0.0) {
                return Err(Error::InvalidArgument(
                    "non-zero bias on a bias-free configuration".into(),
                ));
            }
        }
        Ok(Self {
            config,
            weights,
            biases,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// `W⁽ᵖ⁾` for zero-based layer index `p`.
    pub fn weight(&self, p: usize) -> &Matrix {
        &self.weights[p]
    }

    pub fn bias(&self, p: usize) -> &[f64] {
        &self.biases[p]
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    /// Largest `|w_ij|` over all weight matrices.
    pub fn max_abs_weight(&self) -> f64 {
        self.weights.iter().fold(0.0, |m, w| m.max(w.max_abs()))
    }

    /// `θ` in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.config.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            theta.extend_from_slice(w.as_slice());
            if self.config.bias {
                theta.extend_from_slice(b);
            }
        }
        theta
    }

    pub fn unflatten(config: MlpConfig, theta: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        params.assign(theta)?;
        Ok(params)
    }

    /// Overwrites the parameters from `θ` in canonical order.
    pub fn assign(&mut self, theta: &[f64]) -> Result<()> {
        let expected = self.config.param_count();
        if theta.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected,
                found: theta.len(),
            });
        }
        for (p, layer) in self.config.layout().into_iter().enumerate() {
            let wlen = layer.out_dim * layer.in_dim;
            self.weights[p]
                .as_mut_slice()
                .copy_from_slice(&theta[layer.weight_offset..layer.weight_offset + wlen]);
            if let Some(b) = layer.bias_offset {
                self.biases[p].copy_from_slice(&theta[b..b + layer.out_dim]);
            }
        }
        Ok(())
    }

    /// `self + step · direction` in θ-space.
    pub fn offset(&self, direction: &[f64], step: f64) -> Result<Self> {
        let mut theta = self.flatten();
        if direction.len() != theta.len() {
            return Err(Error::DimensionMismatch {
                context: "parameter offset",
                expected: theta.len(),
                found: direction.len(),
            });
        }
        axpy(step, direction, &mut theta);
        Self::unflatten(self.config, &theta)
    }
}

/// Cached quantities of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `x⁽ᵖ⁾` for every layer; the first entry is the input.
    pub layer_inputs: Vec<Vec<f64>>,
    /// `z⁽ᵖ⁾` for every layer; the last entry is the logits.
    pub pre_activations: Vec<Vec<f64>>,
    /// Diagonals of `D⁽ᵖ⁾` for the hidden layers.
    pub masks: Vec<Vec<bool>>,
    pub probs: Vec<f64>,
    pub loss: f64,
    pub label: usize,
}

impl ForwardTrace {
    pub fn logits(&self) -> &[f64] {
        self.pre_activations
            .last()
            .map(Vec::as_slice)
            .unwrap_or_default()
    }
}

/// Glorot-uniform weights in `[−s, s]`, `s = √(6 / (fan_in + fan_out))`, and
/// zero biases.
pub fn init_params(config: MlpConfig, seed: u64) -> Result<MlpParams> {
    let mut params = MlpParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in &mut params.weights {
        let s = init_scale(w.cols(), w.rows());
        for v in w.as_mut_slice() {
            *v = rng.random_range(-s..=s);
        }
    }
    Ok(params)
}

pub fn init_scale(fan_in: usize, fan_out: usize) -> f64 {
    math::sqrt(6.0 / (fan_in + fan_out) as f64)
}

/// Softmax with max subtraction.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| math::exp(v - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `−log softmax(z)_label`, evaluated as `(max − z_label) + log1p(Σ_{j≠argmax} e^{z_j − max})`.
pub fn cross_entropy(z: &[f64], label: usize) -> f64 {
    let (argmax, max) = z
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) });
    let rest: f64 = z
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != argmax)
        .map(|(_, &v)| math::exp(v - max))
        .sum();
    (max - z[label]) + math::ln_1p(rest)
}

/// Index of the single `1.0` in a one-hot vector.
pub fn one_hot_index(y: &[f64]) -> Result<usize> {
    let mut hot = None;
    for (i, &v) in y.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return Err(Error::NotOneHot);
            }
            hot = Some(i);
        } else if v != 0.0 {
            return Err(Error::NotOneHot);
        }
    }
    hot.ok_or(Error::NotOneHot)
}

fn check_input(params: &MlpParams, x: &[f64], label: usize) -> Result<()> {
    let c = params.config();
    if x.len() != c.input_dim {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: c.input_dim,
            found: x.len(),
        });
    }
    if label >= c.num_classes {
        return Err(Error::OutOfRange {
            what: "label",
            value: label,
            min: 0,
            max: c.num_classes - 1,
        });
    }
    Ok(())
}

/// Forward pass for a one-hot target `y`.
pub fn forward(params: &MlpParams, x: &[f64], y: &[f64]) -> Result<ForwardTrace> {
    if y.len() != params.config().num_classes {
        return Err(Error::DimensionMismatch {
            context: "one-hot target",
            expected: params.config().num_classes,
            found: y.len(),
        });
    }
    forward_label(params, x, one_hot_index(y)?)
}

/// Forward pass for a class index.
pub fn forward_label(params: &MlpParams, x: &[f64], label: usize) -> Result<ForwardTrace> {
    check_input(params, x, label)?;
    let layers = params.num_layers();
    let mut layer_inputs = Vec::with_capacity(layers);
    let mut pre_activations = Vec::with_capacity(layers);
    let mut masks = Vec::with_capacity(layers.saturating_sub(1));

    let mut input = x.to_vec();
    for p in 0..layers {
        let w = params.weight(p);
        let z: Vec<f64> = (0..w.rows())
            .map(|i| dot(w.row(i), &input) + params.bias(p)[i])
            .collect();
        layer_inputs.push(input);
        if p + 1 < layers {
            let mask: Vec<bool> = z.iter().map(|&v| v >= 0.0).collect();
            input = z
                .iter()
                .zip(&mask)
                .map(|(&v, &keep)| if keep { v } else { 0.0 })
                .collect();
            masks.push(mask);
        } else {
            input = Vec::new();
        }
        pre_activations.push(z);
    }

    let logits = pre_activations.last().expect("at least one layer");
    let probs = softmax(logits);
    let loss = cross_entropy(logits, label);
    Ok(ForwardTrace {
        layer_inputs,
        pre_activations,
        masks,
        probs,
        loss,
        label,
    })
}

/// Logits only, without keeping a trace.
pub fn logits(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    check_input(params, x, 0)?;
    let layers = params.num_layers();
    let mut input = x.to_vec();
    for p in 0..layers {
        let w = params.weight(p);
        let mut z: Vec<f64> = (0..w.rows())
            .map(|i| dot(w.row(i), &input) + params.bias(p)[i])
            .collect();
        if p + 1 < layers {
            z.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v = 0.0
                }
            });
        }
        input = z;
    }
    Ok(input)
}

pub fn loss_label(params: &MlpParams, x: &[f64], label: usize) -> Result<f64> {
    check_input(params, x, label)?;
    Ok(cross_entropy(&logits(params, x)?, label))
}

/// `∇_θ ℓ` for a one-hot target, by backpropagation.
pub fn grad(params: &MlpParams, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let trace = forward(params, x, y)?;
    let mut g = vec![0.0; params.config().param_count()];
    accumulate_grad(params, &trace, 1.0, &mut g);
    Ok(g)
}

pub fn grad_label(params: &MlpParams, x: &[f64], label: usize) -> Result<Vec<f64>> {
    let trace = forward_label(params, x, label)?;
    let mut g = vec![0.0; params.config().param_count()];
    accumulate_grad(params, &trace, 1.0, &mut g);
    Ok(g)
}

/// Adds `scale · ∇_θ ℓ` for the traced object into `out`.
pub fn accumulate_grad(params: &MlpParams, trace: &ForwardTrace, scale: f64, out: &mut [f64]) {
    let layout = params.config().layout();
    let mut delta: Vec<f64> = trace.probs.clone();
    delta[trace.label] -= 1.0;

    for p in (0..params.num_layers()).rev() {
        let layer = layout[p];
        let x = &trace.layer_inputs[p];
        for (i, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let start = layer.weight_offset + i * layer.in_dim;
            axpy(scale * d, x, &mut out[start..start + layer.in_dim]);
        }
        if let Some(b) = layer.bias_offset {
            for (o, &d) in out[b..b + layer.out_dim].iter_mut().zip(&delta) {
                *o += scale * d;
            }
        }
        if p > 0 {
            let w = params.weight(p);
            let mut prev = vec![0.0; layer.in_dim];
            for (i, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, w.row(i), &mut prev);
                }
            }
            for (v, &keep) in prev.iter_mut().zip(&trace.masks[p - 1]) {
                if !keep {
                    *v = 0.0;
                }
            }
            delta = prev;
        }
    }
}

/// Per-object losses in dataset order.
pub fn per_object_losses(params: &MlpParams, dataset: &Dataset) -> Result<Vec<f64>> {
    check_dataset(params, dataset)?;
    (0..dataset.len())
        .map(|i| loss_label(params, dataset.x(i), dataset.label(i)))
        .collect()
}

/// `L_k(θ) = (1/k) Σ_{i≤k} ℓ_i` over the first `k` objects.
pub fn mean_loss(params: &MlpParams, dataset: &Dataset, k: usize) -> Result<f64> {
    check_dataset(params, dataset)?;
    if k == 0 || k > dataset.len() {
        return Err(Error::OutOfRange {
            what: "k",
            value: k,
            min: 1,
            max: dataset.len(),
        });
    }
    let mut sum = KahanSum::new();
    for i in 0..k {
        sum.add(loss_label(params, dataset.x(i), dataset.label(i))?);
    }
    Ok(sum.value() / k as f64)
}

pub fn check_dataset(params: &MlpParams, dataset: &Dataset) -> Result<()> {
    let c = params.config();
    if dataset.input_dim() != c.input_dim {
        return Err(Error::DimensionMismatch {
            context: "dataset input dimension",
            expected: c.input_dim,
            found: dataset.input_dim(),
        });
    }
    if dataset.num_classes() != c.num_classes {
        return Err(Error::DimensionMismatch {
            context: "dataset class count",
            expected: c.num_classes,
            found: dataset.num_classes(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_blobs;
    use rand::Rng;
    use crate::fd;
    use crate::linalg::{norm2, spectral_norm};
    use proptest::prelude::*;

    fn random_input(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn one_hot(k: usize, c: usize) -> Vec<f64> {
        let mut y = vec![0.0; k];
        y[c] = 1.0;
        y
    }

    fn random_biased(config: MlpConfig, seed: u64) -> MlpParams {
        let mut params = init_params(config, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
        if config.bias {
            for b in &mut params.biases {
                b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
            }
        }
        params
    }

    #[test]
    fn init_is_deterministic() {
        let c = MlpConfig::new(5, 7, 3, 4, true).unwrap();
        assert_eq!(init_params(c, 3).unwrap(), init_params(c, 3).unwrap());
        assert_ne!(init_params(c, 3).unwrap(), init_params(c, 4).unwrap());
    }

    #[test]
    fn single_layer_shapes() {
        for bias in [false, true] {
            let c = MlpConfig::new(2, 99, 1, 2, bias).unwrap();
            assert_eq!(c.layer_shapes(), vec![(2, 2)]);
            assert_eq!(c.param_count(), 4 + 2 * usize::from(bias));
            assert_eq!(init_params(c, 0).unwrap().num_layers(), 1);
        }
    }

    #[test]
    fn init_range_sampling_property() {
        let c = MlpConfig::new(16, 16, 2, 16, false).unwrap();
        let s = init_scale(16, 16);
        for seed in 0..20 {
            let p = init_params(c, seed).unwrap();
            let m = p.max_abs_weight();
            assert!(m <= s && m >= 0.5 * s, "seed {seed}: {m} vs {s}");
        }
    }

    #[test]
    fn zero_weights_give_uniform_probs() {
        let c = MlpConfig::new(4, 3, 2, 10, true).unwrap();
        let p = MlpParams::zeros(c).unwrap();
        let t = forward(&p, &[0.3, -1.0, 0.2, 0.9], &one_hot(10, 4)).unwrap();
        for &v in &t.probs {
            assert!((v - 0.1).abs() < 1e-15);
        }
        assert!((t.loss - 10f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn saturating_logit_drives_loss_to_zero() {
        let c = MlpConfig::new(2, 0, 1, 2, true).unwrap();
        let mut prev = f64::INFINITY;
        for t in [1.0, 5.0, 20.0, 50.0, 800.0] {
            let p = MlpParams::from_layers(c, vec![Matrix::zeros(2, 2)], vec![vec![t, 0.0]]).unwrap();
            let loss = forward(&p, &[0.4, 0.1], &[1.0, 0.0]).unwrap().loss;
            assert!(loss < prev && loss >= 0.0);
            prev = loss;
        }
        assert!(prev < 1e-300);
    }

    #[test]
    fn loss_matches_direct_formula() {
        for seed in 0..30 {
            let c = MlpConfig::new(6, 5, 3, 4, true).unwrap();
            let p = random_biased(c, seed);
            let x = random_input(6, seed + 100);
            let t = forward_label(&p, &x, (seed % 4) as usize).unwrap();
            let z = t.logits();
            let direct = -(z[t.label].exp() / z.iter().map(|v| v.exp()).sum::<f64>()).ln();
            assert!((t.loss - direct).abs() <= 1e-12);
        }
    }

    #[test]
    fn trace_invariants_hold() {
        let c = MlpConfig::new(5, 6, 4, 3, true).unwrap();
        let p = random_biased(c, 77);
        for seed in 0..1000 {
            let x = random_input(5, seed);
            let t = forward_label(&p, &x, 1).unwrap();
            let s: f64 = t.probs.iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
            assert!(t.probs.iter().all(|&v| v > 0.0 && v < 1.0));
            for layer in 0..c.num_layers {
                let w = p.weight(layer);
                for i in 0..w.rows() {
                    let z = dot(w.row(i), &t.layer_inputs[layer]) + p.bias(layer)[i];
                    assert_eq!(z, t.pre_activations[layer][i]);
                }
                if layer + 1 < c.num_layers {
                    for (j, &z) in t.pre_activations[layer].iter().enumerate() {
                        let keep = t.masks[layer][j];
                        assert_eq!(keep, z >= 0.0);
                        let expected = if keep { z } else { 0.0 };
                        assert_eq!(t.layer_inputs[layer + 1][j], expected);
                    }
                }
            }
        }
    }

    #[test]
    fn activation_norms_bounded_by_weight_products() {
        for seed in 0..50 {
            let c = MlpConfig::new(4, 6, 4, 3, false).unwrap();
            let p = init_params(c, seed).unwrap();
            let norms: Vec<f64> = p.weights().iter().map(|w| spectral_norm(w).unwrap()).collect();
            let x = random_input(4, seed + 1);
            let t = forward_label(&p, &x, 0).unwrap();
            for layer in 0..c.num_layers {
                let bound = norm2(&x) * norms[..layer].iter().product::<f64>();
                assert!(norm2(&t.layer_inputs[layer]) <= bound * (1.0 + 1e-9) + 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut worst = 0.0f64;
        for seed in 0..20 {
            let c = MlpConfig::new(3, 4, 2, 3, seed % 2 == 0).unwrap();
            let p = random_biased(c, seed);
            let x = random_input(3, seed + 50);
            let label = (seed % 3) as usize;
            let g = grad_label(&p, &x, label).unwrap();
            let theta = p.flatten();
            let num = fd::gradient(
                |th| loss_label(&MlpParams::unflatten(c, th)?, &x, label),
                &theta,
                1e-5,
            )
            .unwrap();
            for (a, b) in g.iter().zip(&num) {
                let err = (a - b).abs() / a.abs().max(b.abs()).max(1e-3);
                worst = worst.max(err);
            }
        }
        assert!(worst <= 1e-6, "worst relative error {worst}");
    }

    #[test]
    fn gradient_vanishes_at_saturated_prediction() {
        let c = MlpConfig::new(2, 0, 1, 2, true).unwrap();
        let p = MlpParams::from_layers(c, vec![Matrix::zeros(2, 2)], vec![vec![60.0, -60.0]]).unwrap();
        let g = grad(&p, &[0.5, -0.5], &[1.0, 0.0]).unwrap();
        assert!(norm2(&g) <= 1e-8);
    }

    #[test]
    fn soft_labels_are_rejected() {
        let c = MlpConfig::new(2, 0, 1, 2, true).unwrap();
        let p = MlpParams::zeros(c).unwrap();
        assert_eq!(grad(&p, &[0.0, 0.0], &[0.5, 0.5]), Err(Error::NotOneHot));
        assert_eq!(grad(&p, &[0.0, 0.0], &[2.0, 0.0]), Err(Error::NotOneHot));
        assert_eq!(forward(&p, &[0.0, 0.0], &[1.0, 1.0]), Err(Error::NotOneHot));
        assert!(matches!(
            forward(&p, &[0.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mean_loss_examples() {
        let d = synthetic_blobs(10, 3, 2, 0.3, 1).unwrap();
        let c = MlpConfig::new(3, 4, 2, 2, true).unwrap();
        let p = random_biased(c, 5);
        let first = loss_label(&p, d.x(0), d.label(0)).unwrap();
        assert_eq!(mean_loss(&p, &d, 1).unwrap(), first);

        let dup = d.reordered(&[0, 0]).unwrap();
        assert!((mean_loss(&p, &dup, 2).unwrap() - first).abs() <= 1e-15);

        assert!(mean_loss(&p, &d, 0).is_err());
        assert!(mean_loss(&p, &d, 11).is_err());
    }

    proptest! {
        #[test]
        fn flatten_round_trip(n in 1usize..5, h in 1usize..5, layers in 1usize..4, k in 2usize..5,
                              bias in any::<bool>(), seed in any::<u64>()) {
            let c = MlpConfig::new(n, h, layers, k, bias).unwrap();
            let p = random_biased(c, seed);
            let theta = p.flatten();
            prop_assert_eq!(theta.len(), c.param_count());
            prop_assert_eq!(MlpParams::unflatten(c, &theta).unwrap(), p);
        }
    }
}
