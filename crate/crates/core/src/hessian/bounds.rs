//! Closed-form upper bounds on `‖H_i‖₂` and the constants they consume.

use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{norm2, spectral_norm};
use crate::math;
use crate::nn::{self, ForwardTrace, MlpParams};

const SQRT_2: f64 = core::f64::consts::SQRT_2;

/// Measured constants feeding the Hessian and loss-difference bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    /// `M_W`: largest layer spectral norm.
    pub m_w: f64,
    /// `M_x`: largest input norm in the dataset.
    pub m_x: f64,
    /// `M`: largest absolute weight entry.
    pub m_elem: f64,
    /// `M_ℓ`: largest per-object loss at the reference point.
    pub m_loss: f64,
    /// `M_H`: [`theorem1_bound`] at `(m_x, m_w, L)`.
    pub m_h: f64,
    /// `h` in the elementwise bound. A single-layer model has no hidden
    /// width; its one `K × n` matrix stands in with `max(n, K)`.
    pub hidden_dim: usize,
    pub num_layers: usize,
}

/// `Σ_{j=1}^{L} q^j`, with the `q → 1` limit `L` inside `|q − 1| < 1e-12`.
fn geometric_sum(q: f64, layers: usize) -> f64 {
    if (q - 1.0).abs() < 1e-12 {
        layers as f64
    } else {
        q * (math::powi(q, layers as i32) - 1.0) / (q - 1.0)
    }
}

/// `L√2 M_x² M_W^{2L} + √2 M_W²(M_W^{2L} − 1)/(M_W² − 1)`.
pub fn theorem1_bound(m_x: f64, m_w: f64, layers: usize) -> f64 {
    let q = m_w * m_w;
    let l = layers as f64;
    l * SQRT_2 * m_x * m_x * math::powi(q, layers as i32) + SQRT_2 * geometric_sum(q, layers)
}

/// [`theorem1_bound`] with `M_W` replaced by `h·M`.
pub fn lemma1_bound(m_x: f64, hidden_dim: usize, m_elem: f64, layers: usize) -> f64 {
    theorem1_bound(m_x, hidden_dim as f64 * m_elem, layers)
}

pub fn layer_spectral_norms(params: &MlpParams) -> Result<Vec<f64>> {
    params.weights().iter().map(spectral_norm).collect()
}

/// `√2 Σ_p (‖x⁽ᵖ⁾‖² + 1) Π_{s=p}^{L} ‖W⁽ˢ⁾‖²` from the cached activations.
pub fn layerwise_bound(params: &MlpParams, trace: &ForwardTrace) -> Result<f64> {
    layerwise_bound_with_norms(&layer_spectral_norms(params)?, trace)
}

/// [`layerwise_bound`] with precomputed layer spectral norms.
pub fn layerwise_bound_with_norms(norms: &[f64], trace: &ForwardTrace) -> Result<f64> {
    if norms.len() != trace.layer_inputs.len() {
        return Err(Error::DimensionMismatch {
            context: "layerwise bound layer count",
            expected: trace.layer_inputs.len(),
            found: norms.len(),
        });
    }
    let mut total = 0.0;
    let mut tail = 1.0;
    for p in (0..norms.len()).rev() {
        tail *= norms[p] * norms[p];
        let x = norm2(&trace.layer_inputs[p]);
        total += (x * x + 1.0) * tail;
    }
    Ok(SQRT_2 * total)
}

/// Tight empirical constants: layer norms and weight magnitudes from `params`,
/// input norms from `dataset`, per-object losses at `theta_star`.
pub fn measure_constants(params: &MlpParams, dataset: &Dataset, theta_star: &MlpParams) -> Result<BoundConstants> {
    let norms = layer_spectral_norms(params)?;
    let m_w = norms.iter().fold(0.0f64, |m, &v| m.max(v));
    let m_x = (0..dataset.len())
        .map(|i| norm2(dataset.x(i)))
        .fold(0.0f64, f64::max);
    let m_loss = nn::per_object_losses(theta_star, dataset)?
        .into_iter()
        .fold(0.0f64, f64::max);
    let config = params.config();
    Ok(BoundConstants {
        m_w,
        m_x,
        m_elem: params.max_abs_weight(),
        m_loss,
        m_h: theorem1_bound(m_x, m_w, config.num_layers),
        hidden_dim: if config.num_layers == 1 {
            config.input_dim.max(config.num_classes)
        } else {
            config.hidden_dim
        },
        num_layers: config.num_layers,
    })
}

impl BoundConstants {
    pub fn theorem1(&self) -> f64 {
        self.m_h
    }

    pub fn lemma1(&self) -> f64 {
        lemma1_bound(self.m_x, self.hidden_dim, self.m_elem, self.num_layers)
    }
}
