//! Gauss-Newton (G-term) Hessian of the per-object loss, `H ≈ FᵀAF`.
//!
//! `A = diag(p) − ppᵀ` is the Hessian of cross-entropy with respect to the
//! logits and `F` is the `K × P` Jacobian of the logits with respect to `θ`,
//! assembled layer by layer from `G⁽ᵖ⁾ = ∂z/∂z⁽ᵖ⁾`. The `P × P` matrix is never
//! formed outside of the small-scale oracles.

mod bounds;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

pub use bounds::{
    layer_spectral_norms, layerwise_bound, layerwise_bound_with_norms, lemma1_bound, measure_constants,
    theorem1_bound, BoundConstants,
};

use crate::error::{Error, Result};
use crate::fd;
use crate::linalg::{dot, frobenius_norm, kron_row_block, sym_eig, Matrix};
use crate::math;
use crate::nn::{self, ForwardTrace, MlpConfig, MlpParams};

/// Parameter count above which dense `P × P` paths refuse to run.
pub const DENSE_MAX_PARAMS: usize = 2000;
/// Tolerance on `Σ p_k = 1` accepted by [`logit_hessian`].
pub const PROB_SUM_TOL: f64 = 1e-9;
/// Eigenvalues of `A` below this are treated as roundoff when taking `A^{1/2}`.
pub const SQRT_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LogitHessian {
    a: Matrix,
}

impl LogitHessian {
    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    /// Wraps an arbitrary symmetric `K × K` matrix. Used to inject faults into
    /// the oracle suite; ordinary code goes through [`logit_hessian`].
    pub fn from_matrix_unchecked(a: Matrix) -> Self {
        Self { a }
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(&self.a)
    }

    /// Symmetric square root via eigendecomposition, clamping roundoff-level
    /// negative eigenvalues to zero.
    pub fn sqrt(&self) -> Result<Matrix> {
        let eig = sym_eig(&self.a)?;
        let k = self.dim();
        let roots: Vec<f64> = eig
            .values
            .iter()
            .map(|&l| if l <= SQRT_CLAMP { 0.0 } else { math::sqrt(l) })
            .collect();
        Ok(Matrix::from_fn(k, k, |i, j| {
            (0..k)
                .map(|m| eig.vectors[(i, m)] * roots[m] * eig.vectors[(j, m)])
                .sum()
        }))
    }
}

/// `A = diag(p) − ppᵀ`.
pub fn logit_hessian(probs: &[f64]) -> Result<LogitHessian> {
    if probs.is_empty() {
        return Err(Error::InvalidProbabilities("empty probability vector".into()));
    }
    if let Some(bad) = probs.iter().find(|&&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidProbabilities(format!("entry {bad} outside [0, 1]")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::InvalidProbabilities(format!("entries sum to {sum}")));
    }
    let k = probs.len();
    let a = Matrix::from_fn(k, k, |i, j| {
        let outer = probs[i] * probs[j];
        if i == j {
            probs[i] - outer
        } else {
            -outer
        }
    });
    Ok(LogitHessian { a })
}

/// `G⁽ᵖ⁾ = ∂z/∂z⁽ᵖ⁾` for every layer, each `K × out_dim(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianChain {
    g: Vec<Matrix>,
}

impl JacobianChain {
    pub fn layers(&self) -> &[Matrix] {
        &self.g
    }

    pub fn get(&self, p: usize) -> &Matrix {
        &self.g[p]
    }
}

/// `G⁽ᴸ⁾ = I_K` and `G⁽ᵖ⁾ = G⁽ᵖ⁺¹⁾ W⁽ᵖ⁺¹⁾ D⁽ᵖ⁾`.
pub fn jacobian_chain(params: &MlpParams, trace: &ForwardTrace) -> Result<JacobianChain> {
    check_trace(params.config(), trace)?;
    let layers = params.num_layers();
    let k = params.config().num_classes;
    let mut g = vec![Matrix::identity(k)];
    for p in (0..layers - 1).rev() {
        let next = g.last().expect("chain is never empty");
        let mut gp = next.matmul(params.weight(p + 1))?;
        let mask = &trace.masks[p];
        for row in 0..k {
            for (v, &keep) in gp.row_mut(row).iter_mut().zip(mask) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
        g.push(gp);
    }
    g.reverse();
    Ok(JacobianChain { g })
}

fn check_trace(config: &MlpConfig, trace: &ForwardTrace) -> Result<()> {
    let shapes = config.layer_shapes();
    if trace.layer_inputs.len() != shapes.len()
        || trace.pre_activations.len() != shapes.len()
        || trace.masks.len() + 1 != shapes.len()
    {
        return Err(Error::DimensionMismatch {
            context: "forward trace layer count",
            expected: shapes.len(),
            found: trace.layer_inputs.len(),
        });
    }
    for (p, &(out_dim, in_dim)) in shapes.iter().enumerate() {
        if trace.layer_inputs[p].len() != in_dim {
            return Err(Error::DimensionMismatch {
                context: "forward trace layer input",
                expected: in_dim,
                found: trace.layer_inputs[p].len(),
            });
        }
        if trace.pre_activations[p].len() != out_dim {
            return Err(Error::DimensionMismatch {
                context: "forward trace pre-activation",
                expected: out_dim,
                found: trace.pre_activations[p].len(),
            });
        }
    }
    Ok(())
}

/// `H ≈ FᵀAF` kept in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredGaussNewton {
    f: Matrix,
    a: LogitHessian,
}

impl FactoredGaussNewton {
    pub fn new(f: Matrix, a: LogitHessian) -> Result<Self> {
        if f.rows() != a.dim() {
            return Err(Error::DimensionMismatch {
                context: "Gauss-Newton factor rows vs logit Hessian",
                expected: a.dim(),
                found: f.rows(),
            });
        }
        Ok(Self { f, a })
    }

    /// The `K × P` logit Jacobian.
    pub fn factor(&self) -> &Matrix {
        &self.f
    }

    pub fn logit_hessian(&self) -> &LogitHessian {
        &self.a
    }

    pub fn param_count(&self) -> usize {
        self.f.cols()
    }
}

/// Assembles `F`: at row `k`, the `vec W⁽ᵖ⁾` block is `kron_row_block(G⁽ᵖ⁾_k, x⁽ᵖ⁾)`
/// and the bias block is `G⁽ᵖ⁾_k`.
pub fn assemble_factor(chain: &JacobianChain, trace: &ForwardTrace, config: &MlpConfig) -> Result<Matrix> {
    check_trace(config, trace)?;
    let layout = config.layout();
    if chain.g.len() != layout.len() {
        return Err(Error::DimensionMismatch {
            context: "Jacobian chain length",
            expected: layout.len(),
            found: chain.g.len(),
        });
    }
    let k = config.num_classes;
    let mut f = Matrix::zeros(k, config.param_count());
    for (p, layer) in layout.iter().enumerate() {
        let g = &chain.g[p];
        if g.shape() != (k, layer.out_dim) {
            return Err(Error::DimensionMismatch {
                context: "Jacobian chain block",
                expected: k * layer.out_dim,
                found: g.rows() * g.cols(),
            });
        }
        let x = &trace.layer_inputs[p];
        for row in 0..k {
            let block = kron_row_block(g.row(row), x);
            let dst = f.row_mut(row);
            dst[layer.weight_offset..layer.weight_offset + block.len()].copy_from_slice(&block);
            if let Some(b) = layer.bias_offset {
                dst[b..b + layer.out_dim].copy_from_slice(g.row(row));
            }
        }
    }
    Ok(f)
}

/// Forward pass, Jacobian chain, factor and logit Hessian for one object.
pub fn gauss_newton(params: &MlpParams, x: &[f64], label: usize) -> Result<FactoredGaussNewton> {
    let trace = nn::forward_label(params, x, label)?;
    gauss_newton_from_trace(params, &trace)
}

pub fn gauss_newton_from_trace(params: &MlpParams, trace: &ForwardTrace) -> Result<FactoredGaussNewton> {
    let chain = jacobian_chain(params, trace)?;
    let f = assemble_factor(&chain, trace, params.config())?;
    FactoredGaussNewton::new(f, logit_hessian(&trace.probs)?)
}

/// `Fᵀ(A(Fv))` without forming the `P × P` matrix.
pub fn gn_apply(gn: &FactoredGaussNewton, v: &[f64]) -> Result<Vec<f64>> {
    let fv = gn.f.matvec(v)?;
    let afv = gn.a.a.matvec(&fv)?;
    gn.f.matvec_t(&afv)
}

/// Explicit `FᵀAF`; refuses `P > DENSE_MAX_PARAMS`.
pub fn gn_dense(gn: &FactoredGaussNewton) -> Result<Matrix> {
    let p = gn.param_count();
    if p > DENSE_MAX_PARAMS {
        return Err(Error::TooLarge {
            what: "dense Gauss-Newton Hessian",
            size: p,
            limit: DENSE_MAX_PARAMS,
        });
    }
    let af = gn.a.a.matmul(&gn.f)?;
    let k = gn.f.rows();
    let mut h = Matrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v: f64 = (0..k).map(|r| gn.f[(r, i)] * af[(r, j)]).sum();
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// `‖FᵀAF‖₂` as the top eigenvalue of the `K × K` matrix `A^{1/2} FFᵀ A^{1/2}`,
/// which shares its non-zero spectrum with the implicit Hessian.
pub fn gn_spectral_norm(gn: &FactoredGaussNewton) -> Result<f64> {
    let root = gn.a.sqrt()?;
    let gram = gn.f.outer_gram();
    let left = root.matmul(&gram)?.matmul(&root)?;
    let k = left.rows();
    let s = Matrix::from_fn(k, k, |i, j| 0.5 * (left[(i, j)] + left[(j, i)]));
    let top = sym_eig(&s)?.values[0];
    Ok(top.max(0.0))
}

/// Full loss Hessian by central differences of the backpropagated gradient.
pub fn finite_diff_hessian(params: &MlpParams, x: &[f64], y: &[f64], eps: f64) -> Result<Matrix> {
    let label = nn::one_hot_index(y)?;
    let config = *params.config();
    let theta = params.flatten();
    finite_diff_hessian_of(
        |th| nn::grad_label(&MlpParams::unflatten(config, th)?, x, label),
        &theta,
        eps,
    )
}

/// Central-difference Hessian of any gradient map, with the same size guard.
pub fn finite_diff_hessian_of<G>(grad: G, theta: &[f64], eps: f64) -> Result<Matrix>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if theta.len() > DENSE_MAX_PARAMS {
        return Err(Error::TooLarge {
            what: "finite-difference Hessian",
            size: theta.len(),
            limit: DENSE_MAX_PARAMS,
        });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be > 0".into()));
    }
    fd::hessian_from_gradient(grad, theta, eps)
}

/// `vᵀ(FᵀAF)v = (Fv)ᵀA(Fv)`.
pub fn gn_quadratic_form(gn: &FactoredGaussNewton, v: &[f64]) -> Result<f64> {
    let fv = gn.f.matvec(v)?;
    Ok(dot(&fv, &gn.a.a.matvec(&fv)?))
}
