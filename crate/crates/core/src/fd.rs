//! Central finite differences.
//!
//! These are the independent oracles for the analytic derivatives elsewhere in
//! the crate: they only ever evaluate the function being differentiated.

use alloc::vec::Vec;

use crate::error::Result;
use crate::linalg::Matrix;

/// Default step for central differences on O(1)-scale losses.
pub const DEFAULT_EPS: f64 = 1e-5;

/// `∂f/∂x_i ≈ (f(x + εe_i) − f(x − εe_i)) / 2ε`.
pub fn gradient<F>(f: F, x: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = f(&probe)?;
        probe[i] = x[i] - eps;
        let down = f(&probe)?;
        probe[i] = x[i];
        out.push((up - down) / (2.0 * eps));
    }
    Ok(out)
}

/// Jacobian of a vector-valued `f`: row `k` holds `∂f_k/∂x`.
pub fn jacobian<F>(f: F, x: &[f64], eps: f64) -> Result<Matrix>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut probe = x.to_vec();
    let mut columns = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = f(&probe)?;
        probe[i] = x[i] - eps;
        let down = f(&probe)?;
        probe[i] = x[i];
        columns.push(
            up.iter()
                .zip(&down)
                .map(|(u, d)| (u - d) / (2.0 * eps))
                .collect::<Vec<f64>>(),
        );
    }
    let outputs = columns.first().map_or(0, |c| c.len());
    Ok(Matrix::from_fn(outputs, x.len(), |k, i| columns[i][k]))
}

/// Hessian from central differences of an analytic gradient, symmetrized as
/// `(H + Hᵀ) / 2`.
pub fn hessian_from_gradient<G>(grad: G, x: &[f64], eps: f64) -> Result<Matrix>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let j = jacobian(grad, x, eps)?;
    let n = x.len();
    Ok(Matrix::from_fn(n, n, |a, b| 0.5 * (j[(a, b)] + j[(b, a)])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_cubic() {
        let g = gradient(|x| Ok(x[0] * x[0] * x[0] + 2.0 * x[1]), &[1.5, -2.0], 1e-5).unwrap();
        assert!((g[0] - 6.75).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn hessian_of_quadratic_is_exact() {
        // ½ xᵀQx has gradient Qx.
        let q = Matrix::from_rows(&[&[2.0, 0.5, 0.0], &[0.5, 1.0, -0.3], &[0.0, -0.3, 4.0]]).unwrap();
        let h = hessian_from_gradient(|x| q.matvec(x), &[0.3, -1.0, 2.0], 1e-5).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((h[(i, j)] - q[(i, j)]).abs() < 1e-6);
            }
        }
    }
}
