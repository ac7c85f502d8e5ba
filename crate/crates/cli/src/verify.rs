//! The oracle suite: every analytic quantity is compared against an
//! independent numerical reference on small random networks.

use std::fmt;
use std::time::{Duration, Instant};

use landscape_core::hessian::{
    self, gn_apply, gn_dense, gn_spectral_norm, FactoredGaussNewton, LogitHessian,
};
use landscape_core::linalg::{sym_eig_small, Matrix};
use landscape_core::nn::{self, init_params, MlpConfig, MlpParams};
use landscape_core::{fd, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Finite-difference step shared by every check.
pub const FD_EPS: f64 = 1e-5;

pub const GRADIENT_TOL: f64 = 1e-5;
pub const FACTOR_TOL: f64 = 1e-6;
pub const LOGIT_HESSIAN_TOL: f64 = 1e-6;
pub const LOGIT_HESSIAN_PROPERTY_TOL: f64 = 1e-12;
pub const SPECTRAL_TOL: f64 = 1e-9;
pub const APPLY_TOL: f64 = 1e-12;
pub const LINEAR_EXACT_TOL: f64 = 1e-5;

/// Relative errors use `max(|a|, |b|, floor)` as the denominator so entries
/// that are zero analytically are compared on an absolute scale.
pub const GRADIENT_FLOOR: f64 = 1e-3;
pub const FACTOR_FLOOR: f64 = 1e-2;

/// The logit Hessian used by every Hessian check. Swapping it lets tests
/// confirm that the suite notices a broken implementation.
pub type LogitHessianFn = fn(&[f64]) -> Result<LogitHessian>;

#[derive(Debug, Clone, Copy)]
pub struct Hooks {
    pub logit_hessian: LogitHessianFn,
}

impl Default for Hooks {
    fn default() -> Self {
        Self {
            logit_hessian: hessian::logit_hessian,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub samples: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// Set when a case could not be evaluated at all.
    pub failure: Option<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.max_error <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<44} max_err={:.3e} tol={:.0e} n={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.max_error,
            self.tolerance,
            self.samples
        )?;
        if let Some(why) = &self.failure {
            write!(f, " ({why})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub seed: u64,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn uniform(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// A small network with random shape, Glorot weights and, when enabled,
/// non-zero biases so that bias blocks are exercised.
fn random_net(rng: &mut ChaCha8Rng, layers: Option<usize>, bias: Option<bool>) -> MlpParams {
    let n = rng.random_range(2..=4);
    let h = rng.random_range(2..=5);
    let l = layers.unwrap_or_else(|| rng.random_range(1..=3));
    let k = rng.random_range(2..=4);
    let b = bias.unwrap_or_else(|| rng.random_bool(0.5));
    let config = MlpConfig::new(n, h, l, k, b).expect("valid shape");
    let params = init_params(config, rng.random()).expect("valid init");
    if !b {
        return params;
    }
    let mut theta = params.flatten();
    for layer in config.layout() {
        if let Some(off) = layer.bias_offset {
            for v in &mut theta[off..off + layer.out_dim] {
                *v = rng.random_range(-0.3..0.3);
            }
        }
    }
    MlpParams::unflatten(config, &theta).expect("same layout")
}

/// Inputs are redrawn until every hidden pre-activation clears this margin:
/// central differences straddling a ReLU kink measure a one-sided slope, not
/// a derivative.
pub const KINK_MARGIN: f64 = 1e-3;

fn random_object(params: &MlpParams, rng: &mut ChaCha8Rng) -> (Vec<f64>, usize) {
    let c = params.config();
    let mut attempt = 0;
    loop {
        let x = uniform(c.input_dim, -1.0, 1.0, rng);
        let label = rng.random_range(0..c.num_classes);
        let trace = nn::forward_label(params, &x, label).expect("shapes match");
        let hidden = &trace.pre_activations[..trace.pre_activations.len() - 1];
        attempt += 1;
        // A unit with no incoming signal never clears the margin; give up and
        // let the check report what it sees.
        if attempt >= 1000 || hidden.iter().flatten().all(|z| z.abs() >= KINK_MARGIN) {
            return (x, label);
        }
    }
}

/// Gauss-Newton factorization with the hooked logit Hessian.
fn hooked_gn(params: &MlpParams, x: &[f64], label: usize, hooks: &Hooks) -> Result<FactoredGaussNewton> {
    let trace = nn::forward_label(params, x, label)?;
    let gn = hessian::gauss_newton_from_trace(params, &trace)?;
    FactoredGaussNewton::new(gn.factor().clone(), (hooks.logit_hessian)(&trace.probs)?)
}

struct Acc {
    name: &'static str,
    tolerance: f64,
    samples: usize,
    max_error: f64,
    failure: Option<String>,
}

impl Acc {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            samples: 0,
            max_error: 0.0,
            failure: None,
        }
    }

    fn run(&mut self, case: impl FnOnce() -> Result<f64>) {
        self.samples += 1;
        match case() {
            Ok(e) if e.is_nan() => {
                self.failure.get_or_insert_with(|| "NaN error".into());
            }
            Ok(e) => self.max_error = self.max_error.max(e),
            Err(e) => {
                self.failure.get_or_insert_with(|| e.to_string());
            }
        }
    }

    fn finish(self) -> Check {
        Check {
            name: self.name,
            samples: self.samples,
            max_error: self.max_error,
            tolerance: self.tolerance,
            failure: self.failure,
        }
    }
}

fn check_gradient(rng: &mut ChaCha8Rng) -> Check {
    let mut acc = Acc::new("gradient vs central differences", GRADIENT_TOL);
    for _ in 0..20 {
        let p = random_net(rng, None, None);
        let (x, label) = random_object(&p, rng);
        acc.run(|| {
            let c = *p.config();
            let g = nn::grad_label(&p, &x, label)?;
            let num = fd::gradient(|th| nn::loss_label(&MlpParams::unflatten(c, th)?, &x, label), &p.flatten(), FD_EPS)?;
            Ok(g.iter()
                .zip(&num)
                .map(|(a, b)| rel_err(*a, *b, GRADIENT_FLOOR))
                .fold(0.0, f64::max))
        });
    }
    acc.finish()
}

fn check_factor(rng: &mut ChaCha8Rng) -> Check {
    let mut acc = Acc::new("factor F vs finite-difference logit Jacobian", FACTOR_TOL);
    for _ in 0..20 {
        let p = random_net(rng, None, None);
        let (x, label) = random_object(&p, rng);
        acc.run(|| {
            let c = *p.config();
            let gn = hessian::gauss_newton(&p, &x, label)?;
            let num = fd::jacobian(|th| nn::logits(&MlpParams::unflatten(c, th)?, &x), &p.flatten(), FD_EPS)?;
            Ok(max_rel(gn.factor(), &num, FACTOR_FLOOR))
        });
    }
    acc.finish()
}

fn max_rel(a: &Matrix, b: &Matrix, floor: f64) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| rel_err(*x, *y, floor))
        .fold(0.0, f64::max)
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn random_logits(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k = rng.random_range(2..=8);
    uniform(k, -4.0, 4.0, rng)
}

fn check_logit_hessian(rng: &mut ChaCha8Rng, hooks: &Hooks) -> Check {
    let mut acc = Acc::new("A vs finite-difference CE Hessian in z", LOGIT_HESSIAN_TOL);
    for _ in 0..20 {
        let z = random_logits(rng);
        let label = rng.random_range(0..z.len());
        acc.run(|| {
            let a = (hooks.logit_hessian)(&nn::softmax(&z))?;
            // ∇_z CE(z, y) = softmax(z) − y, differentiated once more.
            let num = fd::jacobian(
                |zz| {
                    let mut g = nn::softmax(zz);
                    g[label] -= 1.0;
                    Ok(g)
                },
                &z,
                FD_EPS,
            )?;
            Ok(max_abs_diff(a.matrix(), &num))
        });
    }
    acc.finish()
}

fn check_logit_hessian_properties(rng: &mut ChaCha8Rng, hooks: &Hooks) -> Check {
    let mut acc = Acc::new("A symmetric, PSD, zero row sums, |A|_F <= sqrt2", LOGIT_HESSIAN_PROPERTY_TOL);
    for _ in 0..200 {
        let z = random_logits(rng);
        acc.run(|| {
            let a = (hooks.logit_hessian)(&nn::softmax(&z))?;
            let m = a.matrix();
            let row_sum = (0..m.rows())
                .map(|i| m.row(i).iter().sum::<f64>().abs())
                .fold(0.0, f64::max);
            let lowest = sym_eig_small(m)?.last().copied().unwrap_or(0.0);
            let frob = a.frobenius_norm() - core::f64::consts::SQRT_2;
            // Roundoff in the eigensolver is ~1e-16 · ‖A‖; only real violations count.
            let psd = (-lowest - 1e-14).max(0.0);
            Ok(m.max_asymmetry().max(row_sum).max(psd).max(frob.max(0.0)))
        });
    }
    acc.finish()
}

fn check_spectral_norm(rng: &mut ChaCha8Rng, hooks: &Hooks) -> Check {
    let mut acc = Acc::new("gn_spectral_norm vs dense eigensolver", SPECTRAL_TOL);
    for _ in 0..50 {
        let p = random_net(rng, None, None);
        let (x, label) = random_object(&p, rng);
        acc.run(|| {
            let gn = hooked_gn(&p, &x, label, hooks)?;
            let dense = sym_eig_small(&gn_dense(&gn)?)?;
            let top = dense.first().copied().unwrap_or(0.0).max(0.0);
            let s = gn_spectral_norm(&gn)?;
            Ok(rel_err(s, top, f64::MIN_POSITIVE))
        });
    }
    acc.finish()
}

fn check_apply(rng: &mut ChaCha8Rng, hooks: &Hooks) -> Check {
    let mut acc = Acc::new("matrix-free FtAFv vs dense product", APPLY_TOL);
    for _ in 0..20 {
        let p = random_net(rng, None, None);
        let (x, label) = random_object(&p, rng);
        let v = uniform(p.config().param_count(), -1.0, 1.0, rng);
        acc.run(|| {
            let gn = hooked_gn(&p, &x, label, hooks)?;
            let dense = gn_dense(&gn)?;
            let scale = dense.max_abs().max(1.0) * v.len() as f64;
            let lhs = gn_apply(&gn, &v)?;
            let rhs = dense.matvec(&v)?;
            Ok(lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs() / scale).fold(0.0, f64::max))
        });
    }
    acc.finish()
}

fn check_linear_exactness(rng: &mut ChaCha8Rng, hooks: &Hooks) -> Check {
    let mut acc = Acc::new("L=1 dense GN vs finite-difference Hessian", LINEAR_EXACT_TOL);
    for _ in 0..10 {
        let p = random_net(rng, Some(1), None);
        let (x, label) = random_object(&p, rng);
        acc.run(|| {
            let gn = hooked_gn(&p, &x, label, hooks)?;
            let mut y = vec![0.0; p.config().num_classes];
            y[label] = 1.0;
            let full = hessian::finite_diff_hessian(&p, &x, &y, FD_EPS)?;
            Ok(max_abs_diff(&gn_dense(&gn)?, &full))
        });
    }
    acc.finish()
}

/// Runs every check. Each check draws from its own stream of `seed` so adding
/// cases to one check leaves the others unchanged.
pub fn run_suite(seed: u64, hooks: &Hooks) -> Summary {
    let start = Instant::now();
    let stream = |s: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s);
        rng
    };
    let checks = vec![
        check_gradient(&mut stream(0)),
        check_factor(&mut stream(1)),
        check_logit_hessian(&mut stream(2), hooks),
        check_logit_hessian_properties(&mut stream(3), hooks),
        check_spectral_norm(&mut stream(4), hooks),
        check_apply(&mut stream(5), hooks),
        check_linear_exactness(&mut stream(6), hooks),
    ];
    Summary {
        seed,
        checks,
        elapsed: start.elapsed(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn negated(probs: &[f64]) -> Result<LogitHessian> {
        let a = hessian::logit_hessian(probs)?;
        Ok(LogitHessian::from_matrix_unchecked(a.matrix().scale(-1.0)))
    }

    #[test]
    fn default_suite_passes() {
        let s = run_suite(0, &Hooks::default());
        for c in &s.checks {
            assert!(c.passed(), "{c}");
        }
    }

    #[test]
    fn sign_flip_in_a_is_caught() {
        let s = run_suite(0, &Hooks { logit_hessian: negated });
        let fd_check = s.checks.iter().find(|c| c.name.starts_with("A vs finite")).unwrap();
        assert!(!fd_check.passed(), "{fd_check}");
        assert!(!s.passed());
    }
}
