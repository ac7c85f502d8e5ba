//! Prefix means of per-object losses and how fast they settle.
//!
//! With `L_k = (1/k) Σ_{i≤k} ℓ_i` at a fixed parameter point, consecutive
//! prefix means satisfy `(k+1)(L_{k+1} − L_k) = ℓ_{k+1} − L_k`, so their
//! difference decays like `1/k` once `|ℓ_{k+1} − L_k|` stabilizes.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hessian::{gauss_newton, gn_apply, BoundConstants};
use crate::linalg::{dot, norm2, KahanSum};
use crate::math;
use crate::nn::{self, MlpParams};

/// Absolute tolerance of the prefix-mean identity check.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Floor substituted for zero values in log-log fits.
pub const LOG_FLOOR: f64 = 1e-300;
/// Minimum number of points accepted by [`slope_fit`].
pub const MIN_SLOPE_POINTS: usize = 10;

/// Per-object losses at one parameter point, their prefix means and the
/// absolute differences of consecutive prefix means.
#[derive(Debug, Clone, PartialEq)]
pub struct LossLedger {
    losses: Vec<f64>,
    prefix_means: Vec<f64>,
    diffs: Vec<f64>,
}

impl LossLedger {
    pub fn from_losses(losses: Vec<f64>) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::InvalidArgument("ledger needs at least one loss".into()));
        }
        // Summing offsets from the first loss keeps constant prefixes exact.
        let shift = losses[0];
        let mut sum = KahanSum::new();
        let prefix_means: Vec<f64> = losses
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                sum.add(l - shift);
                shift + sum.value() / (i + 1) as f64
            })
            .collect();
        let diffs = prefix_means.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        Ok(Self {
            losses,
            prefix_means,
            diffs,
        })
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    /// `prefix_means()[k − 1] = L_k`.
    pub fn prefix_means(&self) -> &[f64] {
        &self.prefix_means
    }

    /// `diffs()[k − 1] = |L_{k+1} − L_k|` for `k = 1..m−1`.
    pub fn diffs(&self) -> &[f64] {
        &self.diffs
    }

    /// `L_k` for `1 ≤ k ≤ m`.
    pub fn mean_at(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.len() {
            return Err(Error::OutOfRange {
                what: "k",
                value: k,
                min: 1,
                max: self.len(),
            });
        }
        Ok(self.prefix_means[k - 1])
    }

    /// Largest `|(k+1)(L_{k+1} − L_k) − (ℓ_{k+1} − L_k)|` over the ledger.
    pub fn identity_residual(&self) -> f64 {
        (1..self.len())
            .map(|k| {
                let lk = self.prefix_means[k - 1];
                let lk1 = self.prefix_means[k];
                ((k + 1) as f64 * (lk1 - lk) - (self.losses[k] - lk)).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_loss(&self) -> f64 {
        self.losses.iter().copied().fold(0.0, f64::max)
    }
}

/// Ledger of `params_hat` on `dataset` in its current order.
pub fn build_ledger(params_hat: &MlpParams, dataset: &Dataset) -> Result<LossLedger> {
    LossLedger::from_losses(nn::per_object_losses(params_hat, dataset)?)
}

/// `2/(k+1) · (M_ℓ + M_H R²)`.
pub fn lemma2_bound(k: usize, constants: &BoundConstants, radius: f64) -> f64 {
    2.0 * (constants.m_loss + constants.m_h * radius * radius) / (k + 1) as f64
}

/// Permutation-averaged `|L_{k+1} − L_k|` with its exponential moving average.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCurve {
    /// `1..m−1`.
    pub k: Vec<usize>,
    pub mean_abs_diff: Vec<f64>,
    /// Standard error of `mean_abs_diff` across repetitions (zero for one rep).
    pub std_err: Vec<f64>,
    pub ema: Vec<f64>,
    pub alpha: f64,
    pub num_reps: usize,
    pub seed: u64,
}

impl ConvergenceCurve {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }
}

/// `ema[0] = v[0]`, `ema[t] = α·ema[t−1] + (1−α)·v[t]`.
pub fn ema(values: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (t, &v) in values.iter().enumerate() {
        acc = if t == 0 { v } else { alpha * acc + (1.0 - alpha) * v };
        out.push(acc);
    }
    out
}

/// Averages ledger differences over `reps` seeded uniform permutations of the
/// dataset, then smooths with factor `alpha`.
pub fn averaged_curve(params_hat: &MlpParams, dataset: &Dataset, reps: usize, alpha: f64, seed: u64) -> Result<ConvergenceCurve> {
    averaged_curve_from_losses(&nn::per_object_losses(params_hat, dataset)?, reps, alpha, seed)
}

/// [`averaged_curve`] over precomputed per-object losses; permuting the
/// dataset only permutes these.
pub fn averaged_curve_from_losses(losses: &[f64], reps: usize, alpha: f64, seed: u64) -> Result<ConvergenceCurve> {
    averaged_curve_with(losses, reps, alpha, seed, |_| Ok(()))
}

/// [`averaged_curve_from_losses`] that hands every permuted ledger to
/// `inspect` before it is folded into the average.
pub fn averaged_curve_with<F>(losses: &[f64], reps: usize, alpha: f64, seed: u64, mut inspect: F) -> Result<ConvergenceCurve>
where
    F: FnMut(&LossLedger) -> Result<()>,
{
    if reps == 0 {
        return Err(Error::InvalidArgument("reps must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument("EMA factor must lie in [0, 1)".into()));
    }
    if losses.len() < 2 {
        return Err(Error::InvalidArgument("convergence curve needs at least two objects".into()));
    }
    let points = losses.len() - 1;
    let mut sums = vec![KahanSum::new(); points];
    let mut sq_sums = vec![KahanSum::new(); points];
    let mut order: Vec<usize> = (0..losses.len()).collect();
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64);
        order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
        order.shuffle(&mut rng);
        let ledger = LossLedger::from_losses(order.iter().map(|&i| losses[i]).collect())?;
        inspect(&ledger)?;
        for (t, &d) in ledger.diffs().iter().enumerate() {
            sums[t].add(d);
            sq_sums[t].add(d * d);
        }
    }
    let n = reps as f64;
    let mean_abs_diff: Vec<f64> = sums.iter().map(|s| s.value() / n).collect();
    let std_err = if reps > 1 {
        mean_abs_diff
            .iter()
            .zip(&sq_sums)
            .map(|(&mean, sq)| {
                let var = ((sq.value() - n * mean * mean) / (n - 1.0)).max(0.0);
                math::sqrt(var / n)
            })
            .collect()
    } else {
        vec![0.0; points]
    };
    Ok(ConvergenceCurve {
        k: (1..=points).collect(),
        ema: ema(&mean_abs_diff, alpha),
        mean_abs_diff,
        std_err,
        alpha,
        num_reps: reps,
        seed,
    })
}

/// Least-squares fit of `log(value)` against `log(k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
    /// Points whose value was zero and got replaced by [`LOG_FLOOR`].
    pub floored: usize,
    pub k_min: usize,
    pub k_max: usize,
}

/// Log-log slope of the unsmoothed averages over `k_min ≤ k ≤ k_max`.
pub fn slope_fit(curve: &ConvergenceCurve, k_min: usize, k_max: usize) -> Result<SlopeFit> {
    if k_min >= k_max || k_max > curve.len() || k_min == 0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "slope window [{k_min}, {k_max}] invalid for a curve of length {}",
            curve.len()
        )));
    }
    let mut floored = 0;
    let mut xs = Vec::with_capacity(k_max - k_min + 1);
    let mut ys = Vec::with_capacity(k_max - k_min + 1);
    for (&k, &v) in curve.k.iter().zip(&curve.mean_abs_diff) {
        if k < k_min || k > k_max {
            continue;
        }
        if !v.is_finite() || v < 0.0 {
            continue;
        }
        let v = if v < LOG_FLOOR {
            floored += 1;
            LOG_FLOOR
        } else {
            v
        };
        xs.push(math::ln(k as f64));
        ys.push(math::ln(v));
    }
    if xs.len() < MIN_SLOPE_POINTS {
        return Err(Error::TooFewPoints {
            found: xs.len(),
            required: MIN_SLOPE_POINTS,
        });
    }
    let (slope, intercept) = least_squares(&xs, &ys);
    Ok(SlopeFit {
        slope,
        intercept,
        points: xs.len(),
        floored,
        k_min,
        k_max,
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    (slope, my - slope * mx)
}

/// A loss surface with a curvature operator at the expansion point.
pub trait TaylorObjective {
    fn dim(&self) -> usize;
    fn loss(&self, theta: &[f64]) -> Result<f64>;
    fn grad(&self, theta: &[f64]) -> Result<Vec<f64>>;
    /// `H(θ*)·v` for the curvature used by the quadratic model.
    fn curvature_apply(&self, theta_star: &[f64], v: &[f64]) -> Result<Vec<f64>>;
}

/// `L_k` of a network on the first `k` objects, with the mean per-object
/// Gauss-Newton product as curvature.
pub struct MlpObjective<'a> {
    config: nn::MlpConfig,
    dataset: &'a Dataset,
    k: usize,
}

impl<'a> MlpObjective<'a> {
    pub fn new(config: nn::MlpConfig, dataset: &'a Dataset, k: usize) -> Result<Self> {
        if k == 0 || k > dataset.len() {
            return Err(Error::OutOfRange {
                what: "k",
                value: k,
                min: 1,
                max: dataset.len(),
            });
        }
        nn::check_dataset(&MlpParams::zeros(config)?, dataset)?;
        Ok(Self { config, dataset, k })
    }

    fn params(&self, theta: &[f64]) -> Result<MlpParams> {
        MlpParams::unflatten(self.config, theta)
    }
}

impl TaylorObjective for MlpObjective<'_> {
    fn dim(&self) -> usize {
        self.config.param_count()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        nn::mean_loss(&self.params(theta)?, self.dataset, self.k)
    }

    fn grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let params = self.params(theta)?;
        let mut g = vec![0.0; self.dim()];
        let scale = 1.0 / self.k as f64;
        for i in 0..self.k {
            let trace = nn::forward_label(&params, self.dataset.x(i), self.dataset.label(i))?;
            nn::accumulate_grad(&params, &trace, scale, &mut g);
        }
        Ok(g)
    }

    fn curvature_apply(&self, theta_star: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let params = self.params(theta_star)?;
        let mut out = vec![0.0; self.dim()];
        for i in 0..self.k {
            let gn = gauss_newton(&params, self.dataset.x(i), self.dataset.label(i))?;
            let hv = gn_apply(&gn, v)?;
            for (o, h) in out.iter_mut().zip(hv) {
                *o += h;
            }
        }
        let scale = 1.0 / self.k as f64;
        out.iter_mut().for_each(|o| *o *= scale);
        Ok(out)
    }
}

/// One probe of the quadratic model at `θ* + R·u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorProbe {
    pub probe: usize,
    pub true_loss: f64,
    pub model_loss: f64,
    pub abs_error: f64,
    /// `R·(∇L_k(θ*)·u)`.
    pub grad_term: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorReport {
    pub radius: f64,
    pub base_loss: f64,
    /// `‖∇L_k(θ*)‖₂`, zero only at an exact stationary point.
    pub grad_norm: f64,
    pub probes: Vec<TaylorProbe>,
    pub max_abs_model_error: f64,
    pub seed: u64,
}

/// Compares `L(θ* + R·u)` with `L(θ*) + R ∇L·u + ½R² uᵀHu` along seeded random
/// unit directions `u`. The gradient term is measured rather than assumed zero.
pub fn taylor_check<O: TaylorObjective + ?Sized>(
    objective: &O,
    theta_star: &[f64],
    radius: f64,
    probes: usize,
    seed: u64,
) -> Result<TaylorReport> {
    if theta_star.len() != objective.dim() {
        return Err(Error::DimensionMismatch {
            context: "Taylor expansion point",
            expected: objective.dim(),
            found: theta_star.len(),
        });
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument("Taylor radius must be finite and >= 0".into()));
    }
    if probes == 0 {
        return Err(Error::InvalidArgument("Taylor check needs at least one probe".into()));
    }
    let base_loss = objective.loss(theta_star)?;
    let g = objective.grad(theta_star)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(probes);
    for probe in 0..probes {
        let u = unit_direction(objective.dim(), &mut rng);
        let theta: Vec<f64> = theta_star.iter().zip(&u).map(|(t, d)| t + radius * d).collect();
        let true_loss = objective.loss(&theta)?;
        let grad_term = radius * dot(&g, &u);
        let curvature = dot(&u, &objective.curvature_apply(theta_star, &u)?);
        let model_loss = base_loss + grad_term + 0.5 * radius * radius * curvature;
        rows.push(TaylorProbe {
            probe,
            true_loss,
            model_loss,
            abs_error: (true_loss - model_loss).abs(),
            grad_term,
        });
    }
    Ok(TaylorReport {
        radius,
        base_loss,
        grad_norm: norm2(&g),
        max_abs_model_error: rows.iter().map(|r| r.abs_error).fold(0.0, f64::max),
        probes: rows,
        seed,
    })
}

fn unit_direction(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let u: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm2(&u);
        if n > 0.0 {
            return u.into_iter().map(|v| v / n).collect();
        }
    }
}

/// [`taylor_check`] for a network's prefix loss `L_k`.
pub fn taylor_check_mlp(theta_star: &MlpParams, dataset: &Dataset, k: usize, radius: f64, probes: usize, seed: u64) -> Result<TaylorReport> {
    let objective = MlpObjective::new(*theta_star.config(), dataset, k)?;
    taylor_check(&objective, &theta_star.flatten(), radius, probes, seed)
}

/// Quadratic surface `½(θ−c)ᵀQ(θ−c)`; its quadratic model is exact.
pub struct QuadraticObjective {
    pub q: crate::linalg::Matrix,
    pub center: Vec<f64>,
}

impl TaylorObjective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        let d: Vec<f64> = theta.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        Ok(0.5 * dot(&d, &self.q.matvec(&d)?))
    }

    fn grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let d: Vec<f64> = theta.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.q.matvec(&d)
    }

    fn curvature_apply(&self, _theta_star: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.q.matvec(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_blobs;
    use crate::linalg::Matrix;
    use crate::nn::{init_params, MlpConfig};
    use crate::train::{train, TrainConfig};
    use proptest::prelude::*;
    use rand::Rng;

    fn constants(m_loss: f64, m_h: f64) -> BoundConstants {
        BoundConstants {
            m_w: 1.0,
            m_x: 1.0,
            m_elem: 1.0,
            m_loss,
            m_h,
            hidden_dim: 1,
            num_layers: 1,
        }
    }

    fn random_losses(m: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| rng.random_range(0.0..3.0)).collect()
    }

    #[test]
    fn single_object_ledger_has_no_diffs() {
        let l = LossLedger::from_losses(vec![0.7]).unwrap();
        assert!(l.diffs().is_empty());
        assert_eq!(l.mean_at(1).unwrap(), 0.7);
        assert!(l.mean_at(2).is_err());
    }

    #[test]
    fn identical_objects_give_zero_diffs() {
        let d = synthetic_blobs(4, 3, 2, 0.2, 1).unwrap();
        let same = d.reordered(&[0; 25]).unwrap();
        let p = init_params(MlpConfig::new(3, 4, 2, 2, true).unwrap(), 3).unwrap();
        let l = build_ledger(&p, &same).unwrap();
        assert!(l.diffs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ledger_matches_naive_double_loop() {
        let losses = random_losses(50, 5);
        let l = LossLedger::from_losses(losses.clone()).unwrap();
        for k in 1..50 {
            let mean_k = losses[..k].iter().sum::<f64>() / k as f64;
            let mean_k1 = losses[..=k].iter().sum::<f64>() / (k + 1) as f64;
            assert!((l.diffs()[k - 1] - (mean_k1 - mean_k).abs()).abs() <= 1e-12);
        }
    }

    #[test]
    fn mean_loss_agrees_with_ledger() {
        let d = synthetic_blobs(40, 3, 3, 0.3, 2).unwrap();
        let p = init_params(MlpConfig::new(3, 5, 2, 3, true).unwrap(), 8).unwrap();
        let l = build_ledger(&p, &d).unwrap();
        for k in 1..=40 {
            assert!((nn::mean_loss(&p, &d, k).unwrap() - l.mean_at(k).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn full_mean_is_permutation_invariant() {
        let losses = random_losses(5000, 9);
        let base = *LossLedger::from_losses(losses.clone()).unwrap().prefix_means().last().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let mut shuffled = losses.clone();
            shuffled.shuffle(&mut rng);
            let m = *LossLedger::from_losses(shuffled).unwrap().prefix_means().last().unwrap();
            assert!((m - base).abs() <= 1e-12);
        }
    }

    #[test]
    fn lemma2_examples() {
        let c = constants(1.5, 40.0);
        assert_eq!(lemma2_bound(4, &c, 0.0), 2.0 * 1.5 / 5.0);
        let mut prev = f64::INFINITY;
        for k in 1..10_000 {
            let v = lemma2_bound(k, &c, 0.3);
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn lemma2_dominates_ledger_at_zero_radius() {
        let losses = random_losses(300, 3);
        let l = LossLedger::from_losses(losses).unwrap();
        let c = constants(l.max_loss(), 0.0);
        for (i, &d) in l.diffs().iter().enumerate() {
            assert!(d <= lemma2_bound(i + 1, &c, 0.0) + 1e-12);
        }
    }

    #[test]
    fn ema_of_constant_is_constant() {
        for &alpha in &[0.0, 0.5, 0.99] {
            assert!(ema(&[2.5; 100], alpha).iter().all(|&v| (v - 2.5).abs() < 1e-15));
        }
        let e = ema(&[1.0, 0.0, 0.0], 0.5);
        assert_eq!(e, vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn single_rep_without_smoothing_is_one_ledger() {
        let losses = random_losses(30, 4);
        let curve = averaged_curve_from_losses(&losses, 1, 0.0, 77).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        rng.set_stream(0);
        let mut order: Vec<usize> = (0..30).collect();
        order.shuffle(&mut rng);
        let ledger = LossLedger::from_losses(order.iter().map(|&i| losses[i]).collect()).unwrap();
        assert_eq!(curve.mean_abs_diff, ledger.diffs());
        assert_eq!(curve.ema, curve.mean_abs_diff);
        assert_eq!(curve.k, (1..30).collect::<Vec<_>>());
    }

    #[test]
    fn constant_losses_give_zero_curve() {
        let curve = averaged_curve_from_losses(&[0.4; 20], 7, 0.9, 1).unwrap();
        assert!(curve.mean_abs_diff.iter().chain(&curve.ema).all(|&v| v == 0.0));
    }

    #[test]
    fn curve_is_deterministic_and_seed_stable() {
        let losses = random_losses(200, 12);
        let a = averaged_curve_from_losses(&losses, 100, 0.99, 1).unwrap();
        assert_eq!(a, averaged_curve_from_losses(&losses, 100, 0.99, 1).unwrap());
        let b = averaged_curve_from_losses(&losses, 100, 0.99, 2).unwrap();
        assert_ne!(a.mean_abs_diff, b.mean_abs_diff);
        let mut outside = 0;
        for t in 0..a.len() {
            let se = (a.std_err[t].powi(2) + b.std_err[t].powi(2)).sqrt();
            if (a.mean_abs_diff[t] - b.mean_abs_diff[t]).abs() > 3.0 * se {
                outside += 1;
            }
        }
        // Three standard errors leave ~0.3% of points outside by chance.
        assert!(outside <= a.len() / 50, "{outside} of {} points outside", a.len());
    }

    #[test]
    fn curve_rejects_bad_arguments() {
        assert!(averaged_curve_from_losses(&[1.0, 2.0], 0, 0.5, 0).is_err());
        assert!(averaged_curve_from_losses(&[1.0, 2.0], 1, 1.0, 0).is_err());
        assert!(averaged_curve_from_losses(&[1.0], 1, 0.5, 0).is_err());
    }

    fn synthetic_curve(values: Vec<f64>) -> ConvergenceCurve {
        ConvergenceCurve {
            k: (1..=values.len()).collect(),
            std_err: vec![0.0; values.len()],
            ema: values.clone(),
            mean_abs_diff: values,
            alpha: 0.0,
            num_reps: 1,
            seed: 0,
        }
    }

    #[test]
    fn slope_of_power_law_and_constant() {
        let c = synthetic_curve((1..=500).map(|k| 3.7 / k as f64).collect());
        assert!((slope_fit(&c, 50, 499).unwrap().slope + 1.0).abs() <= 1e-6);
        let flat = synthetic_curve(vec![0.2; 100]);
        assert!(slope_fit(&flat, 10, 100).unwrap().slope.abs() <= 1e-12);
    }

    #[test]
    fn slope_fit_floors_zeros_and_needs_points() {
        let mut v: Vec<f64> = (1..=50).map(|k| 1.0 / k as f64).collect();
        v[20] = 0.0;
        let fit = slope_fit(&synthetic_curve(v), 1, 50).unwrap();
        assert_eq!(fit.floored, 1);
        let short = synthetic_curve(vec![1.0; 30]);
        assert!(matches!(slope_fit(&short, 20, 28), Err(Error::TooFewPoints { found: 9, .. })));
        assert!(slope_fit(&short, 5, 5).is_err());
        assert!(slope_fit(&short, 5, 31).is_err());
    }

    #[test]
    fn identity_holds_on_long_ledgers() {
        let l = LossLedger::from_losses(random_losses(10_000, 21)).unwrap();
        assert!(l.identity_residual() <= IDENTITY_TOL);
    }

    #[test]
    fn taylor_zero_radius_is_exact() {
        let d = synthetic_blobs(20, 3, 2, 0.2, 1).unwrap();
        let p = init_params(MlpConfig::new(3, 4, 2, 2, true).unwrap(), 3).unwrap();
        let r = taylor_check_mlp(&p, &d, 20, 0.0, 3, 5).unwrap();
        assert_eq!(r.max_abs_model_error, 0.0);
    }

    #[test]
    fn taylor_quadratic_surrogate_is_exact() {
        let q = Matrix::from_rows(&[&[2.0, 0.3, 0.0], &[0.3, 1.0, 0.1], &[0.0, 0.1, 0.5]]).unwrap();
        let obj = QuadraticObjective {
            q,
            center: vec![0.1, -0.2, 0.3],
        };
        for &r in &[1e-3, 0.5, 10.0] {
            let rep = taylor_check(&obj, &[0.1, -0.2, 0.3], r, 10, 4).unwrap();
            assert!(rep.max_abs_model_error <= 1e-10 * (1.0 + r * r));
            assert_eq!(rep.grad_norm, 0.0);
        }
        // Expansion away from the centre keeps the model exact.
        let rep = taylor_check(&obj, &[1.0, 1.0, -1.0], 2.0, 10, 4).unwrap();
        assert!(rep.max_abs_model_error <= 1e-10 * 4.0);
        assert!(rep.grad_norm > 0.0);
    }

    #[test]
    fn taylor_error_shrinks_with_radius_on_trained_net() {
        let d = synthetic_blobs(200, 4, 3, 0.3, 3).unwrap();
        let c = MlpConfig::new(4, 6, 2, 3, true).unwrap();
        let (p, _) = train(c, &TrainConfig { epochs: 5, seed: 1, ..TrainConfig::default() }, &d).unwrap();
        let mut errors = Vec::new();
        for &r in &[1e-2, 5e-3, 2.5e-3] {
            errors.push(taylor_check_mlp(&p, &d, 200, r, 20, 9).unwrap().max_abs_model_error);
        }
        for w in errors.windows(2) {
            assert!(w[0] >= 2.0 * w[1], "{errors:?}");
        }
    }

    proptest! {
        #[test]
        fn prefix_identity(losses in proptest::collection::vec(0.0f64..20.0, 1..400)) {
            let l = LossLedger::from_losses(losses).unwrap();
            prop_assert!(l.identity_residual() <= IDENTITY_TOL);
        }
    }
}
