//! Mini-batch Adam on the mean cross-entropy.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{norm2, KahanSum};
use crate::math;
use crate::nn::{self, init_params, MlpConfig, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 10,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning rate must be finite and >= 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("batch size and epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps_adam > 0.0) {
            return Err(Error::InvalidArgument("Adam needs betas in [0, 1) and eps > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean loss over the dataset at initialization.
    pub initial_loss: f64,
    /// Mean loss over the dataset after each epoch.
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub final_accuracy: f64,
    /// `‖∇L_m(θ̂)‖₂` over the full dataset.
    pub grad_norm: f64,
}

/// Adam state with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, config: &TrainConfig) -> Self {
        Self {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps_adam,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(theta.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - math::powi(self.beta1, self.t);
        let c2 = 1.0 - math::powi(self.beta2, self.t);
        for ((w, g), (m, v)) in theta.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= self.lr * m_hat / (math::sqrt(v_hat) + self.eps);
        }
    }
}

fn full_loss(params: &MlpParams, dataset: &Dataset) -> Result<f64> {
    nn::mean_loss(params, dataset, dataset.len())
}

/// `∇L_m(θ)` over the whole dataset, summed in object order.
pub fn full_gradient(params: &MlpParams, dataset: &Dataset) -> Result<Vec<f64>> {
    nn::check_dataset(params, dataset)?;
    let mut g = vec![0.0; params.config().param_count()];
    let scale = 1.0 / dataset.len() as f64;
    for i in 0..dataset.len() {
        let trace = nn::forward_label(params, dataset.x(i), dataset.label(i))?;
        nn::accumulate_grad(params, &trace, scale, &mut g);
    }
    Ok(g)
}

/// Trains from the seeded initialization, reshuffling every epoch. The last
/// incomplete batch is kept.
pub fn train(model: MlpConfig, config: &TrainConfig, dataset: &Dataset) -> Result<(MlpParams, TrainReport)> {
    let params = init_params(model, config.seed)?;
    train_from(params, config, dataset)
}

/// [`train`] from given starting parameters.
pub fn train_from(mut params: MlpParams, config: &TrainConfig, dataset: &Dataset) -> Result<(MlpParams, TrainReport)> {
    config.validate()?;
    nn::check_dataset(&params, dataset)?;
    let dim = params.config().param_count();
    let mut theta = params.flatten();
    let mut adam = Adam::new(dim, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let initial_loss = full_loss(&params, dataset)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut grad = vec![0.0; dim];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = KahanSum::new();
            for &i in chunk {
                let trace = nn::forward_label(&params, dataset.x(i), dataset.label(i))?;
                batch_loss.add(trace.loss);
                nn::accumulate_grad(&params, &trace, scale, &mut grad);
            }
            if !batch_loss.value().is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, batch });
            }
            adam.step(&mut theta, &grad);
            params.assign(&theta)?;
        }
        let loss = full_loss(&params, dataset)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
            });
        }
        epoch_losses.push(loss);
    }

    let final_loss = *epoch_losses.last().expect("epochs >= 1");
    let report = TrainReport {
        initial_loss,
        final_accuracy: accuracy(&params, dataset)?,
        grad_norm: norm2(&full_gradient(&params, dataset)?),
        epoch_losses,
        final_loss,
    };
    Ok((params, report))
}

/// Fraction of objects whose arg-max logit (lowest index on ties) is the label.
pub fn accuracy(params: &MlpParams, dataset: &Dataset) -> Result<f64> {
    nn::check_dataset(params, dataset)?;
    let mut correct = 0usize;
    for i in 0..dataset.len() {
        let z = nn::logits(params, dataset.x(i))?;
        let mut best = 0;
        for (j, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = j;
            }
        }
        if best == dataset.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}
