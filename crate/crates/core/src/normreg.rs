//! Batch normalization over `[n × d]` features and inverted dropout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::module::Module;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Inference,
}

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

/// Per-feature batch normalization with running statistics for inference.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
    /// `running ← momentum · running + (1 − momentum) · batch`.
    pub momentum: f64,
}

#[derive(Clone, Debug)]
pub struct BnCache {
    mode: Mode,
    x_hat: Tensor,
    inv_std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnGrads {
    pub x: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl BatchNorm {
    /// γ = 1, β = 0, running mean 0 and running variance 1.
    pub fn new(dim: usize) -> Self {
        Self::with_settings(dim, BN_EPSILON, BN_MOMENTUM)
    }

    pub fn with_settings(dim: usize, epsilon: f64, momentum: f64) -> Self {
        assert!(epsilon > 0.0, "epsilon must be positive");
        assert!(momentum > 0.0 && momentum < 1.0, "momentum must lie in (0, 1)");
        BatchNorm {
            gamma: Tensor::full(&[dim], 1.0),
            beta: Tensor::zeros(&[dim]),
            running_mean: Tensor::zeros(&[dim]),
            running_var: Tensor::full(&[dim], 1.0),
            epsilon,
            momentum,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        if x.ndim() != 2 || x.cols() != self.dim() {
            return Err(Error::shape("batchnorm", x.shape(), &[x.shape()[0], self.dim()]));
        }
        Ok((x.rows(), x.cols()))
    }

    /// Train mode normalizes with batch statistics and updates the running
    /// estimates; inference mode only reads the running estimates.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, BnCache)> {
        let (n, d) = self.check_input(x)?;
        let (mean, var) = match mode {
            Mode::Inference => (self.running_mean.data().to_vec(), self.running_var.data().to_vec()),
            Mode::Train => {
                if n < 2 {
                    return Err(Error::DegenerateBatch(n));
                }
                let mut mean = vec![0.0; d];
                for r in 0..n {
                    for (m, v) in mean.iter_mut().zip(x.row(r)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; d];
                for r in 0..n {
                    for j in 0..d {
                        let c = x.row(r)[j] - mean[j];
                        var[j] += c * c;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                let m = self.momentum;
                for j in 0..d {
                    let rm = &mut self.running_mean.data_mut()[j];
                    *rm = m * *rm + (1.0 - m) * mean[j];
                    let rv = &mut self.running_var.data_mut()[j];
                    *rv = m * *rv + (1.0 - m) * var[j];
                }
                (mean, var)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut x_hat = x.clone();
        let mut y = x.clone();
        for r in 0..n {
            for j in 0..d {
                let h = (x.row(r)[j] - mean[j]) * inv_std[j];
                x_hat.row_mut(r)[j] = h;
                y.row_mut(r)[j] = self.gamma.data()[j] * h + self.beta.data()[j];
            }
        }
        Ok((y, BnCache { mode, x_hat, inv_std }))
    }

    /// Inference-mode forward without touching any state.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let (n, d) = self.check_input(x)?;
        let mut y = x.clone();
        for r in 0..n {
            for j in 0..d {
                let inv = 1.0 / (self.running_var.data()[j] + self.epsilon).sqrt();
                y.row_mut(r)[j] =
                    self.gamma.data()[j] * (x.row(r)[j] - self.running_mean.data()[j]) * inv + self.beta.data()[j];
            }
        }
        Ok(y)
    }

    /// Exact gradients through the batch statistics. Requires a train-mode cache.
    pub fn backward(&self, cache: &BnCache, grad_y: &Tensor) -> Result<BnGrads> {
        if cache.mode != Mode::Train {
            return Err(Error::Contract("batchnorm backward needs a train-mode cache".into()));
        }
        if grad_y.shape() != cache.x_hat.shape() {
            return Err(Error::shape("batchnorm_backward", grad_y.shape(), cache.x_hat.shape()));
        }
        let (n, d) = (grad_y.rows(), grad_y.cols());
        let mut grad_gamma = vec![0.0; d];
        let mut grad_beta = vec![0.0; d];
        for r in 0..n {
            for j in 0..d {
                let g = grad_y.row(r)[j];
                grad_beta[j] += g;
                grad_gamma[j] += g * cache.x_hat.row(r)[j];
            }
        }
        // With g = γ·dy: dx = inv_std/n · (n·g − Σg − x̂·Σ(g·x̂)).
        let mut grad_x = grad_y.clone();
        let nf = n as f64;
        for j in 0..d {
            let gamma = self.gamma.data()[j];
            let sum_g = gamma * grad_beta[j];
            let sum_gx = gamma * grad_gamma[j];
            for r in 0..n {
                let g = gamma * grad_y.row(r)[j];
                grad_x.row_mut(r)[j] = cache.inv_std[j] / nf * (nf * g - sum_g - cache.x_hat.row(r)[j] * sum_gx);
            }
        }
        Ok(BnGrads {
            x: grad_x,
            gamma: Tensor::new(vec![d], grad_gamma)?,
            beta: Tensor::new(vec![d], grad_beta)?,
        })
    }

    /// Gradient container with the same layout as `self`.
    pub fn zeros_like(&self) -> Self {
        BatchNorm {
            gamma: self.gamma.zeros_like(),
            beta: self.beta.zeros_like(),
            running_mean: self.running_mean.zeros_like(),
            running_var: self.running_var.zeros_like(),
            epsilon: self.epsilon,
            momentum: self.momentum,
        }
    }
}

impl Module for BatchNorm {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("running_mean".into(), &self.running_mean),
            ("running_var".into(), &self.running_var),
        ]
    }

    fn state_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }
}

pub const KEEP_PROB: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    pub keep_prob: f64,
    pub mode: Mode,
}

impl DropoutConfig {
    pub fn new(keep_prob: f64, mode: Mode) -> Result<Self> {
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(Error::InvalidArgument(format!("keep_prob {keep_prob} outside (0, 1]")));
        }
        Ok(DropoutConfig { keep_prob, mode })
    }
}

/// Inverted dropout. Returns the output and, in train mode, the scaled mask
/// (entries `0` or `1/keep_prob`) for the backward pass.
pub fn dropout(x: &Tensor, cfg: &DropoutConfig, rng: &mut Rng) -> (Tensor, Option<Tensor>) {
    if cfg.mode == Mode::Inference {
        return (x.clone(), None);
    }
    if cfg.keep_prob >= 1.0 {
        return (x.clone(), Some(Tensor::full(x.shape(), 1.0)));
    }
    let scale = 1.0 / cfg.keep_prob;
    let mask = Tensor::from_fn(x.shape(), |_| if rng.uniform() < cfg.keep_prob { scale } else { 0.0 });
    let y = x.mul(&mask).expect("mask shaped like input");
    (y, Some(mask))
}

pub fn dropout_backward(grad_y: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
    match mask {
        None => Ok(grad_y.clone()),
        Some(m) => grad_y.mul(m),
    }
}
