use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::clip::{apply_clip, ClipConfig, ClipState};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;

/// Auxiliary `BN → FC` classifier on `K`-dimensional embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub bn_mean: Vec<f64>,
    pub bn_var: Vec<f64>,
    pub bn_scale: Vec<f64>,
    pub bn_shift: Vec<f64>,
    /// `C × K`
    pub fc_weight: Matrix,
    pub fc_bias: Vec<f64>,
    pub bn_epsilon: f64,
}

impl LinearHead {
    /// Head whose BN is the identity up to ε (zero mean, unit variance, unit
    /// scale, zero shift) in front of the given FC layer.
    pub fn identity_bn(k: usize, fc_weight: Matrix, fc_bias: Vec<f64>) -> Result<Self> {
        let head = Self {
            bn_mean: vec![0.0; k],
            bn_var: vec![1.0; k],
            bn_scale: vec![1.0; k],
            bn_shift: vec![0.0; k],
            fc_weight,
            fc_bias,
            bn_epsilon: BN_EPSILON,
        };
        head.validate()?;
        Ok(head)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.bn_mean.len();
        let c = self.fc_bias.len();
        if self.bn_var.len() != k || self.bn_scale.len() != k || self.bn_shift.len() != k {
            return Err(Error::shape("batch-norm vectors have inconsistent lengths"));
        }
        if self.fc_weight.rows() != c || self.fc_weight.cols() != k {
            return Err(Error::shape(format!(
                "fc weight is {}x{}, expected {c}x{k}",
                self.fc_weight.rows(),
                self.fc_weight.cols()
            )));
        }
        if self.bn_var.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::data("batch-norm running variance must be non-negative"));
        }
        if !(self.bn_epsilon > 0.0) {
            return Err(Error::data("batch-norm epsilon must be positive"));
        }
        let all = [&self.bn_mean, &self.bn_var, &self.bn_scale, &self.bn_shift, &self.fc_bias];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) || !self.fc_weight.is_finite() {
            return Err(Error::data("head parameters must be finite"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bn_mean.len()
    }

    pub fn num_classes(&self) -> usize {
        self.fc_bias.len()
    }

    /// Inference-mode batch norm with the frozen running statistics.
    pub fn batch_norm(&self, g: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|j| {
                let xhat = (g[j] - self.bn_mean[j]) / (self.bn_var[j] + self.bn_epsilon).sqrt();
                self.bn_scale[j] * xhat + self.bn_shift[j]
            })
            .collect()
    }

    fn fc(&self, y: &[f64]) -> Vec<f64> {
        (0..self.num_classes())
            .map(|c| linalg::dot(self.fc_weight.row(c), y) + self.fc_bias[c])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            batch_size: 512,
            epochs: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutcome {
    pub head: LinearHead,
    pub train_accuracy: f64,
}

/// Trains the head with cross-entropy and mini-batch SGD (heavy-ball
/// momentum). Batch norm normalises with batch statistics during training and
/// tracks running statistics, which are frozen afterwards.
pub fn train_head(embeddings: &Matrix, labels: &[usize], num_classes: usize, config: &HeadConfig) -> Result<HeadOutcome> {
    let (n, k) = (embeddings.rows(), embeddings.cols());
    if config.epochs == 0 {
        return Err(Error::usage("head training needs at least one epoch"));
    }
    if config.batch_size == 0 {
        return Err(Error::usage("batch size must be positive"));
    }
    if !(config.lr > 0.0) || !(0.0..1.0).contains(&config.momentum) {
        return Err(Error::config("lr must be positive and momentum in [0, 1)"));
    }
    if n == 0 || k == 0 {
        return Err(Error::usage("head training needs a non-empty embedding matrix"));
    }
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} embeddings", labels.len())));
    }
    if num_classes < 2 {
        return Err(Error::config("the head needs at least two classes"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::data(format!("label {bad} out of range for {num_classes} classes")));
    }
    if !embeddings.is_finite() {
        return Err(Error::data("embeddings must be finite"));
    }

    let c = num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 1.0 / (k as f64).sqrt();
    let mut w = Matrix::zeros(c, k);
    w.as_mut_slice().iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
    let b: Vec<f64> = (0..c).map(|_| rng.gen_range(-bound..bound)).collect();
    let mut head = LinearHead::identity_bn(k, w, b)?;

    // velocity over [W, b, scale, shift]
    let mut vel_w = vec![0.0; c * k];
    let mut vel_b = vec![0.0; c];
    let mut vel_scale = vec![0.0; k];
    let mut vel_shift = vec![0.0; k];
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let m = batch.len() as f64;
            let mut mu = vec![0.0; k];
            for &i in batch {
                linalg::axpy(1.0 / m, embeddings.row(i), &mut mu);
            }
            let mut var = vec![0.0; k];
            for &i in batch {
                for ((v, x), u) in var.iter_mut().zip(embeddings.row(i)).zip(&mu) {
                    *v += (x - u) * (x - u) / m;
                }
            }
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + head.bn_epsilon).sqrt()).collect();

            let mut g_w = vec![0.0; c * k];
            let mut g_b = vec![0.0; c];
            let mut g_scale = vec![0.0; k];
            let mut g_shift = vec![0.0; k];
            for &i in batch {
                let x = embeddings.row(i);
                let xhat: Vec<f64> = (0..k).map(|j| (x[j] - mu[j]) * inv_std[j]).collect();
                let y: Vec<f64> = (0..k).map(|j| head.bn_scale[j] * xhat[j] + head.bn_shift[j]).collect();
                let mut dl = linalg::softmax(&head.fc(&y));
                dl[labels[i]] -= 1.0;
                dl.iter_mut().for_each(|d| *d /= m);
                let mut dy = vec![0.0; k];
                for (cl, &d) in dl.iter().enumerate() {
                    linalg::axpy(d, &y, &mut g_w[cl * k..(cl + 1) * k]);
                    g_b[cl] += d;
                    linalg::axpy(d, head.fc_weight.row(cl), &mut dy);
                }
                for j in 0..k {
                    g_scale[j] += dy[j] * xhat[j];
                    g_shift[j] += dy[j];
                }
            }
            let step = |theta: &mut [f64], vel: &mut [f64], grad: &[f64]| {
                for ((t, v), g) in theta.iter_mut().zip(vel.iter_mut()).zip(grad) {
                    *v = config.momentum * *v + g;
                    *t -= config.lr * *v;
                }
            };
            step(head.fc_weight.as_mut_slice(), &mut vel_w, &g_w);
            step(&mut head.fc_bias, &mut vel_b, &g_b);
            step(&mut head.bn_scale, &mut vel_scale, &g_scale);
            step(&mut head.bn_shift, &mut vel_shift, &g_shift);

            // running statistics use the unbiased batch variance
            let unbias = if batch.len() > 1 { m / (m - 1.0) } else { 1.0 };
            for j in 0..k {
                head.bn_mean[j] = (1.0 - BN_MOMENTUM) * head.bn_mean[j] + BN_MOMENTUM * mu[j];
                head.bn_var[j] = (1.0 - BN_MOMENTUM) * head.bn_var[j] + BN_MOMENTUM * var[j] * unbias;
            }
        }
    }
    head.validate()
        .map_err(|e| Error::data(format!("head training diverged: {e}")))?;
    let train_accuracy = head_accuracy(&head, embeddings, labels)?;
    Ok(HeadOutcome { head, train_accuracy })
}

/// `FC(Clip(BN(g)))`, clipping only the last `d` post-BN coordinates.
pub fn head_logits(head: &LinearHead, g: &[f64], clip: &ClipConfig, state: &ClipState) -> Result<Vec<f64>> {
    if g.len() != head.dim() {
        return Err(Error::shape(format!(
            "embedding has length {}, head expects {}",
            g.len(),
            head.dim()
        )));
    }
    let mut y = head.batch_norm(g);
    apply_clip(&mut y, clip, state)?;
    Ok(head.fc(&y))
}

/// Arg-max accuracy of the unclipped head.
pub fn head_accuracy(head: &LinearHead, embeddings: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != embeddings.rows() {
        return Err(Error::shape("label count does not match embedding rows"));
    }
    if embeddings.rows() == 0 {
        return Err(Error::usage("accuracy of an empty set"));
    }
    let none = ClipConfig::none();
    let mut correct = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        let logits = head_logits(head, embeddings.row(i), &none, &ClipState::None)?;
        correct += usize::from(linalg::argmax(&logits) == y);
    }
    Ok(correct as f64 / labels.len() as f64)
}
