use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward_into, trace, ModelSpec, ParamVector, SampleBatch};
use crate::error::{Error, Result};
use crate::linalg;

/// SGD-with-momentum recipe for the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub label_smoothing: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            momentum: 0.9,
            epochs: 50,
            batch_size: 128,
            seed: 0,
            label_smoothing: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ParamVector,
    pub train_accuracy: f64,
    pub final_loss: f64,
}

/// Trains with cross-entropy (optionally label-smoothed), shuffled
/// mini-batches and heavy-ball momentum. The returned parameters are snapped
/// to `f32` precision.
pub fn train_classifier(spec: &ModelSpec, data: &SampleBatch, config: &TrainConfig) -> Result<TrainOutcome> {
    let labels = data.require_labels()?;
    if config.epochs == 0 {
        return Err(Error::usage("training needs at least one epoch"));
    }
    if config.batch_size == 0 {
        return Err(Error::usage("batch size must be positive"));
    }
    if !(config.lr > 0.0) || !(0.0..1.0).contains(&config.momentum) {
        return Err(Error::config("lr must be positive and momentum in [0, 1)"));
    }
    if !(0.0..1.0).contains(&config.label_smoothing) {
        return Err(Error::config("label smoothing must be in [0, 1)"));
    }
    if data.is_empty() {
        return Err(Error::usage("training data is empty"));
    }
    spec.check_input_dim(data.dim())?;
    data.check_labels(spec.num_classes())?;

    let mut params = ParamVector::init_uniform(spec, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let c = spec.num_classes();
    let smooth = config.label_smoothing;
    let mut velocity = vec![0.0; spec.param_count()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut final_loss = 0.0;

    for _epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grad = vec![0.0; spec.param_count()];
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let tr = trace(spec, params.values(), data.input(i));
                let p = linalg::softmax(tr.logits());
                let lse = linalg::log_sum_exp(tr.logits());
                let seed: Vec<f64> = (0..c)
                    .map(|y| {
                        let target = smooth / c as f64 + if y == labels[i] { 1.0 - smooth } else { 0.0 };
                        epoch_loss -= target * (tr.logits()[y] - lse);
                        scale * (p[y] - target)
                    })
                    .collect();
                backward_into(spec, params.values(), &tr, &seed, &mut grad);
            }
            for ((theta, vel), g) in params.values_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *vel = config.momentum * *vel + g;
                *theta -= config.lr * *vel;
            }
        }
        final_loss = epoch_loss / data.len() as f64;
        if !final_loss.is_finite() {
            return Err(Error::data("training diverged (non-finite loss)"));
        }
    }
    params.snap_to_f32();
    let train_accuracy = accuracy(spec, &params, data)?;
    Ok(TrainOutcome {
        params,
        train_accuracy,
        final_loss,
    })
}

/// Arg-max class per sample.
pub fn predict(spec: &ModelSpec, params: &ParamVector, batch: &SampleBatch) -> Result<Vec<usize>> {
    let logits = super::forward(spec, params, batch)?;
    Ok(logits.row_iter().map(linalg::argmax).collect())
}

pub fn accuracy(spec: &ModelSpec, params: &ParamVector, batch: &SampleBatch) -> Result<f64> {
    let labels = batch.require_labels()?;
    let pred = predict(spec, params, batch)?;
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn blobs() -> SampleBatch {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let t = i as f64 * 0.1;
            rows.push([2.0 + t.sin() * 0.3, t.cos() * 0.3]);
            labels.push(0);
            rows.push([-2.0 + t.cos() * 0.3, t.sin() * 0.3]);
            labels.push(1);
        }
        SampleBatch::new(Matrix::from_rows(&rows).unwrap(), Some(labels)).unwrap()
    }

    #[test]
    fn zero_epochs_is_a_usage_error() {
        let spec = ModelSpec::mlp(&[2, 2]).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train_classifier(&spec, &blobs(), &cfg), Err(Error::Usage(_))));
    }

    #[test]
    fn unlabeled_data_is_a_usage_error() {
        let spec = ModelSpec::mlp(&[2, 2]).unwrap();
        let data = SampleBatch::unlabeled(blobs().inputs().clone()).unwrap();
        assert!(matches!(
            train_classifier(&spec, &data, &TrainConfig::default()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let spec = ModelSpec::mlp(&[2, 6, 2]).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 16,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = train_classifier(&spec, &blobs(), &cfg).unwrap();
        let b = train_classifier(&spec, &blobs(), &cfg).unwrap();
        let bits = |p: &ParamVector| p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.params), bits(&b.params));
        assert!(a.params.values().iter().all(|v| (*v as f32) as f64 == *v));
    }
}
