//! Label-free energy gradients and their training-set normalization.
//!
//! A raw gradient is `∇θE(x;θ)`. Normalization subtracts the training mean
//! `M` and divides each coordinate by `sqrt(var + ε)`, where `var` is the
//! population variance of the centered training gradients.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::micronet::{self, ModelSpec, ParamVector, SampleBatch};
use crate::par;

pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Training-set gradient mean and diagonal variance.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub var_diag: Vec<f64>,
    pub epsilon: f64,
    pub n_fit: usize,
}

impl NormStats {
    /// Validates the stored invariants.
    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.var_diag.len() {
            return Err(Error::shape("mean and variance lengths differ"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::data("epsilon must be positive"));
        }
        if self.n_fit < 2 {
            return Err(Error::data("normalization needs at least two fit samples"));
        }
        if self.var_diag.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::data("variance entries must be finite and non-negative"));
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("mean entries must be finite"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `1 / sqrt(var + ε)` per coordinate.
    pub fn inverse_scale(&self) -> Vec<f64> {
        self.var_diag
            .iter()
            .map(|v| 1.0 / (v + self.epsilon).sqrt())
            .collect()
    }

    /// Mean squared norm of the normalized fit-set gradients,
    /// `Σⱼ varⱼ / (varⱼ + ε)`, exact from the stored moments.
    pub fn normalized_mean_square(&self) -> f64 {
        self.var_diag.iter().map(|v| v / (v + self.epsilon)).sum()
    }

    /// Moments of the rows of an explicit gradient matrix.
    pub fn from_gradients(grads: &Matrix, epsilon: f64) -> Result<Self> {
        let n = grads.rows();
        if n < 2 {
            return Err(Error::usage(format!("normalization needs at least 2 samples, got {n}")));
        }
        let dim = grads.cols();
        let partials = par::map_chunks(n, par::DEFAULT_CHUNK, |r| {
            let mut s = vec![0.0; dim];
            for i in r {
                linalg::axpy(1.0, grads.row(i), &mut s);
            }
            s
        });
        let mut mean = par::sum_in_order(partials, dim);
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let partials = par::map_chunks(n, par::DEFAULT_CHUNK, |r| {
            let mut s = vec![0.0; dim];
            for i in r {
                for ((acc, g), m) in s.iter_mut().zip(grads.row(i)).zip(&mean) {
                    *acc += (g - m) * (g - m);
                }
            }
            s
        });
        let mut var_diag = par::sum_in_order(partials, dim);
        var_diag.iter_mut().for_each(|v| *v /= n as f64);
        let stats = Self {
            mean,
            var_diag,
            epsilon,
            n_fit: n,
        };
        stats.validate()?;
        Ok(stats)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawGradient(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGradient(pub Vec<f64>);

/// `E = −log Σ exp(logits)`, max-shifted.
pub fn energy_from_logits(logits: &[f64]) -> f64 {
    -linalg::log_sum_exp(logits)
}

/// Label-free energy `E(x;θ)` of one input.
pub fn energy(spec: &ModelSpec, params: &ParamVector, x: &[f64]) -> Result<f64> {
    let batch = SampleBatch::unlabeled(Matrix::from_vec(1, x.len(), x.to_vec())?)?;
    let logits = micronet::forward(spec, params, &batch)?;
    Ok(energy_from_logits(logits.row(0)))
}

pub fn embed_raw(spec: &ModelSpec, params: &ParamVector, x: &[f64]) -> Result<RawGradient> {
    micronet::per_sample_energy_gradient(spec, params, x).map(RawGradient)
}

/// Raw gradients of a whole batch, one row per sample.
pub fn embed_raw_batch(spec: &ModelSpec, params: &ParamVector, batch: &SampleBatch) -> Result<Matrix> {
    micronet::per_sample_energy_gradients(spec, params, batch)
}

/// Fits `M` and `diag(I)` on training data with the default ε.
pub fn fit_norm_stats(spec: &ModelSpec, params: &ParamVector, train: &SampleBatch) -> Result<NormStats> {
    fit_norm_stats_with(spec, params, train, DEFAULT_EPSILON, par::DEFAULT_CHUNK)
}

/// Streaming two-pass fit: one sweep for the mean, a second for the centered
/// second moment. Gradients are recomputed per sweep instead of stored.
pub fn fit_norm_stats_with(
    spec: &ModelSpec,
    params: &ParamVector,
    train: &SampleBatch,
    epsilon: f64,
    chunk: usize,
) -> Result<NormStats> {
    let n = train.len();
    if n < 2 {
        return Err(Error::usage(format!("normalization needs at least 2 samples, got {n}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::config("epsilon must be positive"));
    }
    // shape check once up front
    micronet::per_sample_energy_gradient(spec, params, train.input(0))?;
    let dim = spec.param_count();
    let theta = params.values();
    let partials = par::map_chunks(n, chunk, |r| {
        let mut s = vec![0.0; dim];
        for i in r {
            let g = micronet::energy_gradient_unchecked(spec, theta, train.input(i));
            linalg::axpy(1.0, &g, &mut s);
        }
        s
    });
    let mut mean = par::sum_in_order(partials, dim);
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let partials = par::map_chunks(n, chunk, |r| {
        let mut s = vec![0.0; dim];
        for i in r {
            let g = micronet::energy_gradient_unchecked(spec, theta, train.input(i));
            for ((acc, g), m) in s.iter_mut().zip(&g).zip(&mean) {
                *acc += (g - m) * (g - m);
            }
        }
        s
    });
    let mut var_diag = par::sum_in_order(partials, dim);
    var_diag.iter_mut().for_each(|v| *v /= n as f64);
    let stats = NormStats {
        mean,
        var_diag,
        epsilon,
        n_fit: n,
    };
    stats.validate()?;
    Ok(stats)
}

/// `(raw − M) / sqrt(var + ε)`.
pub fn normalize(raw: &RawGradient, stats: &NormStats) -> Result<NormalizedGradient> {
    if raw.0.len() != stats.dim() {
        return Err(Error::shape(format!(
            "gradient has length {}, statistics cover {}",
            raw.0.len(),
            stats.dim()
        )));
    }
    Ok(NormalizedGradient(normalize_slice(&raw.0, stats)))
}

fn normalize_slice(raw: &[f64], stats: &NormStats) -> Vec<f64> {
    raw.iter()
        .zip(&stats.mean)
        .zip(&stats.var_diag)
        .map(|((g, m), v)| (g - m) / (v + stats.epsilon).sqrt())
        .collect()
}

/// Normalized gradients of a batch, `n × |θ|`.
pub fn normalized_gradients(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: &SampleBatch,
    stats: &NormStats,
) -> Result<Matrix> {
    if stats.dim() != spec.param_count() {
        return Err(Error::shape("normalization statistics do not match the model"));
    }
    let mut raw = embed_raw_batch(spec, params, batch)?;
    for i in 0..raw.rows() {
        let row = normalize_slice(raw.row(i), stats);
        raw.row_mut(i).copy_from_slice(&row);
    }
    Ok(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_of_known_logits() {
        assert!((energy_from_logits(&[0.0, 0.0]) + 2f64.ln()).abs() < 1e-15);
        assert!((energy_from_logits(&[1.0, 1.0, 1.0]) + 1.0 + 3f64.ln()).abs() < 1e-15);
        let e = energy_from_logits(&[1000.0, 0.0]);
        assert!(e.is_finite());
        assert_eq!(e, -1000.0);
    }

    #[test]
    fn duplicated_sample_has_zero_variance() {
        let g = vec![0.5, -1.0, 2.0];
        let grads = Matrix::from_rows(&[g.clone(), g.clone(), g.clone()]).unwrap();
        let s = NormStats::from_gradients(&grads, DEFAULT_EPSILON).unwrap();
        assert_eq!(s.mean, g);
        assert_eq!(s.var_diag, vec![0.0; 3]);
    }

    #[test]
    fn symmetric_pair_gives_squared_variance() {
        let g = vec![0.5, -1.0, 2.0];
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let s = NormStats::from_gradients(&Matrix::from_rows(&[g.clone(), neg]).unwrap(), 1e-12).unwrap();
        assert_eq!(s.mean, vec![0.0; 3]);
        assert_eq!(s.var_diag, g.iter().map(|v| v * v).collect::<Vec<_>>());
    }

    #[test]
    fn fewer_than_two_samples_is_rejected() {
        let grads = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(
            NormStats::from_gradients(&grads, 1e-12),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn normalize_centers_and_scales() {
        let stats = NormStats {
            mean: vec![1.0, 2.0],
            var_diag: vec![0.0, 0.0],
            epsilon: 1e-12,
            n_fit: 2,
        };
        let z = normalize(&RawGradient(vec![1.0, 2.0]), &stats).unwrap();
        assert_eq!(z.0, vec![0.0, 0.0]);
        let out = normalize(&RawGradient(vec![2.0, 4.0]), &stats).unwrap();
        assert!((out.0[0] - 1e6).abs() < 1e-6 && (out.0[1] - 2e6).abs() < 1e-6);
        assert!(normalize(&RawGradient(vec![1.0]), &stats).is_err());
    }
}
