use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky, Matrix};

pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;
/// Absolute ridge floor, so a zero-scatter covariance stays positive definite.
pub const RIDGE_FLOOR: f64 = 1e-12;

/// Which covariance the shared `Σ̂` estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    /// Within-class scatter pooled over all classes.
    Pooled,
    /// Scatter around the global mean.
    Global,
}

impl CovarianceKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            CovarianceKind::Pooled => 0,
            CovarianceKind::Global => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(CovarianceKind::Pooled),
            1 => Some(CovarianceKind::Global),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MahaModel {
    /// `C × K`
    pub class_means: Matrix,
    /// `K × K`, ridge included.
    pub shared_cov: Matrix,
    pub ridge: f64,
    pub covariance: CovarianceKind,
    factor: Cholesky,
}

impl MahaModel {
    pub fn new(class_means: Matrix, shared_cov: Matrix, ridge: f64, covariance: CovarianceKind) -> Result<Self> {
        let k = class_means.cols();
        if shared_cov.rows() != k || shared_cov.cols() != k {
            return Err(Error::shape("covariance does not match the class-mean dimension"));
        }
        for i in 0..k {
            for j in 0..i {
                if (shared_cov.get(i, j) - shared_cov.get(j, i)).abs() > 1e-10 {
                    return Err(Error::data("shared covariance is not symmetric"));
                }
            }
        }
        if !class_means.is_finite() || !shared_cov.is_finite() {
            return Err(Error::data("Mahalanobis parameters must be finite"));
        }
        let factor = Cholesky::factor(&shared_cov)?;
        Ok(Self {
            class_means,
            shared_cov,
            ridge,
            covariance,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.class_means.cols()
    }
}

/// Class means plus one shared ridge-regularized covariance.
pub fn fit_maha(
    embeddings: &Matrix,
    labels: &[usize],
    num_classes: usize,
    ridge_scale: f64,
    covariance: CovarianceKind,
) -> Result<MahaModel> {
    let (n, k) = (embeddings.rows(), embeddings.cols());
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} embeddings", labels.len())));
    }
    if !(ridge_scale >= 0.0) {
        return Err(Error::config("ridge scale must be non-negative"));
    }
    let mut counts = vec![0usize; num_classes];
    for &y in labels {
        if y >= num_classes {
            return Err(Error::data(format!("label {y} out of range for {num_classes} classes")));
        }
        counts[y] += 1;
    }
    if let Some(c) = counts.iter().position(|&m| m < 2) {
        return Err(Error::usage(format!(
            "class {c} has {} samples; Mahalanobis needs at least 2 per class",
            counts[c]
        )));
    }
    let mut means = Matrix::zeros(num_classes, k);
    for (i, &y) in labels.iter().enumerate() {
        linalg::axpy(1.0, embeddings.row(i), means.row_mut(y));
    }
    for (c, &m) in counts.iter().enumerate() {
        means.row_mut(c).iter_mut().for_each(|v| *v /= m as f64);
    }
    let global: Vec<f64> = {
        let mut g = vec![0.0; k];
        for row in embeddings.row_iter() {
            linalg::axpy(1.0 / n as f64, row, &mut g);
        }
        g
    };
    let mut cov = Matrix::zeros(k, k);
    let mut centered = vec![0.0; k];
    for (i, &y) in labels.iter().enumerate() {
        let center = match covariance {
            CovarianceKind::Pooled => means.row(y),
            CovarianceKind::Global => &global[..],
        };
        for ((c, x), m) in centered.iter_mut().zip(embeddings.row(i)).zip(center) {
            *c = x - m;
        }
        for a in 0..k {
            if centered[a] != 0.0 {
                linalg::axpy(centered[a] / n as f64, &centered, cov.row_mut(a));
            }
        }
    }
    // exact symmetry
    for a in 0..k {
        for b in 0..a {
            let v = 0.5 * (cov.get(a, b) + cov.get(b, a));
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    let trace: f64 = (0..k).map(|a| cov.get(a, a)).sum();
    let ridge = (ridge_scale * trace / k as f64).max(RIDGE_FLOOR);
    for a in 0..k {
        cov.set(a, a, cov.get(a, a) + ridge);
    }
    MahaModel::new(means, cov, ridge, covariance)
}

/// `max_c −(g−μ_c)ᵀ Σ̂⁻¹ (g−μ_c)` through the Cholesky factor.
pub fn score_maha(model: &MahaModel, g: &[f64]) -> Result<f64> {
    if g.len() != model.dim() {
        return Err(Error::shape(format!(
            "embedding has length {}, model expects {}",
            g.len(),
            model.dim()
        )));
    }
    let mut best = f64::NEG_INFINITY;
    let mut diff = vec![0.0; g.len()];
    for mean in model.class_means.row_iter() {
        for ((d, x), m) in diff.iter_mut().zip(g).zip(mean) {
            *d = x - m;
        }
        best = best.max(-model.factor.inverse_quadratic_form(&diff));
    }
    Ok(best)
}
