//! Post-hoc OOD score functions on gradient embeddings.
//!
//! Higher scores mean "more in-distribution". The head-based scores (MSP,
//! Energy, and their ReAct/BATS clipped variants) run embeddings through an
//! auxiliary `BN → Clip → FC` head; Mahalanobis and KNN work on the embedding
//! geometry directly.

mod artifact;
mod clip;
mod head;
mod knn;
mod maha;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::par;

pub use artifact::{decode_detector, encode_detector, load_detector, save_detector, DETECTOR_MAGIC};
pub use clip::{clip_bats, clip_react, fit_clip, fit_react_threshold, ClipConfig, ClipMethod, ClipState};
pub use head::{head_accuracy, head_logits, train_head, HeadConfig, HeadOutcome, LinearHead};
pub use knn::{score_knn, KnnModel};
pub use maha::{fit_maha, score_maha, CovarianceKind, MahaModel};

pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Maximum softmax probability.
pub fn score_msp(logits: &[f64]) -> f64 {
    linalg::softmax(logits).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// `−T·log Σ exp(logits/T)`, max-shifted. This is the free energy itself,
/// which is *low* on confident (ID) inputs; detectors use its negation so
/// that their scores are higher for ID, see [`DetectorModel::score`].
pub fn score_energy(logits: &[f64], temperature: f64) -> f64 {
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    -temperature * linalg::log_sum_exp(&scaled)
}

/// Forward/backward ensemble `s_f + α·s_b`.
pub fn score_ensemble(s_forward: f64, s_backward: f64, alpha: f64) -> f64 {
    s_forward + alpha * s_backward
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Id,
    Ood,
}

/// ID iff `score ≥ λ`.
pub fn classify(score: f64, lambda: f64) -> Decision {
    if score >= lambda {
        Decision::Id
    } else {
        Decision::Ood
    }
}

/// The six score functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Msp,
    Energy,
    React,
    Bats,
    Maha,
    Knn,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 6] = [
        DetectorKind::Msp,
        DetectorKind::Energy,
        DetectorKind::React,
        DetectorKind::Bats,
        DetectorKind::Maha,
        DetectorKind::Knn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Msp => "msp",
            DetectorKind::Energy => "energy",
            DetectorKind::React => "react",
            DetectorKind::Bats => "bats",
            DetectorKind::Maha => "maha",
            DetectorKind::Knn => "knn",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            DetectorKind::Msp => 0,
            DetectorKind::Energy => 1,
            DetectorKind::React => 2,
            DetectorKind::Bats => 3,
            DetectorKind::Maha => 4,
            DetectorKind::Knn => 5,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    /// Whether the detector needs the auxiliary head.
    pub fn uses_head(self) -> bool {
        matches!(self, DetectorKind::Msp | DetectorKind::Energy | DetectorKind::React | DetectorKind::Bats)
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown detector {s:?} (expected msp, energy, react, bats, maha or knn)")))
    }
}

/// How the head's logits become a score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HeadScore {
    Msp,
    Energy { temperature: f64 },
}

/// A fitted detector, immutable after fitting.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorModel {
    Head {
        kind: DetectorKind,
        head: LinearHead,
        score: HeadScore,
        clip: ClipConfig,
        state: ClipState,
    },
    Maha(MahaModel),
    Knn(KnnModel),
}

/// Everything needed to fit any of the six detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub temperature: f64,
    /// Tail dimension count for ReAct/BATS.
    pub clip_dims: usize,
    /// ReAct percentile in (0, 100].
    pub percentile: f64,
    /// BATS typical-set width.
    pub bats_lambda: f64,
    pub knn_k: usize,
    pub knn_normalize: bool,
    pub ridge_scale: f64,
    pub covariance: CovarianceKind,
    pub head: HeadConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            clip_dims: 50,
            percentile: 70.0,
            bats_lambda: 0.1,
            knn_k: 10,
            knn_normalize: false,
            ridge_scale: maha::DEFAULT_RIDGE_SCALE,
            covariance: CovarianceKind::Pooled,
            head: HeadConfig::default(),
        }
    }
}

impl DetectorConfig {
    pub fn clip_for(&self, kind: DetectorKind) -> ClipConfig {
        let method = match kind {
            DetectorKind::React => ClipMethod::React,
            DetectorKind::Bats => ClipMethod::Bats,
            _ => ClipMethod::None,
        };
        ClipConfig {
            method,
            d: self.clip_dims,
            p: self.percentile,
            lambda: self.bats_lambda,
        }
    }
}

impl DetectorModel {
    /// Fits `kind` on training embeddings (`n × K`). Head-based kinds train a
    /// fresh head; use [`DetectorModel::from_head`] to share one.
    pub fn fit(
        kind: DetectorKind,
        embeddings: &Matrix,
        labels: &[usize],
        num_classes: usize,
        config: &DetectorConfig,
    ) -> Result<Self> {
        match kind {
            DetectorKind::Maha => Ok(DetectorModel::Maha(fit_maha(
                embeddings,
                labels,
                num_classes,
                config.ridge_scale,
                config.covariance,
            )?)),
            DetectorKind::Knn => Ok(DetectorModel::Knn(KnnModel::new(
                embeddings.clone(),
                config.knn_k,
                config.knn_normalize,
            )?)),
            _ => {
                let outcome = train_head(embeddings, labels, num_classes, &config.head)?;
                Self::from_head(kind, outcome.head, embeddings, config)
            }
        }
    }

    /// Wraps an already trained head, fitting the clip state on `embeddings`.
    pub fn from_head(kind: DetectorKind, head: LinearHead, embeddings: &Matrix, config: &DetectorConfig) -> Result<Self> {
        let score = match kind {
            DetectorKind::Msp => HeadScore::Msp,
            DetectorKind::Energy | DetectorKind::React | DetectorKind::Bats => {
                if !(config.temperature > 0.0) {
                    return Err(Error::config("temperature must be positive"));
                }
                HeadScore::Energy {
                    temperature: config.temperature,
                }
            }
            other => return Err(Error::usage(format!("{other} does not use a head"))),
        };
        let clip = config.clip_for(kind);
        let state = fit_clip(&head, embeddings, &clip)?;
        Ok(DetectorModel::Head {
            kind,
            head,
            score,
            clip,
            state,
        })
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            DetectorModel::Head { kind, .. } => *kind,
            DetectorModel::Maha(_) => DetectorKind::Maha,
            DetectorModel::Knn(_) => DetectorKind::Knn,
        }
    }

    /// Embedding dimension `K` the detector expects.
    pub fn dim(&self) -> usize {
        match self {
            DetectorModel::Head { head, .. } => head.dim(),
            DetectorModel::Maha(m) => m.dim(),
            DetectorModel::Knn(m) => m.dim(),
        }
    }

    /// Detector score for one embedding; higher means more ID-like for every
    /// kind (energy-based kinds report `T·log Σ exp(y/T)`).
    pub fn score(&self, g: &[f64]) -> Result<f64> {
        let s = match self {
            DetectorModel::Head {
                head,
                score,
                clip,
                state,
                ..
            } => {
                let logits = head_logits(head, g, clip, state)?;
                match score {
                    HeadScore::Msp => score_msp(&logits),
                    // oriented so that higher = more ID, like every other score
                    HeadScore::Energy { temperature } => -score_energy(&logits, *temperature),
                }
            }
            DetectorModel::Maha(m) => score_maha(m, g)?,
            DetectorModel::Knn(m) => score_knn(m, g)?,
        };
        if !s.is_finite() {
            return Err(Error::data(format!("{} produced a non-finite score", self.kind())));
        }
        Ok(s)
    }

    /// Scores every row, in parallel with order-preserving collection.
    pub fn score_rows(&self, embeddings: &Matrix) -> Result<Vec<f64>> {
        if embeddings.cols() != self.dim() {
            return Err(Error::shape(format!(
                "embeddings have dimension {}, detector expects {}",
                embeddings.cols(),
                self.dim()
            )));
        }
        let parts = par::map_chunks(embeddings.rows(), par::DEFAULT_CHUNK, |r| {
            r.map(|i| self.score(embeddings.row(i))).collect::<Result<Vec<_>>>()
        });
        let mut out = Vec::with_capacity(embeddings.rows());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msp_examples() {
        assert_eq!(score_msp(&[0.0, 0.0]), 0.5);
        let s = score_msp(&[10.0, -10.0]);
        assert!(s >= 1.0 - 1e-8 && s <= 1.0);
        assert!((s - 0.999_999_997_9).abs() < 1e-10);
        let a = [0.3, -1.2, 2.5];
        let b: Vec<f64> = a.iter().map(|v| v + 17.0).collect();
        assert!((score_msp(&a) - score_msp(&b)).abs() < 1e-12);
    }

    #[test]
    fn energy_examples() {
        assert!((score_energy(&[0.0, 0.0], 1.0) + 2f64.ln()).abs() < 1e-12);
        let a = [0.3, -1.2, 2.5];
        let b: Vec<f64> = a.iter().map(|v| v + 4.0).collect();
        assert!((score_energy(&b, 1.0) - (score_energy(&a, 1.0) - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn ensemble_examples() {
        assert_eq!(score_ensemble(0.7, 123.0, 0.0), 0.7);
        assert_eq!(score_ensemble(1.0, 2.0, 1.0), 3.0);
        let (a, b, c, d, al) = (0.5, -1.5, 2.0, 0.25, 0.75);
        let lhs = score_ensemble(a, b, al) + score_ensemble(c, d, al);
        assert!((lhs - score_ensemble(a + c, b + d, al)).abs() < 1e-15);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(0.9, 0.5), Decision::Id);
        assert_eq!(classify(0.5, 0.5), Decision::Id);
        assert_eq!(classify(0.5 - 1e-12, 0.5), Decision::Ood);
    }

    #[test]
    fn kind_codes_round_trip() {
        for k in DetectorKind::ALL {
            assert_eq!(DetectorKind::from_code(k.code()), Some(k));
            assert_eq!(k.as_str().parse::<DetectorKind>().unwrap(), k);
        }
        assert!("odin".parse::<DetectorKind>().is_err());
    }
}
