use serde::{Deserialize, Serialize};

use super::head::LinearHead;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipMethod {
    React,
    Bats,
    None,
}

impl ClipMethod {
    pub(crate) fn code(self) -> u8 {
        match self {
            ClipMethod::None => 0,
            ClipMethod::React => 1,
            ClipMethod::Bats => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        [ClipMethod::None, ClipMethod::React, ClipMethod::Bats]
            .into_iter()
            .find(|m| m.code() == code)
    }
}

/// Which tail coordinates are rectified, and how.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub method: ClipMethod,
    /// Number of trailing post-BN coordinates clipped.
    pub d: usize,
    /// ReAct percentile in (0, 100].
    pub p: f64,
    /// BATS typical-set half-width, in units of `δ`.
    pub lambda: f64,
}

impl ClipConfig {
    pub fn none() -> Self {
        Self {
            method: ClipMethod::None,
            d: 0,
            p: 100.0,
            lambda: 1.0,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.method == ClipMethod::None {
            return Ok(());
        }
        if self.d == 0 || self.d > k {
            return Err(Error::config(format!("clip dimension d={} must be in 1..={k}", self.d)));
        }
        if self.method == ClipMethod::React && !(self.p > 0.0 && self.p <= 100.0) {
            return Err(Error::config(format!("percentile {} must be in (0, 100]", self.p)));
        }
        if self.method == ClipMethod::Bats && !(self.lambda > 0.0) {
            return Err(Error::config("BATS lambda must be positive"));
        }
        Ok(())
    }
}

/// Fitted clip parameters for the last `d` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum ClipState {
    None,
    React { threshold: f64 },
    Bats { mu: Vec<f64>, delta: Vec<f64>, lambda: f64 },
}

/// Nearest-rank `p`-th percentile: the smallest value with at least `p%` of
/// the data at or below it.
pub fn fit_react_threshold(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::usage("cannot fit a ReAct threshold on no values"));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::config(format!("percentile {p} must be in (0, 100]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("ReAct threshold needs finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((p / 100.0 * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(sorted[rank - 1])
}

/// `min(g, c)` element-wise.
pub fn clip_react(tail: &[f64], c: f64) -> Vec<f64> {
    tail.iter().map(|&v| v.min(c)).collect()
}

/// Snaps values outside `[μ−λδ, μ+λδ]` to the nearest boundary; values inside
/// pass through (they already are batch-normalized at this stage).
pub fn clip_bats(tail: &[f64], mu: &[f64], delta: &[f64], lambda: f64) -> Vec<f64> {
    tail.iter()
        .zip(mu)
        .zip(delta)
        .map(|((&g, &m), &d)| {
            let half = lambda * d.abs();
            if g - m >= half {
                m + half
            } else if g - m <= -half {
                m - half
            } else {
                g
            }
        })
        .collect()
}

/// Fits the clip state from training embeddings: ReAct pools the post-BN tail
/// values, BATS reads `μ, δ` off the head's BN shift and scale.
pub fn fit_clip(head: &LinearHead, embeddings: &Matrix, clip: &ClipConfig) -> Result<ClipState> {
    let k = head.dim();
    clip.validate(k)?;
    let tail = k - clip.d;
    match clip.method {
        ClipMethod::None => Ok(ClipState::None),
        ClipMethod::React => {
            if embeddings.cols() != k {
                return Err(Error::shape("embedding dimension does not match the head"));
            }
            let mut pooled = Vec::with_capacity(embeddings.rows() * clip.d);
            for row in embeddings.row_iter() {
                pooled.extend_from_slice(&head.batch_norm(row)[tail..]);
            }
            Ok(ClipState::React {
                threshold: fit_react_threshold(&pooled, clip.p)?,
            })
        }
        ClipMethod::Bats => Ok(ClipState::Bats {
            mu: head.bn_shift[tail..].to_vec(),
            delta: head.bn_scale[tail..].to_vec(),
            lambda: clip.lambda,
        }),
    }
}

/// Clips the last `d` coordinates of a post-BN vector in place.
pub(crate) fn apply_clip(y: &mut [f64], clip: &ClipConfig, state: &ClipState) -> Result<()> {
    if clip.method == ClipMethod::None {
        return Ok(());
    }
    clip.validate(y.len())?;
    let tail = y.len() - clip.d;
    let clipped = match (clip.method, state) {
        (ClipMethod::React, ClipState::React { threshold }) => clip_react(&y[tail..], *threshold),
        (ClipMethod::Bats, ClipState::Bats { mu, delta, lambda }) => {
            if mu.len() != clip.d || delta.len() != clip.d {
                return Err(Error::shape("BATS state does not match the clip dimension"));
            }
            clip_bats(&y[tail..], mu, delta, *lambda)
        }
        (method, _) => {
            return Err(Error::usage(format!("clip method {method:?} needs a fitted clip state")));
        }
    };
    y[tail..].copy_from_slice(&clipped);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::head::head_logits;

    #[test]
    fn react_threshold_is_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(fit_react_threshold(&v, 90.0).unwrap(), 90.0);
        assert_eq!(fit_react_threshold(&v, 100.0).unwrap(), 100.0);
        assert_eq!(fit_react_threshold(&[3.0, -1.0, 7.0], 100.0).unwrap(), 7.0);
        assert!(fit_react_threshold(&[], 50.0).is_err());
    }

    #[test]
    fn react_clip_examples() {
        assert_eq!(clip_react(&[0.5, 2.0, -1.0], 1.0), vec![0.5, 1.0, -1.0]);
        assert_eq!(clip_react(&[0.5, -2.0], 1.0), vec![0.5, -2.0]);
        let c = -1e300;
        assert_eq!(clip_react(&[0.5, 2.0, -1.0], c), vec![c; 3]);
    }

    #[test]
    fn bats_clip_examples() {
        assert_eq!(clip_bats(&[2.0, -3.0], &[0.0, 0.0], &[1.0, 1.0], 1.0), vec![1.0, -1.0]);
        assert_eq!(clip_bats(&[0.25], &[0.0], &[1.0], 1.0), vec![0.25]);
    }

    fn toy_head() -> LinearHead {
        let w = Matrix::from_rows(&[[1.0, -2.0, 0.5], [0.3, 1.0, -1.0]]).unwrap();
        let mut h = LinearHead::identity_bn(3, w, vec![0.0, 0.1]).unwrap();
        h.bn_scale = vec![1.5, 0.5, 2.0];
        h.bn_shift = vec![0.1, -0.2, 0.3];
        h
    }

    fn toy_data() -> Matrix {
        Matrix::from_rows(&[[0.5, 1.0, -2.0], [3.0, -1.0, 0.0], [-1.0, 2.0, 4.0], [0.0, 0.0, 1.0]]).unwrap()
    }

    #[test]
    fn react_at_full_percentile_is_a_no_op_on_fit_data() {
        let (head, x) = (toy_head(), toy_data());
        let cfg = ClipConfig {
            method: ClipMethod::React,
            d: 2,
            p: 100.0,
            lambda: 1.0,
        };
        let state = fit_clip(&head, &x, &cfg).unwrap();
        for row in x.row_iter() {
            let a = head_logits(&head, row, &cfg, &state).unwrap();
            let b = head_logits(&head, row, &ClipConfig::none(), &ClipState::None).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn bats_with_huge_lambda_is_a_no_op() {
        let (head, x) = (toy_head(), toy_data());
        let cfg = ClipConfig {
            method: ClipMethod::Bats,
            d: 3,
            p: 100.0,
            lambda: 1e9,
        };
        let state = fit_clip(&head, &x, &cfg).unwrap();
        for row in x.row_iter() {
            let a = head_logits(&head, row, &cfg, &state).unwrap();
            let b = head_logits(&head, row, &ClipConfig::none(), &ClipState::None).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn missing_state_is_an_error() {
        let head = toy_head();
        let cfg = ClipConfig {
            method: ClipMethod::React,
            d: 1,
            p: 90.0,
            lambda: 1.0,
        };
        assert!(head_logits(&head, &[0.0; 3], &cfg, &ClipState::None).is_err());
    }
}
