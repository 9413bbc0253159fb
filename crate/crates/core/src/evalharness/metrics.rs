use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TPR_TARGET: f64 = 0.95;

fn check_stream(name: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::usage(format!("{name} scores are empty")));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::data(format!("{name} score {i} is not finite")));
    }
    Ok(())
}

/// Threshold keeping at least `tpr_target` of ID scores at or above it: the
/// `floor(n·(1−t))`-th smallest ID score, no interpolation.
pub fn calibrate_lambda(id_scores: &[f64], tpr_target: f64) -> Result<f64> {
    check_stream("ID", id_scores)?;
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(Error::config(format!("TPR target {tpr_target} must be in (0, 1]")));
    }
    let mut sorted = id_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // the small slack absorbs rounding in n·(1−t), e.g. 100·0.05
    let idx = ((n as f64 * (1.0 - tpr_target)) + 1e-9).floor() as usize;
    Ok(sorted[idx.min(n - 1)])
}

/// Fraction of OOD scores accepted as ID at the 95%-TPR threshold.
pub fn fpr95(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    fpr_at(id_scores, ood_scores, DEFAULT_TPR_TARGET)
}

pub fn fpr_at(id_scores: &[f64], ood_scores: &[f64], tpr_target: f64) -> Result<f64> {
    check_stream("OOD", ood_scores)?;
    let lambda = calibrate_lambda(id_scores, tpr_target)?;
    Ok(ood_scores.iter().filter(|&&s| s >= lambda).count() as f64 / ood_scores.len() as f64)
}

/// Mann–Whitney AUROC `P(id > ood) + ½·P(id = ood)` via the rank sum with
/// average ranks for ties. Ranks are kept doubled so everything stays integer
/// until the final division.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_stream("ID", id_scores)?;
    check_stream("OOD", ood_scores)?;
    let (n_id, n_ood) = (id_scores.len() as u128, ood_scores.len() as u128);
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < all.len() {
        let mut end = start + 1;
        while end < all.len() && all[end].0 == all[start].0 {
            end += 1;
        }
        // ranks start+1..=end, average doubled = start + 1 + end
        let ids = all[start..end].iter().filter(|e| e.1).count() as u128;
        doubled_rank_sum += ids * (start as u128 + 1 + end as u128);
        start = end;
    }
    let doubled_u = doubled_rank_sum - n_id * (n_id + 1);
    Ok(doubled_u as f64 / (2 * n_id * n_ood) as f64)
}

/// FPR95 and AUROC of one OOD stream against the ID stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fpr95: f64,
    pub auroc: f64,
}

pub fn metrics(id_scores: &[f64], ood_scores: &[f64], tpr_target: f64) -> Result<Metrics> {
    Ok(Metrics {
        fpr95: fpr_at(id_scores, ood_scores, tpr_target)?,
        auroc: auroc(id_scores, ood_scores)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_to(n: u32) -> Vec<f64> {
        (1..=n).map(f64::from).collect()
    }

    #[test]
    fn lambda_on_integers() {
        let id = one_to(100);
        let l = calibrate_lambda(&id, 0.95).unwrap();
        assert_eq!(l, 6.0);
        assert_eq!(id.iter().filter(|&&s| s >= l).count(), 95);
        assert_eq!(calibrate_lambda(&[2.5; 30], 0.95).unwrap(), 2.5);
        assert!(calibrate_lambda(&[], 0.95).is_err());
    }

    #[test]
    fn fpr_examples() {
        assert_eq!(fpr95(&one_to(100), &[0.0, 10.0]).unwrap(), 0.5);
        assert_eq!(fpr95(&one_to(100), &[-1.0, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(auroc(&[1.0], &[1.0]).unwrap(), 0.5);
        assert_eq!(auroc(&[1.0, 3.0], &[2.0, 4.0]).unwrap(), 0.25);
        assert!(auroc(&[], &[1.0]).is_err());
    }
}
