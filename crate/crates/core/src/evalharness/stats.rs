use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::subspace;

/// Equal-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins over `[min, max]` (the last bin is closed). A constant
/// input uses `[c − ½, c + ½]`.
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::config("histogram needs at least one bin"));
    }
    if values.is_empty() {
        return Err(Error::usage("histogram of no values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("histogram values must be finite"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);
    let mut counts = vec![0usize; bins];
    for &v in values {
        // consistent with the stored edges, not just the arithmetic
        let b = edges.partition_point(|e| *e <= v).saturating_sub(1).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

impl Histogram {
    /// `bin_left,bin_right,count` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        out
    }
}

/// Within-class vs cross-class cosine similarity of normalized gradients to
/// the class-mean gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineReport {
    /// Average cosine of each class's samples to their own class mean.
    pub per_class_within: Vec<f64>,
    /// Average over all samples of the cosine to their own class mean.
    pub within: f64,
    /// Average over all samples of the mean cosine to the other classes' means.
    pub cross: f64,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = linalg::norm2(a) * linalg::norm2(b);
    if d > 0.0 {
        linalg::dot(a, b) / d
    } else {
        0.0
    }
}

pub fn class_cosine_report(normalized: &Matrix, labels: &[usize], num_classes: usize) -> Result<CosineReport> {
    if num_classes < 2 {
        return Err(Error::usage("a cross-class baseline needs at least two classes"));
    }
    let means = subspace::class_means(normalized, labels, num_classes)?;
    let mut per_class = vec![0.0; num_classes];
    let mut counts = vec![0usize; num_classes];
    let (mut within, mut cross) = (0.0, 0.0);
    for (i, &y) in labels.iter().enumerate() {
        let g = normalized.row(i);
        let own = cosine(g, &means[y]);
        per_class[y] += own;
        counts[y] += 1;
        within += own;
        let others: f64 = (0..num_classes).filter(|&c| c != y).map(|c| cosine(g, &means[c])).sum();
        cross += others / (num_classes - 1) as f64;
    }
    let n = labels.len() as f64;
    per_class.iter_mut().zip(&counts).for_each(|(s, &c)| *s /= c as f64);
    Ok(CosineReport {
        per_class_within: per_class,
        within: within / n,
        cross: cross / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_examples() {
        let h = histogram(&[0.0, 1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(h.edges, vec![0.0, 1.5, 3.0]);
        assert_eq!(h.counts, vec![2, 2]);
        let h = histogram(&[4.0; 7], 5).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts.iter().sum::<usize>(), 7);
    }

    #[test]
    fn identical_class_gradients_have_unit_similarity() {
        let g = Matrix::from_rows(&[[1.0, 2.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 3.0], [0.0, 0.0, 3.0]]).unwrap();
        let r = class_cosine_report(&g, &[0, 0, 1, 1], 2).unwrap();
        assert!((r.within - 1.0).abs() < 1e-12);
        assert!(r.per_class_within.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(r.cross.abs() < 1e-10);
    }
}
