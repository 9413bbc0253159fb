use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Brute-force k-th nearest neighbour over a bank of training embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    bank: Matrix,
    k: usize,
    normalize: bool,
}

impl KnnModel {
    /// With `normalize`, bank rows and queries are scaled to unit length
    /// before measuring distance.
    pub fn new(bank: Matrix, k: usize, normalize: bool) -> Result<Self> {
        if k == 0 || k > bank.rows() {
            return Err(Error::config(format!(
                "k={k} must be in 1..={} (bank size)",
                bank.rows()
            )));
        }
        if !bank.is_finite() {
            return Err(Error::data("KNN bank must be finite"));
        }
        let bank = if normalize {
            let mut b = bank;
            for i in 0..b.rows() {
                unit(b.row_mut(i));
            }
            b
        } else {
            bank
        };
        Ok(Self { bank, k, normalize })
    }

    /// Rebuilds a model whose bank is already in its stored form.
    pub(crate) fn from_stored(bank: Matrix, k: usize, normalize: bool) -> Result<Self> {
        if k == 0 || k > bank.rows() || !bank.is_finite() {
            return Err(Error::data("invalid KNN bank or k"));
        }
        Ok(Self { bank, k, normalize })
    }

    pub fn bank(&self) -> &Matrix {
        &self.bank
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn normalize(&self) -> bool {
        self.normalize
    }

    pub fn dim(&self) -> usize {
        self.bank.cols()
    }
}

fn unit(v: &mut [f64]) {
    let n = linalg::norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// `−‖g − ĝ₍ₖ₎‖`, with distance ties broken by bank index.
pub fn score_knn(model: &KnnModel, g: &[f64]) -> Result<f64> {
    if g.len() != model.dim() {
        return Err(Error::shape(format!(
            "embedding has length {}, bank holds dimension {}",
            g.len(),
            model.dim()
        )));
    }
    let query;
    let g = if model.normalize {
        let mut q = g.to_vec();
        unit(&mut q);
        query = q;
        &query[..]
    } else {
        g
    };
    let mut dist: Vec<(f64, usize)> = model
        .bank
        .row_iter()
        .enumerate()
        .map(|(i, row)| (linalg::squared_distance(g, row), i))
        .collect();
    let (_, kth, _) = dist.select_nth_unstable_by(model.k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(-kth.0.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_bank_vector_scores_zero() {
        let bank = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
        let m = KnnModel::new(bank, 1, false).unwrap();
        assert_eq!(score_knn(&m, &[3.0, -1.0]).unwrap(), 0.0);
    }

    #[test]
    fn kth_order_statistic() {
        let bank = Matrix::from_rows(&[[3.0, 0.0], [1.0, 0.0], [0.0, 2.0]]).unwrap();
        let m = KnnModel::new(bank, 2, false).unwrap();
        assert_eq!(score_knn(&m, &[0.0, 0.0]).unwrap(), -2.0);
    }

    #[test]
    fn k_outside_bank_is_rejected() {
        let bank = Matrix::from_rows(&[[1.0]]).unwrap();
        assert!(KnnModel::new(bank.clone(), 2, false).is_err());
        assert!(KnnModel::new(bank, 0, false).is_err());
    }
}
