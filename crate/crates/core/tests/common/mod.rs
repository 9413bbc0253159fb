//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use gradood::evalharness::{generate_synth, SynthData, SynthSpec};
use gradood::linalg::Matrix;
use gradood::micronet::{self, train_classifier, ModelSpec, ParamVector, SampleBatch, TrainConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.set(i, j, m[(i, j)]);
        }
    }
    out
}

/// Dense symmetric eigendecomposition (nalgebra), eigenvalues descending with
/// eigenvectors as matching columns.
pub fn dense_eigen(a: &Matrix) -> (Vec<f64>, DMatrix<f64>) {
    let eig = nalgebra::SymmetricEigen::new(to_na(a));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (values, vectors)
}

/// `‖VVᵀ − UUᵀ‖_F` for column-orthonormal `V` (|θ|×K) and `U`.
pub fn projector_distance(v: &DMatrix<f64>, u: &DMatrix<f64>) -> f64 {
    (v * v.transpose() - u * u.transpose()).norm()
}

/// Central finite differences of the energy `E(x;θ)` in every parameter.
pub fn fd_energy_gradient(spec: &ModelSpec, params: &ParamVector, x: &[f64], h: f64) -> Vec<f64> {
    let batch = SampleBatch::unlabeled(Matrix::from_vec(1, x.len(), x.to_vec()).unwrap()).unwrap();
    let energy = |theta: &[f64]| {
        let p = ParamVector::new(spec, theta.to_vec()).unwrap();
        let logits = micronet::forward(spec, &p, &batch).unwrap();
        // direct (unshifted) evaluation, independent of the library's log-sum-exp
        -logits.row(0).iter().map(|v| v.exp()).sum::<f64>().ln()
    };
    let mut theta = params.values().to_vec();
    (0..theta.len())
        .map(|j| {
            let orig = theta[j];
            theta[j] = orig + h;
            let up = energy(&theta);
            theta[j] = orig - h;
            let down = energy(&theta);
            theta[j] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// O(n²) pairwise AUROC with half credit for ties.
pub fn pairwise_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let (mut gt, mut ties) = (0u64, 0u64);
    for a in id {
        for b in ood {
            if a > b {
                gt += 1;
            } else if a == b {
                ties += 1;
            }
        }
    }
    (gt as f64 + 0.5 * ties as f64) / (id.len() * ood.len()) as f64
}

/// Threshold sweep: among all candidate thresholds (every ID score), the
/// largest one keeping at least `tpr` of ID scores at or above it, then the
/// OOD acceptance rate there.
pub fn sweep_lambda(id: &[f64], tpr: f64) -> f64 {
    let n = id.len() as f64;
    let mut best = f64::NEG_INFINITY;
    for &cand in id {
        let kept = id.iter().filter(|&&s| s >= cand).count() as f64;
        if kept >= tpr * n - 1e-9 && cand > best {
            best = cand;
        }
    }
    best
}

pub fn sweep_fpr(id: &[f64], ood: &[f64], tpr: f64) -> f64 {
    let l = sweep_lambda(id, tpr);
    ood.iter().filter(|&&s| s >= l).count() as f64 / ood.len() as f64
}

/// Brute-force k-th nearest distance by sorting every distance.
pub fn sorted_knn_score(bank: &Matrix, g: &[f64], k: usize) -> f64 {
    let mut d: Vec<f64> = bank
        .row_iter()
        .map(|r| r.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect();
    d.sort_by(f64::total_cmp);
    -d[k - 1]
}

/// The desk-scale benchmark: 4 Gaussian classes in 8-d, a [8,16,16,4] ReLU
/// net trained with the default recipe.
pub struct Bench {
    pub data: SynthData,
    pub spec: ModelSpec,
    pub params: ParamVector,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

pub const BENCH_SEED: u64 = 0;

pub fn bench() -> Bench {
    let data = generate_synth(&SynthSpec::benchmark(BENCH_SEED)).unwrap();
    let spec = ModelSpec::mlp(&[8, 16, 16, 4]).unwrap();
    let out = train_classifier(&spec, &data.train, &TrainConfig::default()).unwrap();
    let test_accuracy = micronet::accuracy(&spec, &out.params, &data.id_test).unwrap();
    Bench {
        data,
        spec,
        params: out.params,
        train_accuracy: out.train_accuracy,
        test_accuracy,
    }
}
