//! Low-dimensional gradient subspaces.
//!
//! Two bases are supported: the top-K principal directions of the normalized
//! gradient covariance, found by block power iteration through the model's
//! JVP/VJP primitives, and the per-class mean normalized gradients.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{self, ByteReader, ByteWriter};
use crate::gradembed::{self, NormStats, NormalizedGradient};
use crate::linalg::{self, Matrix};
use crate::micronet::{self, ModelSpec, ParamVector, SampleBatch};
use crate::par;

pub const SUBSPACE_MAGIC: &[u8] = b"GSO-SUBSP\0";

const ORTHO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubspaceKind {
    Pca,
    ClassMean,
}

impl SubspaceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SubspaceKind::Pca => "pca",
            SubspaceKind::ClassMean => "class-mean",
        }
    }

    fn code(self) -> u8 {
        match self {
            SubspaceKind::Pca => 0,
            SubspaceKind::ClassMean => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(SubspaceKind::Pca),
            1 => Some(SubspaceKind::ClassMean),
            _ => None,
        }
    }
}

/// Projection basis `V` (`|θ| × K`) with the normalization it applies to.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: Matrix,
    eigenvalues: Option<Vec<f64>>,
    kind: SubspaceKind,
    norm_stats: NormStats,
    orthonormalized: bool,
}

/// A projected gradient `gᵀV`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEmbedding(pub Vec<f64>);

impl Subspace {
    pub fn new(
        basis: Matrix,
        eigenvalues: Option<Vec<f64>>,
        kind: SubspaceKind,
        norm_stats: NormStats,
        orthonormalized: bool,
    ) -> Result<Self> {
        let sub = Self {
            basis,
            eigenvalues,
            kind,
            norm_stats,
            orthonormalized,
        };
        sub.validate()?;
        Ok(sub)
    }

    pub fn validate(&self) -> Result<()> {
        self.norm_stats.validate()?;
        if self.basis.rows() != self.norm_stats.dim() {
            return Err(Error::shape(format!(
                "basis has {} rows but normalization covers {} parameters",
                self.basis.rows(),
                self.norm_stats.dim()
            )));
        }
        if self.basis.cols() == 0 {
            return Err(Error::data("subspace needs at least one basis vector"));
        }
        if !self.basis.is_finite() {
            return Err(Error::data("basis contains non-finite values"));
        }
        if self.kind == SubspaceKind::Pca {
            let ev = self
                .eigenvalues
                .as_ref()
                .ok_or_else(|| Error::data("PCA subspace is missing its eigenvalues"))?;
            if ev.len() != self.basis.cols() {
                return Err(Error::data("eigenvalue count differs from basis width"));
            }
            if ev.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::data("eigenvalues must be finite and non-negative"));
            }
            if ev.windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::data("eigenvalues must be sorted nonincreasing"));
            }
            if !self.orthonormalized {
                return Err(Error::data("PCA subspace must be orthonormal"));
            }
        }
        if self.orthonormalized {
            let dev = orthonormality_defect(&self.basis);
            if dev > ORTHO_TOL {
                return Err(Error::data(format!(
                    "basis flagged orthonormal but ‖VᵀV − I‖_max = {dev:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn eigenvalues(&self) -> Option<&[f64]> {
        self.eigenvalues.as_deref()
    }

    pub fn kind(&self) -> SubspaceKind {
        self.kind
    }

    pub fn norm_stats(&self) -> &NormStats {
        &self.norm_stats
    }

    pub fn orthonormalized(&self) -> bool {
        self.orthonormalized
    }

    pub fn k(&self) -> usize {
        self.basis.cols()
    }

    pub fn dim(&self) -> usize {
        self.basis.rows()
    }
}

/// `max |VᵀV − I|`.
pub fn orthonormality_defect(v: &Matrix) -> f64 {
    let g = v.t_matmul(v).expect("square gram");
    let mut worst = 0.0_f64;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.get(i, j) - target).abs());
        }
    }
    worst
}

/// A linear operator `G: R^|θ| → R^n` that can be applied blockwise together
/// with its transpose. Power iteration needs nothing else.
pub trait GramOperator: Sync {
    fn dim(&self) -> usize;
    fn samples(&self) -> usize;
    /// `G·V`, shape `n × K`.
    fn apply(&self, v: &Matrix) -> Result<Matrix>;
    /// `Gᵀ·U`, shape `|θ| × K`.
    fn apply_transpose(&self, u: &Matrix) -> Result<Matrix>;
}

/// An explicitly materialized `n × |θ|` matrix.
#[derive(Debug, Clone, Copy)]
pub struct DenseGram<'a> {
    rows: &'a Matrix,
}

impl<'a> DenseGram<'a> {
    pub fn new(rows: &'a Matrix) -> Self {
        Self { rows }
    }
}

impl GramOperator for DenseGram<'_> {
    fn dim(&self) -> usize {
        self.rows.cols()
    }

    fn samples(&self) -> usize {
        self.rows.rows()
    }

    fn apply(&self, v: &Matrix) -> Result<Matrix> {
        self.rows.matmul(v)
    }

    fn apply_transpose(&self, u: &Matrix) -> Result<Matrix> {
        self.rows.t_matmul(u)
    }
}

/// The normalized gradient matrix `G = (∇E − M)·diag(var + ε)^{-1/2}` of a
/// model over a dataset, never materialized.
pub struct GradientGram<'a> {
    spec: &'a ModelSpec,
    params: &'a ParamVector,
    data: &'a SampleBatch,
    stats: &'a NormStats,
    inv_scale: Vec<f64>,
    chunk: usize,
}

impl<'a> GradientGram<'a> {
    pub fn new(
        spec: &'a ModelSpec,
        params: &'a ParamVector,
        data: &'a SampleBatch,
        stats: &'a NormStats,
        chunk: usize,
    ) -> Result<Self> {
        if stats.dim() != spec.param_count() {
            return Err(Error::shape("normalization statistics do not match the model"));
        }
        Ok(Self {
            spec,
            params,
            data,
            stats,
            inv_scale: stats.inverse_scale(),
            chunk: chunk.max(1),
        })
    }
}

impl GramOperator for GradientGram<'_> {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn samples(&self) -> usize {
        self.data.len()
    }

    fn apply(&self, v: &Matrix) -> Result<Matrix> {
        // v ← diag(I)^{-1/2} v, then ⟨∇E, v⟩ − Mᵀv
        let mut scaled = v.clone();
        for i in 0..scaled.rows() {
            let s = self.inv_scale[i];
            scaled.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        let mean_dot = scaled.t_matmul(&Matrix::from_vec(self.dim(), 1, self.stats.mean.clone())?)?;
        let mut out = micronet::param_jvp_chunked(self.spec, self.params, self.data, &scaled, self.chunk)?;
        for i in 0..out.rows() {
            for (j, x) in out.row_mut(i).iter_mut().enumerate() {
                *x -= mean_dot.get(j, 0);
            }
        }
        Ok(out)
    }

    fn apply_transpose(&self, u: &Matrix) -> Result<Matrix> {
        // diag(I)^{-1/2} (Σᵢ uᵢ∇Eᵢ − M·s), s = column sums of u
        let mut out = micronet::param_vjp_chunked(self.spec, self.params, self.data, u, self.chunk)?;
        let sums: Vec<f64> = (0..u.cols()).map(|j| (0..u.rows()).map(|i| u.get(i, j)).sum()).collect();
        for p in 0..out.rows() {
            let m = self.stats.mean[p];
            let s = self.inv_scale[p];
            for (x, sj) in out.row_mut(p).iter_mut().zip(&sums) {
                *x = (*x - m * sj) * s;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaConfig {
    /// Maximum number of power iterations.
    pub iters: usize,
    pub seed: u64,
    /// Stop once the largest principal angle between successive bases drops below this.
    pub tol: f64,
    pub chunk_size: usize,
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self {
            iters: 30,
            seed: 0,
            tol: 1e-6,
            chunk_size: par::DEFAULT_CHUNK,
        }
    }
}

/// Result of block power iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerIteration {
    /// Orthonormal `|θ| × K` basis, columns sorted by eigenvalue.
    pub basis: Matrix,
    /// Rayleigh quotients `‖G vⱼ‖²`, nonincreasing.
    pub eigenvalues: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest principal angle (radians) between the last two iterates.
    pub last_angle: f64,
}

fn random_block(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..cols)
        .map(|_| (0..rows).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

/// Orthonormalizes, replacing rank-deficient columns with fresh random
/// directions so the block keeps full width.
fn orthonormalize_full(cols: &mut Vec<Vec<f64>>, rng: &mut ChaCha8Rng) -> Result<()> {
    for _attempt in 0..16 {
        match linalg::orthonormalize_columns(cols, 1e-10) {
            Ok(()) => return Ok(()),
            Err(def) => {
                let fresh = random_block(rng, cols[0].len(), 1).pop().unwrap();
                cols[def.column] = fresh;
            }
        }
    }
    Err(Error::data("could not build a full-rank orthonormal block"))
}

/// Largest principal angle between the spans of two orthonormal blocks.
pub fn largest_principal_angle(a: &Matrix, b: &Matrix) -> Result<f64> {
    // residual of b after projecting onto span(a)
    let coef = a.t_matmul(b)?;
    let resid = b.sub(&a.matmul(&coef)?)?;
    let gram = resid.t_matmul(&resid)?;
    let (vals, _) = linalg::symmetric_eigen(&gram)?;
    let s = vals.first().copied().unwrap_or(0.0).max(0.0).sqrt().min(1.0);
    Ok(s.asin())
}

/// Makes the first significant coordinate of every column positive.
fn fix_signs(basis: &mut Matrix) {
    for j in 0..basis.cols() {
        let col = basis.column(j);
        let scale = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-9 * scale) {
            if *first < 0.0 {
                let flipped: Vec<f64> = col.iter().map(|v| -v).collect();
                basis.set_column(j, &flipped);
            }
        }
    }
}

/// Top-K eigenvectors of `GᵀG` by block power iteration.
///
/// Each step applies `G` then `Gᵀ` and re-orthonormalizes. The final iterate
/// is rotated within its span (Rayleigh–Ritz) so that every column is an
/// eigenvector estimate of the projected operator; the eigenvalues reported
/// are the Rayleigh quotients of those columns.
pub fn block_power_iteration<O: GramOperator + ?Sized>(op: &O, k: usize, config: &PcaConfig) -> Result<PowerIteration> {
    let (dim, n) = (op.dim(), op.samples());
    if k == 0 || k > n.min(dim) {
        return Err(Error::usage(format!(
            "K = {k} must satisfy 1 <= K <= min(n = {n}, |θ| = {dim})"
        )));
    }
    if config.iters == 0 {
        return Err(Error::usage("power iteration needs at least one iteration"));
    }
    if !(config.tol >= 0.0) {
        return Err(Error::config("tolerance must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cols = random_block(&mut rng, dim, k);
    orthonormalize_full(&mut cols, &mut rng)?;
    let mut v = Matrix::from_columns(&cols)?;

    let mut converged = false;
    let mut last_angle = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..config.iters {
        iterations += 1;
        let gv = op.apply(&v)?;
        let next = op.apply_transpose(&gv)?;
        let mut cols = next.columns();
        orthonormalize_full(&mut cols, &mut rng)?;
        let next = Matrix::from_columns(&cols)?;
        last_angle = largest_principal_angle(&v, &next)?;
        v = next;
        if last_angle < config.tol {
            converged = true;
            break;
        }
    }

    let gv = op.apply(&v)?;
    let projected = gv.t_matmul(&gv)?;
    let (vals, rot) = linalg::symmetric_eigen(&projected)?;
    let mut basis = v.matmul(&rot)?;
    fix_signs(&mut basis);
    let eigenvalues = vals.into_iter().map(|x| x.max(0.0)).collect();
    Ok(PowerIteration {
        basis,
        eigenvalues,
        iterations,
        converged,
        last_angle,
    })
}

/// PCA subspace plus convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaOutcome {
    pub subspace: Subspace,
    pub iterations: usize,
    pub converged: bool,
    pub last_angle: f64,
}

/// Fits normalization statistics on `train`, then extracts the top-K
/// principal subspace of the normalized gradients.
pub fn extract_pca_subspace(
    spec: &ModelSpec,
    params: &ParamVector,
    train: &SampleBatch,
    k: usize,
    config: &PcaConfig,
) -> Result<PcaOutcome> {
    let stats = gradembed::fit_norm_stats_with(spec, params, train, gradembed::DEFAULT_EPSILON, config.chunk_size)?;
    extract_pca_subspace_with_stats(spec, params, train, stats, k, config)
}

pub fn extract_pca_subspace_with_stats(
    spec: &ModelSpec,
    params: &ParamVector,
    train: &SampleBatch,
    stats: NormStats,
    k: usize,
    config: &PcaConfig,
) -> Result<PcaOutcome> {
    let op = GradientGram::new(spec, params, train, &stats, config.chunk_size)?;
    let run = block_power_iteration(&op, k, config)?;
    let subspace = Subspace::new(run.basis, Some(run.eigenvalues), SubspaceKind::Pca, stats, true)?;
    Ok(PcaOutcome {
        subspace,
        iterations: run.iterations,
        converged: run.converged,
        last_angle: run.last_angle,
    })
}

/// Per-class mean of normalized gradients (`n × |θ|`, labels in `0..num_classes`).
pub fn class_means(normalized: &Matrix, labels: &[usize], num_classes: usize) -> Result<Vec<Vec<f64>>> {
    if labels.len() != normalized.rows() {
        return Err(Error::shape("one label per gradient row is required"));
    }
    let mut sums = vec![vec![0.0; normalized.cols()]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(Error::data(format!("label {y} out of range for {num_classes} classes")));
        }
        linalg::axpy(1.0, normalized.row(i), &mut sums[y]);
        counts[y] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::usage(format!("class {c} has no samples")));
    }
    for (s, n) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= *n as f64);
    }
    Ok(sums)
}

/// Class-mean subspace: column `c` is the mean normalized gradient of class `c`.
///
/// With `orthonormalize` the columns are Gram-Schmidt orthonormalized and a
/// rank-deficient set of means is an error; otherwise the raw means are kept
/// and rank deficiency only logs a warning.
pub fn extract_classmean_subspace(
    normalized: &Matrix,
    labels: &[usize],
    num_classes: usize,
    stats: NormStats,
    orthonormalize: bool,
) -> Result<Subspace> {
    let means = class_means(normalized, labels, num_classes)?;
    let raw = Matrix::from_columns(&means)?;
    let basis = if orthonormalize {
        linalg::orthonormalize(&raw, 1e-10).map_err(|d| {
            Error::data(format!(
                "class means are rank deficient (class {} lies in the span of earlier classes)",
                d.column
            ))
        })?
    } else {
        if let Err(d) = linalg::orthonormalize(&raw, 1e-10) {
            log::warn!("class-mean basis is rank deficient at class {}", d.column);
        }
        raw
    };
    Subspace::new(basis, None, SubspaceKind::ClassMean, stats, orthonormalize)
}

/// `gᵀV`.
pub fn project(sub: &Subspace, g: &NormalizedGradient) -> Result<GradientEmbedding> {
    if g.0.len() != sub.dim() {
        return Err(Error::shape(format!(
            "gradient has length {}, subspace expects {}",
            g.0.len(),
            sub.dim()
        )));
    }
    let v = Matrix::from_vec(1, g.0.len(), g.0.clone())?;
    Ok(GradientEmbedding(v.matmul(&sub.basis)?.into_vec()))
}

/// Projects every row of an `n × |θ|` matrix, giving `n × K`.
pub fn project_rows(sub: &Subspace, grads: &Matrix) -> Result<Matrix> {
    if grads.cols() != sub.dim() {
        return Err(Error::shape("gradient width does not match the subspace"));
    }
    grads.matmul(&sub.basis)
}

/// Gradient embeddings of a batch: energy gradient → normalize → project.
pub fn embed_batch(spec: &ModelSpec, params: &ParamVector, sub: &Subspace, batch: &SampleBatch) -> Result<Matrix> {
    let grads = gradembed::normalized_gradients(spec, params, batch, &sub.norm_stats)?;
    project_rows(sub, &grads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    pub cumulative_ratio: Vec<f64>,
    pub total_variance: f64,
}

impl Spectrum {
    pub fn from_parts(eigenvalues: Vec<f64>, total_variance: f64) -> Result<Self> {
        if !(total_variance > 0.0) {
            return Err(Error::data("total variance must be positive"));
        }
        let explained_ratio: Vec<f64> = eigenvalues.iter().map(|e| e / total_variance).collect();
        let cumulative_ratio = explained_ratio
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            eigenvalues,
            explained_ratio,
            cumulative_ratio,
            total_variance,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,eigenvalue,ratio,cumulative\n");
        for i in 0..self.eigenvalues.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                self.eigenvalues[i],
                self.explained_ratio[i],
                self.cumulative_ratio[i]
            ));
        }
        out
    }
}

/// Explained-variance profile of a PCA subspace.
///
/// Eigenvalues are on the `GᵀG` scale, so the total is the trace of `GᵀG`:
/// `n_fit · Σⱼ varⱼ/(varⱼ + ε)`, exact from the stored statistics.
pub fn spectrum(sub: &Subspace) -> Result<Spectrum> {
    let ev = match (sub.kind, &sub.eigenvalues) {
        (SubspaceKind::Pca, Some(ev)) => ev.clone(),
        _ => {
            return Err(Error::Unsupported(
                "a spectrum is only defined for PCA subspaces".into(),
            ))
        }
    };
    let stats = &sub.norm_stats;
    let total = stats.n_fit as f64 * stats.normalized_mean_square();
    Spectrum::from_parts(ev, total)
}

pub fn encode_subspace(sub: &Subspace) -> Vec<u8> {
    let mut w = ByteWriter::new(SUBSPACE_MAGIC);
    w.u8(sub.kind.code());
    w.u64(sub.dim() as u64);
    w.u32(sub.k() as u32);
    w.u8(sub.orthonormalized as u8);
    w.f64(sub.norm_stats.epsilon);
    w.u64(sub.norm_stats.n_fit as u64);
    let ev = sub.eigenvalues.as_deref().unwrap_or(&[]);
    w.u32(ev.len() as u32);
    w.f64s(&sub.norm_stats.mean);
    w.f64s(&sub.norm_stats.var_diag);
    // column-major
    for j in 0..sub.k() {
        w.f64s(&sub.basis.column(j));
    }
    w.f64s(ev);
    w.finish()
}

pub fn decode_subspace(path: &Path, bytes: &[u8]) -> Result<Subspace> {
    let mut r = ByteReader::open(path, bytes, SUBSPACE_MAGIC)?;
    let kind_code = r.u8()?;
    let kind = SubspaceKind::from_code(kind_code).ok_or_else(|| r.error(format!("unknown subspace kind {kind_code}")))?;
    let dim = r.u64()? as usize;
    let k = r.u32()? as usize;
    let ortho = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(r.error(format!("invalid orthonormalized flag {other}"))),
    };
    let epsilon = r.f64()?;
    let n_fit = r.u64()? as usize;
    let n_ev = r.u32()? as usize;
    let mean = r.f64s(dim)?;
    let var_diag = r.f64s(dim)?;
    let basis_cols: Vec<Vec<f64>> = (0..k).map(|_| r.f64s(dim)).collect::<Result<_>>()?;
    let ev = r.f64s(n_ev)?;
    r.finish()?;
    let mut basis = Matrix::zeros(dim, k);
    for (j, c) in basis_cols.iter().enumerate() {
        basis.set_column(j, c);
    }
    let stats = NormStats {
        mean,
        var_diag,
        epsilon,
        n_fit,
    };
    let eigenvalues = (kind == SubspaceKind::Pca || n_ev > 0).then_some(ev);
    Subspace::new(basis, eigenvalues, kind, stats, ortho).map_err(|e| Error::Validation {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn save_subspace(sub: &Subspace, path: &Path) -> Result<()> {
    format::write_atomic(path, &encode_subspace(sub))
}

pub fn load_subspace(path: &Path) -> Result<Subspace> {
    decode_subspace(path, &format::read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_stats(dim: usize) -> NormStats {
        NormStats {
            mean: vec![0.0; dim],
            var_diag: vec![1.0; dim],
            epsilon: 1e-12,
            n_fit: 2,
        }
    }

    #[test]
    fn diagonal_gram_gives_known_top_eigenpair() {
        let g = Matrix::from_rows(&[[2.0, 0.0], [0.0, 1.0]]).unwrap();
        let run = block_power_iteration(&DenseGram::new(&g), 1, &PcaConfig { iters: 200, tol: 1e-12, ..Default::default() }).unwrap();
        assert!((run.eigenvalues[0] - 4.0).abs() < 1e-6);
        let v = run.basis.column(0);
        assert!((v[0] - 1.0).abs() < 1e-6 && v[1].abs() < 1e-6);
    }

    #[test]
    fn k_larger_than_rank_bound_is_a_usage_error() {
        let g = Matrix::from_rows(&[[2.0, 0.0, 1.0], [0.0, 1.0, 1.0]]).unwrap();
        assert!(matches!(
            block_power_iteration(&DenseGram::new(&g), 3, &PcaConfig::default()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn class_means_of_constants() {
        let g = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 2.0]]).unwrap();
        let sub = extract_classmean_subspace(&g, &[0, 0, 1], 2, unit_stats(2), false).unwrap();
        assert_eq!(sub.basis().column(0), vec![1.0, 0.0]);
        assert_eq!(sub.basis().column(1), vec![0.0, 2.0]);
        assert!(!sub.orthonormalized());
    }

    #[test]
    fn zero_gradients_cannot_be_orthonormalized() {
        let g = Matrix::zeros(4, 3);
        let labels = [0, 1, 0, 1];
        let sub = extract_classmean_subspace(&g, &labels, 2, unit_stats(3), false).unwrap();
        assert!(sub.basis().as_slice().iter().all(|v| *v == 0.0));
        assert!(extract_classmean_subspace(&g, &labels, 2, unit_stats(3), true).is_err());
    }

    #[test]
    fn empty_class_is_named() {
        let g = Matrix::zeros(2, 3);
        let err = extract_classmean_subspace(&g, &[0, 0], 3, unit_stats(3), false).unwrap_err();
        assert!(err.to_string().contains("class 1"));
    }

    #[test]
    fn projection_selects_coordinates() {
        let basis = Matrix::from_columns(&[[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]).unwrap();
        let sub = Subspace::new(basis, None, SubspaceKind::ClassMean, unit_stats(4), true).unwrap();
        let e = project(&sub, &NormalizedGradient(vec![5.0, 6.0, 7.0, 8.0])).unwrap();
        assert_eq!(e.0, vec![5.0, 7.0]);
        let z = project(&sub, &NormalizedGradient(vec![0.0, 3.0, 0.0, -1.0])).unwrap();
        assert_eq!(z.0, vec![0.0, 0.0]);
        assert!(project(&sub, &NormalizedGradient(vec![1.0])).is_err());
    }

    #[test]
    fn spectrum_arithmetic() {
        let s = Spectrum::from_parts(vec![3.0, 1.0], 4.0).unwrap();
        assert_eq!(s.explained_ratio, vec![0.75, 0.25]);
        assert_eq!(s.cumulative_ratio, vec![0.75, 1.0]);
        let one = Spectrum::from_parts(vec![2.5], 2.5).unwrap();
        assert_eq!(one.explained_ratio, vec![1.0]);
    }

    #[test]
    fn class_mean_spectrum_is_unsupported() {
        let basis = Matrix::from_columns(&[[1.0, 0.0]]).unwrap();
        let sub = Subspace::new(basis, None, SubspaceKind::ClassMean, unit_stats(2), false).unwrap();
        assert!(matches!(spectrum(&sub), Err(Error::Unsupported(_))));
    }

    #[test]
    fn non_orthonormal_basis_flagged_orthonormal_is_rejected() {
        let basis = Matrix::from_columns(&[[1.0, 1.0]]).unwrap();
        assert!(Subspace::new(basis, None, SubspaceKind::ClassMean, unit_stats(2), true).is_err());
    }

    #[test]
    fn principal_angle_of_identical_spans_is_zero() {
        let a = Matrix::from_columns(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let b = Matrix::from_columns(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        assert!(largest_principal_angle(&a, &b).unwrap() < 1e-12);
        let c = Matrix::from_columns(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!((largest_principal_angle(&a, &c).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
