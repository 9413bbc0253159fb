//! Fully-connected ReLU classifier and its differentiation primitives.
//!
//! The network is `x → [Linear → (Affine) → ReLU]* → Linear → logits`. All
//! parameters live in one flat vector laid out layer by layer:
//!
//! ```text
//! fc{l}.weight   out × in, row-major
//! fc{l}.bias     out
//! norm{l}.scale  out   (hidden layers, when affine norm is enabled)
//! norm{l}.shift  out
//! ```
//!
//! Three primitives differentiate the label-free energy `E(x;θ) = −log Σ_y exp f^y(x)`
//! with respect to θ:
//!
//! - [`per_sample_energy_gradient`]: reverse mode for one sample.
//! - [`param_jvp`]: forward-mode directional derivatives `⟨∇θE(xᵢ), vⱼ⟩`.
//! - [`param_vjp`]: weighted accumulation `Σᵢ wᵢⱼ ∇θE(xᵢ)` in one reverse sweep.
//!
//! Both directional primitives consume the same recorded forward trace, so
//! they are exact adjoints of each other up to rounding.

mod artifact;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::par;

pub use artifact::{decode_params, encode_params, load_manifest, load_model, save_model, ModelManifest, MODEL_MAGIC};
pub use train::{accuracy, predict, train_classifier, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            other => Err(Error::config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Architecture of a classifier: layer widths from input to `C` outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    layer_dims: Vec<usize>,
    activation: Activation,
    affine_norm: bool,
    layouts: Vec<LayerLayout>,
    param_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerLayout {
    in_dim: usize,
    out_dim: usize,
    weight: usize,
    bias: usize,
    /// Offset of the affine scale; the shift follows immediately.
    affine: Option<usize>,
    hidden: bool,
}

impl ModelSpec {
    pub fn new(layer_dims: Vec<usize>, activation: Activation, affine_norm: bool) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::config("layer_dims needs at least an input and an output width"));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::config("layer widths must be positive"));
        }
        if *layer_dims.last().unwrap() < 2 {
            return Err(Error::config("a classifier needs at least two classes"));
        }
        let n_layers = layer_dims.len() - 1;
        let mut layouts = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for l in 0..n_layers {
            let (in_dim, out_dim) = (layer_dims[l], layer_dims[l + 1]);
            let hidden = l + 1 < n_layers;
            let weight = offset;
            let bias = weight + in_dim * out_dim;
            offset = bias + out_dim;
            let affine = if hidden && affine_norm {
                let a = offset;
                offset += 2 * out_dim;
                Some(a)
            } else {
                None
            };
            layouts.push(LayerLayout {
                in_dim,
                out_dim,
                weight,
                bias,
                affine,
                hidden,
            });
        }
        Ok(Self {
            layer_dims,
            activation,
            affine_norm,
            layouts,
            param_count: offset,
        })
    }

    /// ReLU network without affine normalization.
    pub fn mlp(layer_dims: &[usize]) -> Result<Self> {
        Self::new(layer_dims.to_vec(), Activation::Relu, false)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn affine_norm(&self) -> bool {
        self.affine_norm
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Width of the representation feeding the output layer.
    pub fn penultimate_dim(&self) -> usize {
        self.layer_dims[self.layer_dims.len() - 2]
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Named contiguous slices covering `[0, |θ|)` in order.
    pub fn manifest(&self) -> Vec<ParamSlice> {
        let mut out = Vec::new();
        for (l, lay) in self.layouts.iter().enumerate() {
            out.push(ParamSlice::new(format!("fc{l}.weight"), lay.weight, lay.in_dim * lay.out_dim));
            out.push(ParamSlice::new(format!("fc{l}.bias"), lay.bias, lay.out_dim));
            if let Some(a) = lay.affine {
                out.push(ParamSlice::new(format!("norm{l}.scale"), a, lay.out_dim));
                out.push(ParamSlice::new(format!("norm{l}.shift"), a + lay.out_dim, lay.out_dim));
            }
        }
        out
    }

    fn check_input_dim(&self, dim: usize) -> Result<()> {
        if dim != self.input_dim() {
            return Err(Error::config(format!(
                "input dimension {dim} does not match model input dimension {}",
                self.input_dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlice {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl ParamSlice {
    fn new(name: String, offset: usize, len: usize) -> Self {
        Self { name, offset, len }
    }
}

/// Flat parameter vector θ with its layer manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    manifest: Vec<ParamSlice>,
}

impl ParamVector {
    pub fn new(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::shape(format!(
                "parameter vector has length {}, model needs {}",
                values.len(),
                spec.param_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("parameter {i} is not finite")));
        }
        Ok(Self {
            values,
            manifest: spec.manifest(),
        })
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            values: vec![0.0; spec.param_count()],
            manifest: spec.manifest(),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` init for weights and biases, unit scale and
    /// zero shift for affine norms.
    pub fn init_uniform(spec: &ModelSpec, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; spec.param_count()];
        for lay in &spec.layouts {
            let bound = 1.0 / (lay.in_dim as f64).sqrt();
            for v in &mut values[lay.weight..lay.bias + lay.out_dim] {
                *v = rng.gen_range(-bound..bound);
            }
            if let Some(a) = lay.affine {
                values[a..a + lay.out_dim].fill(1.0);
            }
        }
        Self {
            values,
            manifest: spec.manifest(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn manifest(&self) -> &[ParamSlice] {
        &self.manifest
    }

    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.manifest
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.values[s.offset..s.offset + s.len])
    }

    /// Rounds every value to the nearest `f32`, so the vector survives the
    /// 32-bit model container unchanged.
    pub fn snap_to_f32(&mut self) {
        for v in &mut self.values {
            *v = *v as f32 as f64;
        }
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.values.len() != spec.param_count() {
            return Err(Error::shape(format!(
                "parameter vector has length {}, model needs {}",
                self.values.len(),
                spec.param_count()
            )));
        }
        Ok(())
    }
}

/// Inputs (`n × d_in`) with optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    inputs: Matrix,
    labels: Option<Vec<usize>>,
}

impl SampleBatch {
    pub fn new(inputs: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        if !inputs.is_finite() {
            return Err(Error::data("inputs contain non-finite values"));
        }
        if let Some(l) = &labels {
            if l.len() != inputs.rows() {
                return Err(Error::shape(format!(
                    "{} labels for {} inputs",
                    l.len(),
                    inputs.rows()
                )));
            }
        }
        Ok(Self { inputs, labels })
    }

    pub fn unlabeled(inputs: Matrix) -> Result<Self> {
        Self::new(inputs, None)
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.inputs.row(i)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or a usage error when the batch is unlabeled.
    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::usage("this operation needs labeled samples"))
    }

    /// Checks every label is below `num_classes`.
    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        if let Some(l) = &self.labels {
            if let Some((i, y)) = l.iter().enumerate().find(|(_, &y)| y >= num_classes) {
                return Err(Error::data(format!(
                    "label {y} at row {i} is out of range for {num_classes} classes"
                )));
            }
        }
        Ok(())
    }

    pub fn select(&self, indices: &[usize]) -> SampleBatch {
        let mut data = Vec::with_capacity(indices.len() * self.dim());
        for &i in indices {
            data.extend_from_slice(self.input(i));
        }
        SampleBatch {
            inputs: Matrix::from_vec(indices.len(), self.dim(), data).expect("shape by construction"),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    pub fn into_parts(self) -> (Matrix, Option<Vec<usize>>) {
        (self.inputs, self.labels)
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    /// Input to each layer (the sample itself for layer 0).
    inputs: Vec<Vec<f64>>,
    /// Linear outputs `Wh + b` per layer.
    linear: Vec<Vec<f64>>,
    /// Post-affine, pre-ReLU values for hidden layers (equal to `linear` without affine).
    gated: Vec<Vec<f64>>,
}

impl Trace {
    pub(crate) fn logits(&self) -> &[f64] {
        self.linear.last().unwrap()
    }

    /// Activations feeding the output layer.
    pub(crate) fn penultimate(&self) -> &[f64] {
        self.inputs.last().unwrap()
    }
}

pub(crate) fn trace(spec: &ModelSpec, theta: &[f64], x: &[f64]) -> Trace {
    let n = spec.layouts.len();
    let mut inputs = Vec::with_capacity(n);
    let mut linear = Vec::with_capacity(n);
    let mut gated = Vec::with_capacity(n);
    let mut h = x.to_vec();
    for lay in &spec.layouts {
        let w = &theta[lay.weight..lay.bias];
        let b = &theta[lay.bias..lay.bias + lay.out_dim];
        let z: Vec<f64> = (0..lay.out_dim)
            .map(|o| b[o] + linalg::dot(&w[o * lay.in_dim..(o + 1) * lay.in_dim], &h))
            .collect();
        if lay.hidden {
            let u: Vec<f64> = match lay.affine {
                Some(a) => {
                    let scale = &theta[a..a + lay.out_dim];
                    let shift = &theta[a + lay.out_dim..a + 2 * lay.out_dim];
                    z.iter()
                        .zip(scale)
                        .zip(shift)
                        .map(|((z, s), t)| s * z + t)
                        .collect()
                }
                None => z.clone(),
            };
            let next: Vec<f64> = u.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            inputs.push(std::mem::replace(&mut h, next));
            gated.push(u);
        } else {
            inputs.push(std::mem::take(&mut h));
            gated.push(Vec::new());
        }
        linear.push(z);
    }
    Trace {
        inputs,
        linear,
        gated,
    }
}

/// Reverse sweep: adds `∂(seedᵀ·logits)/∂θ` into `grad`.
pub(crate) fn backward_into(spec: &ModelSpec, theta: &[f64], tr: &Trace, seed: &[f64], grad: &mut [f64]) {
    let mut delta = seed.to_vec();
    for (l, lay) in spec.layouts.iter().enumerate().rev() {
        if lay.hidden {
            // delta holds ∂/∂(post-ReLU); ReLU'(0) = 0
            let u = &tr.gated[l];
            for (d, &v) in delta.iter_mut().zip(u) {
                if v <= 0.0 {
                    *d = 0.0;
                }
            }
            if let Some(a) = lay.affine {
                let z = &tr.linear[l];
                for o in 0..lay.out_dim {
                    grad[a + o] += delta[o] * z[o];
                    grad[a + lay.out_dim + o] += delta[o];
                }
                let scale = &theta[a..a + lay.out_dim];
                delta.iter_mut().zip(scale).for_each(|(d, s)| *d *= s);
            }
        }
        let h = &tr.inputs[l];
        for o in 0..lay.out_dim {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            let row = lay.weight + o * lay.in_dim;
            linalg::axpy(d, h, &mut grad[row..row + lay.in_dim]);
            grad[lay.bias + o] += d;
        }
        if l > 0 {
            let w = &theta[lay.weight..lay.bias];
            let mut prev = vec![0.0; lay.in_dim];
            for o in 0..lay.out_dim {
                if delta[o] != 0.0 {
                    linalg::axpy(delta[o], &w[o * lay.in_dim..(o + 1) * lay.in_dim], &mut prev);
                }
            }
            delta = prev;
        }
    }
}

/// Forward-mode sweep: tangent of the logits along parameter direction `dir`.
pub(crate) fn logit_tangent(spec: &ModelSpec, theta: &[f64], tr: &Trace, dir: &[f64]) -> Vec<f64> {
    let mut h_dot = vec![0.0; spec.input_dim()];
    let mut out = Vec::new();
    for (l, lay) in spec.layouts.iter().enumerate() {
        let w = &theta[lay.weight..lay.bias];
        let w_dot = &dir[lay.weight..lay.bias];
        let b_dot = &dir[lay.bias..lay.bias + lay.out_dim];
        let h = &tr.inputs[l];
        let z_dot: Vec<f64> = (0..lay.out_dim)
            .map(|o| {
                let r = o * lay.in_dim..(o + 1) * lay.in_dim;
                b_dot[o] + linalg::dot(&w_dot[r.clone()], h) + linalg::dot(&w[r], &h_dot)
            })
            .collect();
        if !lay.hidden {
            out = z_dot;
            break;
        }
        let u_dot: Vec<f64> = match lay.affine {
            Some(a) => {
                let z = &tr.linear[l];
                let scale = &theta[a..a + lay.out_dim];
                let scale_dot = &dir[a..a + lay.out_dim];
                let shift_dot = &dir[a + lay.out_dim..a + 2 * lay.out_dim];
                (0..lay.out_dim)
                    .map(|o| scale_dot[o] * z[o] + scale[o] * z_dot[o] + shift_dot[o])
                    .collect()
            }
            None => z_dot,
        };
        h_dot = u_dot
            .iter()
            .zip(&tr.gated[l])
            .map(|(d, &u)| if u > 0.0 { *d } else { 0.0 })
            .collect();
    }
    out
}

fn check_batch(spec: &ModelSpec, params: &ParamVector, batch: &SampleBatch) -> Result<()> {
    params.check(spec)?;
    spec.check_input_dim(batch.dim())
}

/// Logits for every sample, `n × C`.
pub fn forward(spec: &ModelSpec, params: &ParamVector, batch: &SampleBatch) -> Result<Matrix> {
    check_batch(spec, params, batch)?;
    let theta = params.values();
    let rows = par::map_chunks(batch.len(), par::DEFAULT_CHUNK, |r| {
        r.flat_map(|i| trace(spec, theta, batch.input(i)).logits().to_vec())
            .collect::<Vec<_>>()
    });
    Matrix::from_vec(batch.len(), spec.num_classes(), rows.concat())
}

/// Penultimate-layer activations, `n × penultimate_dim`: the "forward features".
pub fn penultimate_features(spec: &ModelSpec, params: &ParamVector, batch: &SampleBatch) -> Result<Matrix> {
    check_batch(spec, params, batch)?;
    let theta = params.values();
    let rows = par::map_chunks(batch.len(), par::DEFAULT_CHUNK, |r| {
        r.flat_map(|i| trace(spec, theta, batch.input(i)).penultimate().to_vec())
            .collect::<Vec<_>>()
    });
    Matrix::from_vec(batch.len(), spec.penultimate_dim(), rows.concat())
}

/// `∇θE(x;θ) = −Σ_y p(y|x) ∇θ f^y(x)`.
pub fn per_sample_energy_gradient(spec: &ModelSpec, params: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    params.check(spec)?;
    spec.check_input_dim(x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("input contains non-finite values"));
    }
    Ok(energy_gradient_unchecked(spec, params.values(), x))
}

pub(crate) fn energy_gradient_unchecked(spec: &ModelSpec, theta: &[f64], x: &[f64]) -> Vec<f64> {
    let tr = trace(spec, theta, x);
    let seed: Vec<f64> = linalg::softmax(tr.logits()).iter().map(|p| -p).collect();
    let mut grad = vec![0.0; spec.param_count()];
    backward_into(spec, theta, &tr, &seed, &mut grad);
    grad
}

/// Materialized per-sample energy gradients, `n × |θ|`.
pub fn per_sample_energy_gradients(spec: &ModelSpec, params: &ParamVector, batch: &SampleBatch) -> Result<Matrix> {
    check_batch(spec, params, batch)?;
    let theta = params.values();
    let rows = par::map_chunks(batch.len(), par::DEFAULT_CHUNK, |r| {
        r.flat_map(|i| energy_gradient_unchecked(spec, theta, batch.input(i)))
            .collect::<Vec<_>>()
    });
    Matrix::from_vec(batch.len(), spec.param_count(), rows.concat())
}

/// `out[i][j] = ⟨∇θE(xᵢ), v[:, j]⟩` by forward-mode differentiation.
pub fn param_jvp(spec: &ModelSpec, params: &ParamVector, batch: &SampleBatch, v: &Matrix) -> Result<Matrix> {
    param_jvp_chunked(spec, params, batch, v, par::DEFAULT_CHUNK)
}

pub fn param_jvp_chunked(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: &SampleBatch,
    v: &Matrix,
    chunk: usize,
) -> Result<Matrix> {
    check_batch(spec, params, batch)?;
    if v.rows() != spec.param_count() || v.cols() == 0 {
        return Err(Error::shape(format!(
            "direction block is {}x{}, expected {}xK with K >= 1",
            v.rows(),
            v.cols(),
            spec.param_count()
        )));
    }
    if !v.is_finite() {
        return Err(Error::data("direction block contains non-finite values"));
    }
    let theta = params.values();
    let dirs = v.columns();
    let k = dirs.len();
    let rows = par::map_chunks(batch.len(), chunk, |r| {
        let mut out = Vec::with_capacity(r.len() * k);
        for i in r {
            let tr = trace(spec, theta, batch.input(i));
            let p = linalg::softmax(tr.logits());
            for dir in &dirs {
                let tangent = logit_tangent(spec, theta, &tr, dir);
                out.push(-linalg::dot(&p, &tangent));
            }
        }
        out
    });
    Matrix::from_vec(batch.len(), k, rows.concat())
}

/// Column `j` of the result is `Σᵢ weights[i][j]·∇θE(xᵢ)`, accumulated by a
/// reverse sweep per sample without materializing per-sample gradients.
pub fn param_vjp(spec: &ModelSpec, params: &ParamVector, batch: &SampleBatch, weights: &Matrix) -> Result<Matrix> {
    param_vjp_chunked(spec, params, batch, weights, par::DEFAULT_CHUNK)
}

pub fn param_vjp_chunked(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: &SampleBatch,
    weights: &Matrix,
    chunk: usize,
) -> Result<Matrix> {
    check_batch(spec, params, batch)?;
    if weights.rows() != batch.len() || weights.cols() == 0 {
        return Err(Error::shape(format!(
            "weight block is {}x{}, expected {}xK with K >= 1",
            weights.rows(),
            weights.cols(),
            batch.len()
        )));
    }
    if !weights.is_finite() {
        return Err(Error::data("weight block contains non-finite values"));
    }
    let theta = params.values();
    let k = weights.cols();
    let p_len = spec.param_count();
    let partials = par::map_chunks(batch.len(), chunk, |r| {
        // K stacked accumulators of length |θ|
        let mut acc = vec![0.0; k * p_len];
        for i in r {
            let tr = trace(spec, theta, batch.input(i));
            let p = linalg::softmax(tr.logits());
            for j in 0..k {
                let w = weights.get(i, j);
                if w == 0.0 {
                    continue;
                }
                let seed: Vec<f64> = p.iter().map(|pi| -w * pi).collect();
                backward_into(spec, theta, &tr, &seed, &mut acc[j * p_len..(j + 1) * p_len]);
            }
        }
        acc
    });
    let stacked = par::sum_in_order(partials, k * p_len);
    let mut out = Matrix::zeros(p_len, k);
    for j in 0..k {
        out.set_column(j, &stacked[j * p_len..(j + 1) * p_len]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_layer_identity() -> (ModelSpec, ParamVector) {
        let spec = ModelSpec::mlp(&[2, 2]).unwrap();
        let params = ParamVector::new(&spec, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        (spec, params)
    }

    #[test]
    fn param_count_includes_affine_norm() {
        let plain = ModelSpec::mlp(&[3, 5, 2]).unwrap();
        assert_eq!(plain.param_count(), 3 * 5 + 5 + 5 * 2 + 2);
        let normed = ModelSpec::new(vec![3, 5, 2], Activation::Relu, true).unwrap();
        assert_eq!(normed.param_count(), plain.param_count() + 10);
    }

    #[test]
    fn manifest_is_contiguous_and_covering() {
        let spec = ModelSpec::new(vec![4, 6, 3, 2], Activation::Relu, true).unwrap();
        let mut next = 0;
        for s in spec.manifest() {
            assert_eq!(s.offset, next);
            next += s.len;
        }
        assert_eq!(next, spec.param_count());
    }

    #[test]
    fn spec_rejects_bad_shapes() {
        assert!(ModelSpec::mlp(&[3]).is_err());
        assert!(ModelSpec::mlp(&[3, 1]).is_err());
        assert!(ModelSpec::mlp(&[3, 0, 2]).is_err());
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let spec = ModelSpec::mlp(&[3, 4, 2]).unwrap();
        let params = ParamVector::zeros(&spec);
        let batch = SampleBatch::unlabeled(Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]]).unwrap()).unwrap();
        let logits = forward(&spec, &params, &batch).unwrap();
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let (spec, params) = single_layer_identity();
        let batch = SampleBatch::unlabeled(Matrix::from_rows(&[[3.0, -1.0]]).unwrap()).unwrap();
        assert_eq!(forward(&spec, &params, &batch).unwrap().row(0), &[3.0, -1.0]);
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let (spec, params) = single_layer_identity();
        let batch = SampleBatch::unlabeled(Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap()).unwrap();
        assert!(matches!(forward(&spec, &params, &batch), Err(Error::Config(_))));
    }

    #[test]
    fn uniform_softmax_gradient_at_zero_weights() {
        let spec = ModelSpec::mlp(&[2, 2]).unwrap();
        let params = ParamVector::zeros(&spec);
        let g = per_sample_energy_gradient(&spec, &params, &[1.0, 0.0]).unwrap();
        assert_eq!(g, vec![-0.5, 0.0, -0.5, 0.0, -0.5, -0.5]);
    }

    #[test]
    fn zero_direction_and_zero_weights_vanish() {
        let spec = ModelSpec::mlp(&[3, 4, 2]).unwrap();
        let params = ParamVector::init_uniform(&spec, 1);
        let batch = SampleBatch::unlabeled(Matrix::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]]).unwrap()).unwrap();
        let jvp = param_jvp(&spec, &params, &batch, &Matrix::zeros(spec.param_count(), 2)).unwrap();
        assert!(jvp.as_slice().iter().all(|&v| v == 0.0));
        let vjp = param_vjp(&spec, &params, &batch, &Matrix::zeros(2, 3)).unwrap();
        assert!(vjp.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!((vjp.rows(), vjp.cols()), (spec.param_count(), 3));
    }

    #[test]
    fn shape_errors_are_reported() {
        let spec = ModelSpec::mlp(&[3, 4, 2]).unwrap();
        let params = ParamVector::init_uniform(&spec, 1);
        let batch = SampleBatch::unlabeled(Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap()).unwrap();
        assert!(matches!(
            param_jvp(&spec, &params, &batch, &Matrix::zeros(5, 1)),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            param_vjp(&spec, &params, &batch, &Matrix::zeros(2, 1)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn single_sample_vjp_is_the_gradient() {
        let spec = ModelSpec::new(vec![3, 5, 2], Activation::Relu, true).unwrap();
        let params = ParamVector::init_uniform(&spec, 9);
        let x = [0.3, -1.2, 2.0];
        let batch = SampleBatch::unlabeled(Matrix::from_rows(&[x]).unwrap()).unwrap();
        let vjp = param_vjp(&spec, &params, &batch, &Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        let g = per_sample_energy_gradient(&spec, &params, &x).unwrap();
        assert_eq!(vjp.column(0), g);
    }
}
