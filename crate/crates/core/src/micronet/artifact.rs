use std::path::Path;

use super::{Activation, ModelSpec, ParamVector};
use crate::error::{Error, Result};
use crate::format::{self, ByteReader, ByteWriter};

pub const MODEL_MAGIC: &[u8] = b"GSO-MODEL\0";

/// Model manifest carried in the `.meta` sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelManifest {
    pub spec: ModelSpec,
    pub seed: u64,
}

pub fn encode_params(params: &ParamVector) -> Vec<u8> {
    let mut w = ByteWriter::new(MODEL_MAGIC);
    w.u64(params.len() as u64);
    w.f32s(params.values());
    w.finish()
}

pub fn decode_params(path: &Path, bytes: &[u8], spec: &ModelSpec) -> Result<ParamVector> {
    let mut r = ByteReader::open(path, bytes, MODEL_MAGIC)?;
    let count = r.u64()? as usize;
    if count != spec.param_count() {
        return Err(Error::Validation {
            path: path.to_path_buf(),
            reason: format!("blob holds {count} parameters, manifest architecture needs {}", spec.param_count()),
        });
    }
    let values = r.f32s(count)?;
    r.finish()?;
    ParamVector::new(spec, values).map_err(|e| Error::Validation {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes the parameter blob and its manifest sidecar. `extra` is merged into
/// the sidecar (training metrics, resolved configuration).
pub fn save_model(spec: &ModelSpec, params: &ParamVector, seed: u64, path: &Path, extra: toml::Table) -> Result<()> {
    let mut table = toml::Table::new();
    table.insert(
        "layer_dims".into(),
        toml::Value::Array(spec.layer_dims().iter().map(|&d| toml::Value::Integer(d as i64)).collect()),
    );
    table.insert("activation".into(), spec.activation().as_str().into());
    table.insert("affine_norm".into(), spec.affine_norm().into());
    table.insert("seed".into(), toml::Value::Integer(seed as i64));
    table.insert("param_count".into(), toml::Value::Integer(spec.param_count() as i64));
    table.extend(extra);
    format::write_atomic(path, &encode_params(params))?;
    format::write_meta(path, "model", table)
}

pub fn load_manifest(path: &Path) -> Result<ModelManifest> {
    let meta = format::read_meta(path)?;
    let mp = format::meta_path(path);
    let bad = |reason: &str| Error::Format {
        path: mp.clone(),
        reason: reason.to_string(),
    };
    let dims = meta
        .get("layer_dims")
        .and_then(|v| v.as_array())
        .ok_or_else(|| bad("missing layer_dims"))?
        .iter()
        .map(|v| v.as_integer().filter(|d| *d > 0).map(|d| d as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| bad("layer_dims must be positive integers"))?;
    let activation: Activation = meta
        .get("activation")
        .and_then(|v| v.as_str())
        .ok_or_else(|| bad("missing activation"))?
        .parse()
        .map_err(|_| bad("unknown activation"))?;
    let affine = meta.get("affine_norm").and_then(|v| v.as_bool()).unwrap_or(false);
    let seed = meta.get("seed").and_then(|v| v.as_integer()).unwrap_or(0) as u64;
    let spec = ModelSpec::new(dims, activation, affine).map_err(|e| bad(&e.to_string()))?;
    Ok(ModelManifest { spec, seed })
}

pub fn load_model(path: &Path) -> Result<(ModelSpec, ParamVector)> {
    let manifest = load_manifest(path)?;
    let bytes = format::read_file(path)?;
    let params = decode_params(path, &bytes, &manifest.spec)?;
    Ok((manifest.spec, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gso");
        let spec = ModelSpec::new(vec![3, 4, 2], Activation::Relu, true).unwrap();
        let mut params = ParamVector::init_uniform(&spec, 5);
        params.snap_to_f32();
        save_model(&spec, &params, 5, &path, toml::Table::new()).unwrap();
        let (spec2, params2) = load_model(&path).unwrap();
        assert_eq!(spec2, spec);
        assert_eq!(params2, params);
    }

    #[test]
    fn count_mismatch_is_a_validation_error() {
        let spec = ModelSpec::mlp(&[2, 2]).unwrap();
        let bytes = encode_params(&ParamVector::zeros(&spec));
        let other = ModelSpec::mlp(&[3, 2]).unwrap();
        assert!(matches!(
            decode_params(Path::new("m"), &bytes, &other),
            Err(Error::Validation { .. })
        ));
    }
}
