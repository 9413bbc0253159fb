//! Save and reload every artifact kind in a temp dir; show that a flipped
//! byte is caught.

use gradood::detectors::{self, DetectorConfig, DetectorKind, DetectorModel};
use gradood::evalharness::{generate_synth, SynthSpec};
use gradood::format;
use gradood::micronet::{self, train_classifier, ModelSpec, TrainConfig};
use gradood::subspace::{self, embed_batch, extract_pca_subspace, PcaConfig};

fn main() -> gradood::Result<()> {
    let dir = std::env::temp_dir().join(format!("gso-artifacts-{}", std::process::id()));
    let data = generate_synth(&SynthSpec::benchmark(0))?;
    let spec = ModelSpec::mlp(&[8, 16, 16, 4])?;
    let params = train_classifier(&spec, &data.train, &TrainConfig::default())?.params;

    let model = dir.join("model.gso");
    micronet::save_model(&spec, &params, 0, &model, toml::Table::new())?;
    assert_eq!(micronet::load_model(&model)?.1, params);

    let train = dir.join("train.gso");
    format::save_dataset(&data.train, &train)?;
    assert_eq!(format::load_dataset(&train)?, data.train);

    let sub = extract_pca_subspace(&spec, &params, &data.train, 8, &PcaConfig::default())?.subspace;
    let sub_path = dir.join("subspace.gso");
    subspace::save_subspace(&sub, &sub_path)?;
    assert_eq!(subspace::load_subspace(&sub_path)?, sub);

    let emb = embed_batch(&spec, &params, &sub, &data.train)?;
    let det = DetectorModel::fit(DetectorKind::Maha, &emb, data.train.require_labels()?, 4, &DetectorConfig::default())?;
    let det_path = dir.join("maha.gso");
    detectors::save_detector(&det, &det_path)?;
    assert_eq!(detectors::load_detector(&det_path)?, det);

    for p in [&model, &train, &sub_path, &det_path] {
        println!("{} ({} bytes)", p.display(), std::fs::metadata(p).map(|m| m.len()).unwrap_or(0));
    }

    let mut bytes = std::fs::read(&sub_path).map_err(|e| gradood::Error::io(&sub_path, e))?;
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x01;
    format::write_atomic(&sub_path, &bytes)?;
    let err = subspace::load_subspace(&sub_path).unwrap_err();
    println!("after corruption: {err} (exit code {})", err.exit_code());
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
