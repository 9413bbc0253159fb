//! Every detector on the same K=8 gradient embedding: fit on train, score the
//! ID test set and the far OOD set.

use gradood::detectors::{DetectorConfig, DetectorKind, DetectorModel};
use gradood::evalharness::{generate_synth, metrics, SynthSpec, DEFAULT_TPR_TARGET};
use gradood::micronet::{train_classifier, ModelSpec, TrainConfig};
use gradood::subspace::{embed_batch, extract_pca_subspace, PcaConfig};

fn main() -> gradood::Result<()> {
    let data = generate_synth(&SynthSpec::benchmark(0))?;
    let spec = ModelSpec::mlp(&[8, 16, 16, 4])?;
    let params = train_classifier(&spec, &data.train, &TrainConfig::default())?.params;
    let sub = extract_pca_subspace(&spec, &params, &data.train, 8, &PcaConfig::default())?.subspace;

    let train = embed_batch(&spec, &params, &sub, &data.train)?;
    let id = embed_batch(&spec, &params, &sub, &data.id_test)?;
    let far = embed_batch(&spec, &params, &sub, &data.ood[0].1)?;
    let cfg = DetectorConfig {
        clip_dims: 4,
        ..DetectorConfig::default()
    };
    for kind in DetectorKind::ALL {
        let det = DetectorModel::fit(kind, &train, data.train.require_labels()?, 4, &cfg)?;
        let m = metrics(&det.score_rows(&id)?, &det.score_rows(&far)?, DEFAULT_TPR_TARGET)?;
        println!("{:>6}: FPR95 {:.3}  AUROC {:.4}", kind.as_str(), m.fpr95, m.auroc);
    }
    Ok(())
}
