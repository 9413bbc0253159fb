//! Eigenvalue spectrum of the gradient covariance as CSV, for plotting.

use gradood::evalharness::{generate_synth, SynthSpec};
use gradood::micronet::{train_classifier, ModelSpec, TrainConfig};
use gradood::subspace::{extract_pca_subspace, spectrum, PcaConfig};

fn main() -> gradood::Result<()> {
    let data = generate_synth(&SynthSpec::benchmark(0))?;
    let spec = ModelSpec::mlp(&[8, 16, 16, 4])?;
    let params = train_classifier(&spec, &data.train, &TrainConfig::default())?.params;
    let out = extract_pca_subspace(&spec, &params, &data.train, 32, &PcaConfig::default())?;
    print!("{}", spectrum(&out.subspace)?.to_csv());
    Ok(())
}
