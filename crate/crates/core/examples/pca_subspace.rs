//! Top-K principal directions of the normalized gradients by block power
//! iteration, with explained variance.

use gradood::evalharness::{generate_synth, SynthSpec};
use gradood::micronet::{train_classifier, ModelSpec, TrainConfig};
use gradood::subspace::{extract_pca_subspace, spectrum, PcaConfig};

fn main() -> gradood::Result<()> {
    let data = generate_synth(&SynthSpec::benchmark(0))?;
    let spec = ModelSpec::mlp(&[8, 16, 16, 4])?;
    let params = train_classifier(&spec, &data.train, &TrainConfig::default())?.params;

    let cfg = PcaConfig {
        iters: 200,
        ..PcaConfig::default()
    };
    let out = extract_pca_subspace(&spec, &params, &data.train, 16, &cfg)?;
    println!(
        "{} iterations, converged {}, last angle {:.2e}",
        out.iterations, out.converged, out.last_angle
    );
    let s = spectrum(&out.subspace)?;
    for k in [1, 4, 8, 16] {
        println!("K = {k:>2}: cumulative explained variance {:.4}", s.cumulative_ratio[k - 1]);
    }
    Ok(())
}
