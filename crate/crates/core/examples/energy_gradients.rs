//! Label-free energy gradients: per-sample ∇θE, the normalization statistics
//! fit on ID data, and implicit Jacobian products without materializing G.

use gradood::evalharness::{generate_synth, SynthSpec};
use gradood::gradembed;
use gradood::linalg::Matrix;
use gradood::micronet::{self, train_classifier, ModelSpec, TrainConfig};

fn main() -> gradood::Result<()> {
    let data = generate_synth(&SynthSpec::benchmark(0))?;
    let spec = ModelSpec::mlp(&[8, 16, 16, 4])?;
    let params = train_classifier(&spec, &data.train, &TrainConfig::default())?.params;

    let x = data.id_test.input(0);
    let g = micronet::per_sample_energy_gradient(&spec, &params, x)?;
    println!("E(x) = {:.6}, |∇E| = {:.6}", gradembed::energy(&spec, &params, x)?, gradood::linalg::norm2(&g));

    let stats = gradembed::fit_norm_stats(&spec, &params, &data.train)?;
    let ood = &data.ood[0].1;
    for (name, batch) in [("id", &data.id_test), ("far", ood)] {
        let gn = gradembed::normalized_gradients(&spec, &params, batch, &stats)?;
        let mean_norm = gn.row_iter().map(gradood::linalg::norm2).sum::<f64>() / gn.rows() as f64;
        println!("{name:>4}: mean normalized gradient norm {mean_norm:.3}");
    }

    // J·v for a single direction, through one forward/backward trace per sample
    let mut v = Matrix::zeros(spec.param_count(), 1);
    v.set(0, 0, 1.0);
    let jv = micronet::param_jvp(&spec, &params, &data.id_test, &v)?;
    println!("∂E/∂θ₀ on the first 3 test samples: {:?}", &jv.as_slice()[..3]);
    Ok(())
}
