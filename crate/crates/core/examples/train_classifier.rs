//! Train the MLP classifier on the synthetic benchmark and report accuracy.

use gradood::evalharness::{generate_synth, SynthSpec};
use gradood::micronet::{accuracy, train_classifier, ModelSpec, TrainConfig};

fn main() -> gradood::Result<()> {
    let data = generate_synth(&SynthSpec::benchmark(0))?;
    let spec = ModelSpec::mlp(&[8, 16, 16, 4])?;
    let out = train_classifier(&spec, &data.train, &TrainConfig::default())?;
    println!("{} parameters", spec.param_count());
    println!("train accuracy {:.4}", out.train_accuracy);
    println!("test accuracy  {:.4}", accuracy(&spec, &out.params, &data.id_test)?);
    Ok(())
}
