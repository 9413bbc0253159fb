//! Synthetic benchmark end to end: train a small classifier, fit a K=16
//! gradient subspace, score every detector, print the metric table.

use gradood::evalharness::{generate_synth, run_pipeline, PipelineConfig, PipelineInputs, SynthSpec};
use gradood::micronet::{train_classifier, ModelSpec, TrainConfig};

fn main() -> gradood::Result<()> {
    let data = generate_synth(&SynthSpec::benchmark(0))?;
    let spec = ModelSpec::mlp(&[8, 16, 16, 4])?;
    let trained = train_classifier(&spec, &data.train, &TrainConfig::default())?;
    println!("train accuracy {:.4}", trained.train_accuracy);

    let config = PipelineConfig {
        k: 16,
        ..PipelineConfig::default()
    };
    let inputs = PipelineInputs {
        spec: &spec,
        params: &trained.params,
        train: &data.train,
        id_test: &data.id_test,
        ood: &data.ood,
    };
    let report = run_pipeline(inputs, None, &config, None)?;
    print!("{}", report.to_csv());
    if let Some(c) = &report.class_cosine {
        println!("cosine within {:.4} cross {:.4}", c.within, c.cross);
    }
    Ok(())
}
