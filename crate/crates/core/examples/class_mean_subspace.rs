//! Class-mean subspace (K = C) and the within- vs cross-class cosine report.

use gradood::evalharness::{class_cosine_report, generate_synth, SynthSpec};
use gradood::gradembed;
use gradood::micronet::{train_classifier, ModelSpec, TrainConfig};
use gradood::subspace::{embed_batch, extract_classmean_subspace};

fn main() -> gradood::Result<()> {
    let data = generate_synth(&SynthSpec::benchmark(0))?;
    let spec = ModelSpec::mlp(&[8, 16, 16, 4])?;
    let params = train_classifier(&spec, &data.train, &TrainConfig::default())?.params;

    let stats = gradembed::fit_norm_stats(&spec, &params, &data.train)?;
    let g = gradembed::normalized_gradients(&spec, &params, &data.train, &stats)?;
    let labels = data.train.require_labels()?;
    let sub = extract_classmean_subspace(&g, labels, 4, stats, false)?;

    let report = class_cosine_report(&g, labels, 4)?;
    println!("within-class cosine {:.4}, cross-class {:.4}", report.within, report.cross);
    for (c, v) in report.per_class_within.iter().enumerate() {
        println!("  class {c}: {v:.4}");
    }
    let emb = embed_batch(&spec, &params, &sub, &data.id_test)?;
    println!("first test embedding {:?}", emb.row(0));
    Ok(())
}
