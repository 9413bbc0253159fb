//! Synthetic ID/OOD benchmarks, threshold calibration, FPR95/AUROC, and the
//! end-to-end evaluation pipeline.

mod metrics;
mod pipeline;
mod stats;
mod synth;

pub use metrics::{auroc, calibrate_lambda, fpr95, fpr_at, metrics, Metrics, DEFAULT_TPR_TARGET};
pub use pipeline::{
    fit_subspace, run_pipeline, DatasetMetrics, EvalReport, HeadAccuracy, HistogramEntry, PipelineConfig,
    PipelineInputs, Source, StreamReport, SubspaceSummary,
};
pub use stats::{class_cosine_report, histogram, CosineReport, Histogram};
pub use synth::{generate_synth, IdComponent, OodComponent, SynthData, SynthSpec};
