use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{self, calibrate_lambda, Metrics};
use super::stats::{class_cosine_report, histogram, CosineReport, Histogram};
use crate::detectors::{self, DetectorConfig, DetectorKind, DetectorModel};
use crate::error::{Error, Result, StageExt};
use crate::format::{self, TOOL_NAME, TOOL_VERSION};
use crate::gradembed;
use crate::linalg::Matrix;
use crate::micronet::{self, ModelSpec, ParamVector, SampleBatch};
use crate::subspace::{self, PcaConfig, Subspace, SubspaceKind};

/// Where a score stream's embeddings come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Projected normalized energy gradients (backward pass).
    Gradient,
    /// Penultimate-layer features (forward pass only).
    Feature,
    /// `feature + α·gradient`.
    Ensemble,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Gradient => "gradient",
            Source::Feature => "feature",
            Source::Ensemble => "ensemble",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub subspace_kind: SubspaceKind,
    pub k: usize,
    pub epsilon: f64,
    /// Orthonormalize class-mean bases.
    pub orthonormalize: bool,
    pub pca: PcaConfig,
    pub detectors: Vec<DetectorKind>,
    pub detector: DetectorConfig,
    /// Also score penultimate features and the feature/gradient ensemble.
    pub ensemble: bool,
    pub alpha: f64,
    pub tpr_target: f64,
    pub histogram_bins: usize,
    /// Report within- vs cross-class gradient cosine similarity on train data.
    pub cosine_report: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            subspace_kind: SubspaceKind::Pca,
            k: 200,
            epsilon: gradembed::DEFAULT_EPSILON,
            orthonormalize: false,
            pca: PcaConfig::default(),
            detectors: DetectorKind::ALL.to_vec(),
            detector: DetectorConfig::default(),
            ensemble: true,
            alpha: detectors::DEFAULT_ALPHA,
            tpr_target: metrics::DEFAULT_TPR_TARGET,
            histogram_bins: 30,
            cosine_report: true,
        }
    }
}

/// Model and data for one evaluation run.
#[derive(Debug, Clone, Copy)]
pub struct PipelineInputs<'a> {
    pub spec: &'a ModelSpec,
    pub params: &'a ParamVector,
    pub train: &'a SampleBatch,
    pub id_test: &'a SampleBatch,
    pub ood: &'a [(String, SampleBatch)],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSummary {
    pub kind: SubspaceKind,
    pub k: usize,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub dataset: String,
    pub fpr95: f64,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub detector: DetectorKind,
    pub source: Source,
    pub lambda_at_95tpr: f64,
    pub datasets: Vec<DatasetMetrics>,
    /// Arithmetic mean over datasets.
    pub average: Metrics,
}

impl StreamReport {
    pub fn name(&self) -> String {
        format!("{}-{}", self.source.as_str(), self.detector)
    }

    pub fn dataset(&self, name: &str) -> Option<&DatasetMetrics> {
        self.datasets.iter().find(|d| d.dataset == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramEntry {
    pub stream: String,
    pub dataset: String,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadAccuracy {
    pub source: Source,
    pub train: f64,
    /// Absent when the ID test set is unlabeled.
    pub id_test: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub conventions: Vec<String>,
    /// Published large-scale numbers, for orientation only; not reproducible
    /// on synthetic data.
    pub paper_reference: Vec<String>,
    pub subspace: SubspaceSummary,
    pub head_accuracy: Vec<HeadAccuracy>,
    pub streams: Vec<StreamReport>,
    pub class_cosine: Option<CosineReport>,
    pub histograms: Vec<HistogramEntry>,
}

impl EvalReport {
    pub fn stream(&self, source: Source, detector: DetectorKind) -> Option<&StreamReport> {
        self.streams.iter().find(|s| s.source == source && s.detector == detector)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::data(format!("cannot encode report: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::data(format!("cannot parse report: {e}")))
    }

    /// Flat `dataset,detector,fpr95,auroc` table including `average` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,detector,fpr95,auroc\n");
        for s in &self.streams {
            let name = s.name();
            for d in &s.datasets {
                out.push_str(&format!("{},{},{},{}\n", d.dataset, name, d.fpr95, d.auroc));
            }
            out.push_str(&format!("average,{},{},{}\n", name, s.average.fpr95, s.average.auroc));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        format::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = format::read_file(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::Format {
            path: path.to_path_buf(),
            reason: "report is not UTF-8".into(),
        })?;
        serde_json::from_str(text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: format!("unreadable report: {e}"),
        })
    }
}

const CONVENTIONS: [&str; 3] = [
    "threshold: lambda is the floor(n_id*(1-tpr))-th smallest ID score (0-indexed, no interpolation); ID iff score >= lambda",
    "fpr95: fraction of OOD scores >= lambda",
    "auroc: Mann-Whitney statistic with half credit for ties",
];

const PAPER_REFERENCE: [&str; 3] = [
    "ImageNet-scale results, not reproducible on synthetic data",
    "gradient ReAct: FPR95 23.03, AUROC 95.45",
    "forward/backward ensemble: FPR95 19.55, AUROC 96.12",
];

/// Fits the normalization and the configured subspace on training data.
pub fn fit_subspace(
    spec: &ModelSpec,
    params: &ParamVector,
    train: &SampleBatch,
    config: &PipelineConfig,
) -> Result<(Subspace, SubspaceSummary)> {
    let stats = gradembed::fit_norm_stats_with(spec, params, train, config.epsilon, config.pca.chunk_size)
        .stage("normalize")?;
    match config.subspace_kind {
        SubspaceKind::Pca => {
            let out = subspace::extract_pca_subspace_with_stats(spec, params, train, stats, config.k, &config.pca)
                .stage("subspace")?;
            if !out.converged {
                log::warn!(
                    "power iteration stopped after {} iterations (principal angle {:.3e})",
                    out.iterations,
                    out.last_angle
                );
            }
            let summary = SubspaceSummary {
                kind: SubspaceKind::Pca,
                k: out.subspace.k(),
                iterations: Some(out.iterations),
                converged: Some(out.converged),
            };
            Ok((out.subspace, summary))
        }
        SubspaceKind::ClassMean => {
            let labels = train.require_labels().stage("subspace")?;
            let grads = gradembed::normalized_gradients(spec, params, train, &stats).stage("subspace")?;
            let sub = subspace::extract_classmean_subspace(&grads, labels, spec.num_classes(), stats, config.orthonormalize)
                .stage("subspace")?;
            let summary = SubspaceSummary {
                kind: SubspaceKind::ClassMean,
                k: sub.k(),
                iterations: None,
                converged: None,
            };
            Ok((sub, summary))
        }
    }
}

/// Embeddings of every split in one source space.
struct Space {
    source: Source,
    train: Matrix,
    id_test: Matrix,
    ood: Vec<Matrix>,
}

/// Clip dimension clamped to the embedding width.
fn config_for(config: &DetectorConfig, width: usize, source: Source) -> DetectorConfig {
    let mut c = config.clone();
    if c.clip_dims > width {
        log::warn!(
            "{} embeddings have {width} dimensions; clipping the last {width} instead of {}",
            source.as_str(),
            c.clip_dims
        );
        c.clip_dims = width;
    }
    c
}

type Streams = Vec<(DetectorKind, Source, Vec<f64>, Vec<Vec<f64>>)>;

fn score_space(
    space: &Space,
    labels: &[usize],
    id_labels: Option<&[usize]>,
    num_classes: usize,
    config: &PipelineConfig,
    keep: Option<&Path>,
    head_acc: &mut Vec<HeadAccuracy>,
) -> Result<Streams> {
    let dcfg = config_for(&config.detector, space.train.cols(), space.source);
    let needs_head = config.detectors.iter().any(|k| k.uses_head());
    let head = if needs_head {
        let out = detectors::train_head(&space.train, labels, num_classes, &dcfg.head).stage("fit-detector")?;
        let id_test = match id_labels {
            Some(l) => Some(detectors::head_accuracy(&out.head, &space.id_test, l).stage("fit-detector")?),
            None => None,
        };
        log::info!("{} head: train accuracy {:.4}", space.source.as_str(), out.train_accuracy);
        head_acc.push(HeadAccuracy {
            source: space.source,
            train: out.train_accuracy,
            id_test,
        });
        Some(out.head)
    } else {
        None
    };
    let mut streams = Vec::new();
    for &kind in &config.detectors {
        let model = match (&head, kind.uses_head()) {
            (Some(h), true) => DetectorModel::from_head(kind, h.clone(), &space.train, &dcfg),
            _ => DetectorModel::fit(kind, &space.train, labels, num_classes, &dcfg),
        }
        .stage("fit-detector")?;
        if let Some(dir) = keep {
            detectors::save_detector(&model, &dir.join(format!("detector-{}-{kind}.gso", space.source.as_str())))
                .stage("keep")?;
        }
        let id = model.score_rows(&space.id_test).stage("score")?;
        let ood = space
            .ood
            .iter()
            .map(|m| model.score_rows(m))
            .collect::<Result<Vec<_>>>()
            .stage("score")?;
        streams.push((kind, space.source, id, ood));
    }
    Ok(streams)
}

fn save_matrix(m: &Matrix, labels: Option<&[usize]>, path: &Path) -> Result<()> {
    let batch = SampleBatch::new(m.clone(), labels.map(<[usize]>::to_vec))?;
    format::save_dataset(&batch, path)
}

/// End to end: normalize → project → fit detectors on train embeddings →
/// score the test streams → metrics. A `subspace` is fitted when not given.
/// With `keep`, intermediates (subspace, embeddings, detectors, score streams)
/// are written under that directory.
pub fn run_pipeline(
    inputs: PipelineInputs<'_>,
    subspace: Option<Subspace>,
    config: &PipelineConfig,
    keep: Option<&Path>,
) -> Result<EvalReport> {
    let PipelineInputs {
        spec,
        params,
        train,
        id_test,
        ood,
    } = inputs;
    if ood.is_empty() {
        return Err(Error::usage("evaluation needs at least one OOD set"));
    }
    if config.detectors.is_empty() {
        return Err(Error::usage("no detectors selected"));
    }
    if id_test.len() < 20 {
        return Err(Error::usage(format!("ID test set has {} samples; at least 20 are needed", id_test.len())));
    }
    let labels = train.require_labels().stage("fit-detector")?;
    let c = spec.num_classes();
    let (sub, summary) = match subspace {
        Some(s) => {
            let summary = SubspaceSummary {
                kind: s.kind(),
                k: s.k(),
                iterations: None,
                converged: None,
            };
            (s, summary)
        }
        None => fit_subspace(spec, params, train, config)?,
    };
    if sub.dim() != spec.param_count() {
        return Err(Error::shape("subspace does not match the model's parameter count").at("embed"));
    }
    log::info!("subspace: {} with K = {}", summary.kind.as_str(), summary.k);
    if let Some(dir) = keep {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        subspace::save_subspace(&sub, &dir.join("subspace.gso")).stage("keep")?;
    }

    let embed = |b: &SampleBatch| subspace::embed_batch(spec, params, &sub, b);
    let gradient = Space {
        source: Source::Gradient,
        train: embed(train).stage("embed")?,
        id_test: embed(id_test).stage("embed")?,
        ood: ood.iter().map(|(_, b)| embed(b)).collect::<Result<_>>().stage("embed")?,
    };
    let mut spaces = vec![gradient];
    if config.ensemble {
        let feat = |b: &SampleBatch| micronet::penultimate_features(spec, params, b);
        spaces.push(Space {
            source: Source::Feature,
            train: feat(train).stage("features")?,
            id_test: feat(id_test).stage("features")?,
            ood: ood.iter().map(|(_, b)| feat(b)).collect::<Result<_>>().stage("features")?,
        });
    }
    if let Some(dir) = keep {
        for s in &spaces {
            let tag = s.source.as_str();
            save_matrix(&s.train, Some(labels), &dir.join(format!("embed-{tag}-train.gso"))).stage("keep")?;
            save_matrix(&s.id_test, id_test.labels(), &dir.join(format!("embed-{tag}-id_test.gso"))).stage("keep")?;
            for ((name, _), m) in ood.iter().zip(&s.ood) {
                save_matrix(m, None, &dir.join(format!("embed-{tag}-{name}.gso"))).stage("keep")?;
            }
        }
    }

    let mut head_accuracy = Vec::new();
    let mut streams: Streams = Vec::new();
    for s in &spaces {
        streams.extend(score_space(s, labels, id_test.labels(), c, config, keep, &mut head_accuracy)?);
    }
    if config.ensemble {
        let n = config.detectors.len();
        for i in 0..n {
            let (kind, _, g_id, g_ood) = &streams[i];
            let (_, _, f_id, f_ood) = &streams[n + i];
            let comb = |f: &[f64], g: &[f64]| -> Vec<f64> {
                f.iter().zip(g).map(|(a, b)| detectors::score_ensemble(*a, *b, config.alpha)).collect()
            };
            let id = comb(f_id, g_id);
            let oods = f_ood.iter().zip(g_ood).map(|(f, g)| comb(f, g)).collect();
            streams.push((*kind, Source::Ensemble, id, oods));
        }
    }

    let mut reports = Vec::new();
    let mut histograms = Vec::new();
    for (kind, source, id, oods) in &streams {
        let lambda = calibrate_lambda(id, config.tpr_target).stage("metrics")?;
        let mut datasets = Vec::new();
        for ((name, _), scores) in ood.iter().zip(oods) {
            let m = metrics::metrics(id, scores, config.tpr_target).stage("metrics")?;
            datasets.push(DatasetMetrics {
                dataset: name.clone(),
                fpr95: m.fpr95,
                auroc: m.auroc,
            });
        }
        let k = datasets.len() as f64;
        let average = Metrics {
            fpr95: datasets.iter().map(|d| d.fpr95).sum::<f64>() / k,
            auroc: datasets.iter().map(|d| d.auroc).sum::<f64>() / k,
        };
        let stream = StreamReport {
            detector: *kind,
            source: *source,
            lambda_at_95tpr: lambda,
            datasets,
            average,
        };
        let name = stream.name();
        if let Some(dir) = keep {
            let col = |v: &[f64]| Matrix::from_vec(v.len(), 1, v.to_vec());
            save_matrix(&col(id)?, None, &dir.join(format!("scores-{name}-id_test.gso"))).stage("keep")?;
            for ((ds, _), s) in ood.iter().zip(oods) {
                save_matrix(&col(s)?, None, &dir.join(format!("scores-{name}-{ds}.gso"))).stage("keep")?;
            }
        }
        let sets = std::iter::once(("id_test", &id[..])).chain(ood.iter().zip(oods).map(|((n, _), s)| (n.as_str(), &s[..])));
        for (ds, scores) in sets {
            histograms.push(HistogramEntry {
                stream: name.clone(),
                dataset: ds.to_string(),
                histogram: histogram(scores, config.histogram_bins).stage("metrics")?,
            });
        }
        log::info!("{name}: average FPR95 {:.4}, AUROC {:.4}", average.fpr95, average.auroc);
        reports.push(stream);
    }

    let class_cosine = if config.cosine_report {
        let grads = gradembed::normalized_gradients(spec, params, train, sub.norm_stats()).stage("cosine")?;
        Some(class_cosine_report(&grads, labels, c).stage("cosine")?)
    } else {
        None
    };

    Ok(EvalReport {
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        config: serde_json::to_value(config).map_err(|e| Error::data(e.to_string()))?,
        conventions: CONVENTIONS.iter().map(|s| s.to_string()).collect(),
        paper_reference: PAPER_REFERENCE.iter().map(|s| s.to_string()).collect(),
        subspace: summary,
        head_accuracy,
        streams: reports,
        class_cosine,
        histograms,
    })
}
