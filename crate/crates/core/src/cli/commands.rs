use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::Command;
use crate::detectors::{self, DetectorModel};
use crate::error::{Error, Result, StageExt};
use crate::evalharness::{self, PipelineInputs, SynthSpec};
use crate::format;
use crate::linalg::Matrix;
use crate::micronet::{self, ModelSpec, SampleBatch};
use crate::subspace;

pub(super) fn dispatch(command: &Command, config: &RunConfig) -> Result<()> {
    match command {
        Command::Synth(_) => cmd_synth(config),
        Command::Train(_) => cmd_train(config),
        Command::FitSubspace(_) => cmd_fit_subspace(config),
        Command::Embed(_) => cmd_embed(config),
        Command::FitDetector(_) => cmd_fit_detector(config),
        Command::Score(_) => cmd_score(config),
        Command::Eval(_) => cmd_eval(config),
        Command::Spectrum(_) => cmd_spectrum(config),
    }
}

/// Sidecar table: the resolved configuration plus command-specific entries.
fn meta(config: &RunConfig, entries: Vec<(&str, toml::Value)>) -> Result<toml::Table> {
    let mut t = toml::Table::new();
    for (k, v) in entries {
        t.insert(k.to_string(), v);
    }
    t.insert("config".into(), toml::Value::Table(config.echo()?));
    Ok(t)
}

fn write_dataset(batch: &SampleBatch, path: &Path, config: &RunConfig, entries: Vec<(&str, toml::Value)>) -> Result<()> {
    format::save_dataset(batch, path)?;
    format::write_meta(path, "dataset", meta(config, entries)?)
}

fn num_classes(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

fn from_data_dir(config: &RunConfig, explicit: &Option<PathBuf>, file: &str, flag: &str) -> Result<PathBuf> {
    match (explicit, &config.data_dir) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(dir)) => Ok(dir.join(file)),
        (None, None) => Err(Error::usage(format!("--{flag} (or --data-dir) is required"))),
    }
}

/// OOD sets from `--ood name=path` pairs, else every `ood-*.gso` in the data
/// directory, sorted by name.
fn ood_paths(config: &RunConfig) -> Result<Vec<(String, PathBuf)>> {
    if !config.ood.is_empty() {
        return config
            .ood
            .iter()
            .map(|s| {
                s.split_once('=')
                    .map(|(n, p)| (n.to_string(), PathBuf::from(p)))
                    .filter(|(n, _)| !n.is_empty())
                    .ok_or_else(|| Error::usage(format!("--ood expects name=path, got {s:?}")))
            })
            .collect();
    }
    let dir = config
        .data_dir
        .as_ref()
        .ok_or_else(|| Error::usage("--ood (or --data-dir) is required"))?;
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(set) = name.strip_prefix("ood-").and_then(|n| n.strip_suffix(".gso")) {
            out.push((set.to_string(), path.clone()));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::usage(format!("no ood-*.gso files in {}", dir.display())));
    }
    Ok(out)
}

fn cmd_synth(config: &RunConfig) -> Result<()> {
    let out = config.path(&config.out, "out")?;
    let spec = match &config.synth_spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<SynthSpec>(&text).map_err(|e| Error::config(format!("{}: {e}", p.display())))?
        }
        None => SynthSpec::benchmark(config.seed),
    };
    let data = evalharness::generate_synth(&spec).stage("synth")?;
    let seed = toml::Value::Integer(spec.seed as i64);
    write_dataset(&data.train, &out.join("train.gso"), config, vec![("split", "train".into()), ("seed", seed.clone())])?;
    write_dataset(&data.id_test, &out.join("id_test.gso"), config, vec![("split", "id_test".into()), ("seed", seed.clone())])?;
    for (name, batch) in &data.ood {
        let entries = vec![("split", "ood".into()), ("set", name.as_str().into()), ("seed", seed.clone())];
        write_dataset(batch, &out.join(format!("ood-{name}.gso")), config, entries)?;
    }
    log::info!("synth: wrote {} train, {} test, {} OOD sets to {}", data.train.len(), data.id_test.len(), data.ood.len(), out.display());
    Ok(())
}

fn cmd_train(config: &RunConfig) -> Result<()> {
    let out = config.path(&config.out, "out")?;
    let train = format::load_dataset(&from_data_dir(config, &config.train, "train.gso", "train")?).stage("load")?;
    let labels = train.require_labels()?;
    let mut dims = vec![train.dim()];
    dims.extend(&config.hidden_dims);
    dims.push(num_classes(labels));
    let spec = ModelSpec::new(dims, micronet::Activation::Relu, config.affine_norm)?;
    let outcome = micronet::train_classifier(&spec, &train, &config.train_config()).stage("train")?;
    log::info!("train: accuracy {:.4}, loss {:.4}", outcome.train_accuracy, outcome.final_loss);
    let extra = meta(
        config,
        vec![
            ("train_accuracy", outcome.train_accuracy.into()),
            ("final_loss", outcome.final_loss.into()),
        ],
    )?;
    micronet::save_model(&spec, &outcome.params, config.seed, out, extra)
}

fn cmd_fit_subspace(config: &RunConfig) -> Result<()> {
    let out = config.path(&config.out, "out")?;
    let (spec, params) = micronet::load_model(config.path(&config.model, "model")?).stage("load")?;
    let train = format::load_dataset(&from_data_dir(config, &config.train, "train.gso", "train")?).stage("load")?;
    let (sub, summary) = evalharness::fit_subspace(&spec, &params, &train, &config.pipeline_config())?;
    subspace::save_subspace(&sub, out)?;
    let mut entries = vec![
        ("kind", toml::Value::String(summary.kind.as_str().into())),
        ("k", (summary.k as i64).into()),
    ];
    if let (Some(it), Some(conv)) = (summary.iterations, summary.converged) {
        entries.push(("iterations", (it as i64).into()));
        entries.push(("converged", conv.into()));
    }
    format::write_meta(out, "subspace", meta(config, entries)?)
}

fn cmd_embed(config: &RunConfig) -> Result<()> {
    let out = config.path(&config.out, "out")?;
    let (spec, params) = micronet::load_model(config.path(&config.model, "model")?).stage("load")?;
    let sub = subspace::load_subspace(config.path(&config.subspace, "subspace")?).stage("load")?;
    let data = format::load_dataset(config.path(&config.data, "data")?).stage("load")?;
    let emb = subspace::embed_batch(&spec, &params, &sub, &data).stage("embed")?;
    let batch = SampleBatch::new(emb, data.labels().map(<[usize]>::to_vec))?;
    write_dataset(&batch, out, config, vec![("content", "embeddings".into())])
}

fn cmd_fit_detector(config: &RunConfig) -> Result<()> {
    let out = config.path(&config.out, "out")?;
    let emb = format::load_dataset(config.path(&config.embeddings, "embeddings")?).stage("load")?;
    let labels = emb.require_labels()?;
    let dcfg = config.detector_config();
    let kind = config.detector;
    let mut entries = vec![("detector", kind.as_str().into())];
    let model = if kind.uses_head() {
        let head = detectors::train_head(emb.inputs(), labels, num_classes(labels), &dcfg.head).stage("fit-detector")?;
        entries.push(("head_train_accuracy", head.train_accuracy.into()));
        DetectorModel::from_head(kind, head.head, emb.inputs(), &dcfg)
    } else {
        DetectorModel::fit(kind, emb.inputs(), labels, num_classes(labels), &dcfg)
    }
    .stage("fit-detector")?;
    detectors::save_detector(&model, out)?;
    format::write_meta(out, "detector", meta(config, entries)?)
}

fn cmd_score(config: &RunConfig) -> Result<()> {
    let out = config.path(&config.out, "out")?;
    let model = detectors::load_detector(config.path(&config.detector_file, "detector-file")?).stage("load")?;
    let emb = format::load_dataset(config.path(&config.embeddings, "embeddings")?).stage("load")?;
    let scores = model.score_rows(emb.inputs()).stage("score")?;
    let n = scores.len();
    let batch = SampleBatch::unlabeled(Matrix::from_vec(n, 1, scores)?)?;
    write_dataset(&batch, out, config, vec![("content", "scores".into()), ("detector", model.kind().as_str().into())])
}

fn cmd_eval(config: &RunConfig) -> Result<()> {
    let out = config.path(&config.out, "out")?;
    let (spec, params) = micronet::load_model(config.path(&config.model, "model")?).stage("load")?;
    let train = format::load_dataset(&from_data_dir(config, &config.train, "train.gso", "train")?).stage("load")?;
    let id_test = format::load_dataset(&from_data_dir(config, &config.id_test, "id_test.gso", "id-test")?).stage("load")?;
    let ood = ood_paths(config)?
        .into_iter()
        .map(|(name, p)| Ok((name, format::load_dataset(&p).stage("load")?)))
        .collect::<Result<Vec<_>>>()?;
    let sub = match &config.subspace {
        Some(p) => Some(subspace::load_subspace(p).stage("load")?),
        None => None,
    };
    let inputs = PipelineInputs {
        spec: &spec,
        params: &params,
        train: &train,
        id_test: &id_test,
        ood: &ood,
    };
    let mut report = evalharness::run_pipeline(inputs, sub, &config.pipeline_config(), config.keep_intermediates.as_deref())?;
    report.config = serde_json::to_value(config).map_err(|e| Error::data(e.to_string()))?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    report.save(&out.join("report.json"))?;
    let csv = out.join("report.csv");
    format::write_atomic(&csv, report.to_csv().as_bytes())?;
    format::write_meta(&csv, "report", meta(config, vec![])?)?;
    for h in &report.histograms {
        let path = out.join("histograms").join(format!("{}-{}.csv", h.stream, h.dataset));
        format::write_atomic(&path, h.histogram.to_csv().as_bytes())?;
    }
    log::info!("eval: wrote {}", out.join("report.json").display());
    Ok(())
}

fn cmd_spectrum(config: &RunConfig) -> Result<()> {
    let out = config.path(&config.out, "out")?;
    let sub = subspace::load_subspace(config.path(&config.subspace, "subspace")?).stage("load")?;
    let spectrum = subspace::spectrum(&sub).stage("spectrum")?;
    format::write_atomic(out, spectrum.to_csv().as_bytes())?;
    format::write_meta(
        out,
        "spectrum",
        meta(config, vec![("total_variance", spectrum.total_variance.into())])?,
    )
}
