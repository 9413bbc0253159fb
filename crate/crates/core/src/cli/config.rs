use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::detectors::{CovarianceKind, DetectorConfig, DetectorKind, HeadConfig};
use crate::error::{Error, Result};
use crate::evalharness::PipelineConfig;
use crate::micronet::TrainConfig;
use crate::subspace::{PcaConfig, SubspaceKind};

/// Fully resolved settings for one command. Keys match the long flag names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct RunConfig {
    pub seed: u64,

    // classifier
    pub hidden_dims: Vec<usize>,
    pub affine_norm: bool,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub label_smoothing: f64,

    // subspace
    pub subspace_kind: SubspaceKind,
    pub k: usize,
    pub iters: usize,
    pub tol: f64,
    pub chunk_size: usize,
    pub epsilon: f64,
    pub orthonormalize: bool,

    // detectors
    pub detector: DetectorKind,
    pub detectors: Vec<DetectorKind>,
    pub temperature: f64,
    pub clip_dims: usize,
    pub percentile: f64,
    pub bats_lambda: f64,
    pub knn_k: usize,
    pub knn_normalize: bool,
    pub ridge_scale: f64,
    pub covariance: CovarianceKind,
    pub head_lr: f64,
    pub head_momentum: f64,
    pub head_batch_size: usize,
    pub head_epochs: usize,

    // evaluation
    pub alpha: f64,
    pub ensemble: bool,
    pub tpr_target: f64,
    pub histogram_bins: usize,
    pub cosine_report: bool,
    pub keep_intermediates: Option<PathBuf>,

    // paths
    pub synth_spec: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub id_test: Option<PathBuf>,
    /// `name=path` pairs.
    pub ood: Vec<String>,
    pub model: Option<PathBuf>,
    pub subspace: Option<PathBuf>,
    pub detector_file: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let pca = PcaConfig::default();
        let pipe = PipelineConfig::default();
        let det = DetectorConfig::default();
        Self {
            seed: 0,
            hidden_dims: vec![16, 16],
            affine_norm: false,
            epochs: train.epochs,
            lr: train.lr,
            momentum: train.momentum,
            batch_size: train.batch_size,
            label_smoothing: train.label_smoothing,
            subspace_kind: pipe.subspace_kind,
            k: pipe.k,
            iters: pca.iters,
            tol: pca.tol,
            chunk_size: pca.chunk_size,
            epsilon: pipe.epsilon,
            orthonormalize: pipe.orthonormalize,
            detector: DetectorKind::Knn,
            detectors: pipe.detectors,
            temperature: det.temperature,
            clip_dims: det.clip_dims,
            percentile: det.percentile,
            bats_lambda: det.bats_lambda,
            knn_k: det.knn_k,
            knn_normalize: det.knn_normalize,
            ridge_scale: det.ridge_scale,
            covariance: det.covariance,
            head_lr: det.head.lr,
            head_momentum: det.head.momentum,
            head_batch_size: det.head.batch_size,
            head_epochs: det.head.epochs,
            alpha: pipe.alpha,
            ensemble: pipe.ensemble,
            tpr_target: pipe.tpr_target,
            histogram_bins: pipe.histogram_bins,
            cosine_report: pipe.cosine_report,
            keep_intermediates: None,
            synth_spec: None,
            data_dir: None,
            data: None,
            train: None,
            id_test: None,
            ood: Vec::new(),
            model: None,
            subspace: None,
            detector_file: None,
            embeddings: None,
            out: None,
        }
    }
}

/// Command-line overrides; every unset flag leaves the lower layer alone.
#[derive(Debug, Clone, Default, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Overrides {
    /// TOML file with any of the settings below (kebab-case keys)
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Hidden layer widths, comma separated
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dims: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub affine_norm: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_smoothing: Option<f64>,

    /// pca or class-mean
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subspace_kind: Option<String>,
    /// Subspace dimension K
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Maximum power iterations T
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chunk_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orthonormalize: Option<bool>,

    /// msp, energy, react, bats, maha or knn
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector: Option<String>,
    /// Detectors evaluated by `eval`, comma separated
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detectors: Option<Vec<String>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    /// Tail dimensions d clipped by ReAct/BATS
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_dims: Option<usize>,
    /// ReAct percentile p in (0, 100]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percentile: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bats_lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knn_k: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knn_normalize: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge_scale: Option<f64>,
    /// pooled or global
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariance: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head_lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head_momentum: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head_batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head_epochs: Option<usize>,

    /// Ensemble weight on the gradient score
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tpr_target: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram_bins: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cosine_report: Option<bool>,
    /// Directory receiving every intermediate artifact of `eval`
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keep_intermediates: Option<PathBuf>,

    /// TOML synthetic benchmark description (default: built-in benchmark)
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth_spec: Option<PathBuf>,
    /// Directory written by `synth` (train.gso, id_test.gso, ood-*.gso)
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id_test: Option<PathBuf>,
    /// OOD set as name=path; repeatable
    #[arg(long, value_name = "NAME=FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ood: Option<Vec<String>>,
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subspace: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector_file: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn to_table<T: Serialize>(v: &T) -> Result<toml::Table> {
    toml::Table::try_from(v).map_err(|e| Error::config(format!("cannot encode configuration: {e}")))
}

fn from_table(t: toml::Table, origin: &str) -> Result<RunConfig> {
    RunConfig::deserialize(toml::Value::Table(t)).map_err(|e| Error::config(format!("{origin}: {e}")))
}

impl RunConfig {
    /// Defaults, overlaid by the config file, overlaid by flags.
    pub fn resolve(overrides: &Overrides) -> Result<Self> {
        let mut table = to_table(&RunConfig::default())?;
        if let Some(path) = &overrides.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            let file: toml::Table = text
                .parse()
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            // rejects unknown keys and ill-typed values
            from_table(file.clone(), &path.display().to_string())?;
            table.extend(file);
        }
        table.extend(to_table(overrides)?);
        from_table(table, "command line")
    }

    /// The resolved configuration as a TOML table, for artifact sidecars.
    pub fn echo(&self) -> Result<toml::Table> {
        to_table(self)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            momentum: self.momentum,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            label_smoothing: self.label_smoothing,
        }
    }

    pub fn pca_config(&self) -> PcaConfig {
        PcaConfig {
            iters: self.iters,
            seed: self.seed,
            tol: self.tol,
            chunk_size: self.chunk_size,
        }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            temperature: self.temperature,
            clip_dims: self.clip_dims,
            percentile: self.percentile,
            bats_lambda: self.bats_lambda,
            knn_k: self.knn_k,
            knn_normalize: self.knn_normalize,
            ridge_scale: self.ridge_scale,
            covariance: self.covariance,
            head: HeadConfig {
                lr: self.head_lr,
                momentum: self.head_momentum,
                batch_size: self.head_batch_size,
                epochs: self.head_epochs,
                seed: self.seed,
            },
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            subspace_kind: self.subspace_kind,
            k: self.k,
            epsilon: self.epsilon,
            orthonormalize: self.orthonormalize,
            pca: self.pca_config(),
            detectors: self.detectors.clone(),
            detector: self.detector_config(),
            ensemble: self.ensemble,
            alpha: self.alpha,
            tpr_target: self.tpr_target,
            histogram_bins: self.histogram_bins,
            cosine_report: self.cosine_report,
        }
    }

    /// A required path setting.
    pub fn path<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::usage(format!("--{flag} is required")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        std::fs::write(&file, "k = 32\nalpha = 0.5\ndetectors = [\"knn\", \"maha\"]\n").unwrap();
        let o = Overrides {
            config: Some(file),
            k: Some(8),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(&o).unwrap();
        assert_eq!(c.k, 8);
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.detectors, vec![DetectorKind::Knn, DetectorKind::Maha]);
        assert_eq!(c.tol, 1e-6);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        std::fs::write(&file, "kk = 3\n").unwrap();
        let o = Overrides {
            config: Some(file),
            ..Overrides::default()
        };
        let e = RunConfig::resolve(&o).unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn bad_enum_flag_is_an_error() {
        let o = Overrides {
            detector: Some("odin".into()),
            ..Overrides::default()
        };
        assert!(RunConfig::resolve(&o).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig {
            k: 12,
            out: Some("x/y.gso".into()),
            ..RunConfig::default()
        };
        let back = from_table(c.echo().unwrap(), "echo").unwrap();
        assert_eq!(back, c);
    }
}
