use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, macro_precision};
use super::report::{ConfigEcho, EvalReport};
use crate::dataset::{load, stratified_split, Dataset, FileFormat, ScalingSpec};
use crate::dmm::{estimate, DmmEstimate, Variant};
use crate::error::{Error, Result};
use crate::geometry::{compute_geometry_with, GeometryOptions};
use crate::kos::{KosModel, KosParams};
use crate::svm::{train_multiclass, SvmParams};
use crate::synth::BlobSpec;
use crate::tuning::{grid_search, search_c, Classifier, GridSpec, Method, TuneOptions};

/// How γ (and C) are chosen for a benchmark row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Cross-validated grid search.
    Learning,
    /// Closed-form γ; SVM still searches C.
    Dmm,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Learning => "learning",
            Mode::Dmm => "dmm",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "learning" | "grid" => Ok(Mode::Learning),
            "dmm" => Ok(Mode::Dmm),
            _ => Err(Error::invalid(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    File {
        path: PathBuf,
        /// Guessed from the extension when absent.
        #[serde(default)]
        format: Option<FileFormat>,
        #[serde(default)]
        label_column: usize,
    },
    Blobs(BlobSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    #[serde(flatten)]
    pub source: DataSource,
}

impl DatasetEntry {
    pub fn file(name: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            source: DataSource::File {
                path: path.into(),
                format: None,
                label_column: 0,
            },
        }
    }

    pub fn blobs(name: impl Into<String>, spec: BlobSpec) -> Self {
        Self {
            name: name.into(),
            source: DataSource::Blobs(spec),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match &self.source {
            DataSource::File {
                path,
                format,
                label_column,
            } => load(
                path,
                format.unwrap_or_else(|| FileFormat::from_path(path)),
                *label_column,
            ),
            DataSource::Blobs(spec) => spec.generate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub datasets: Vec<DatasetEntry>,
    pub methods: Vec<Method>,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    pub test_fraction: f64,
    /// Min-max range fitted on each training split; `None` leaves features raw.
    pub scale_range: Option<(f64, f64)>,
    pub variant: Variant,
    /// Grid for LEARNING mode; DMM mode uses only its C values and fold count.
    pub grid: GridSpec,
    /// Template for KOS fits (γ and seed are set per row).
    pub kos: KosParams,
    /// Template for SVM fits (γ and C are set per row).
    pub svm: SvmParams,
    pub geometry: GeometryOptions,
    /// Run (dataset, seed) rows concurrently. Skews timings.
    pub parallel: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let tune = TuneOptions::default();
        Self {
            datasets: Vec::new(),
            methods: vec![Method::Svm, Method::Kos],
            modes: vec![Mode::Learning, Mode::Dmm],
            seeds: vec![0],
            test_fraction: 0.3,
            scale_range: tune.scale_range,
            variant: Variant::default(),
            grid: GridSpec::default(),
            kos: tune.kos,
            svm: tune.svm,
            geometry: GeometryOptions::default(),
            parallel: false,
        }
    }
}

impl BenchConfig {
    /// Reads a JSON config; relative dataset paths resolve against the
    /// config file's directory.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for entry in &mut cfg.datasets {
            if let DataSource::File { path, .. } = &mut entry.source {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() || self.methods.is_empty() || self.modes.is_empty() {
            return Err(Error::invalid("config needs datasets, methods and modes"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("config needs at least one seed"));
        }
        self.grid.validate()
    }

    fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            test_fraction: self.test_fraction,
            scale_range: self.scale_range,
            variant: self.variant,
            precision_averaging: "macro".into(),
            gamma_grid: self.grid.gammas.clone(),
            c_grid: self.grid.cs.clone(),
            folds: self.grid.folds,
            svm_tol: self.svm.tol,
            svm_max_iter: self.svm.max_iter,
            kos_tol: self.kos.tol,
            kos_imbalance_factor: self.kos.imbalance_factor,
            kos_norm: self.kos.norm,
            subsample_cap: self.geometry.max_class_points,
        }
    }
}

/// One trained model and what it cost to choose its parameters.
struct Chosen {
    gamma: f64,
    c: Option<f64>,
    cv_score: Option<f64>,
    estimate: Option<DmmEstimate>,
    tune_time: Duration,
}

fn choose(
    cfg: &BenchConfig,
    raw_train: &Dataset,
    train: &Dataset,
    method: Method,
    mode: Mode,
    seed: u64,
) -> Result<Chosen> {
    let grid = GridSpec {
        seed,
        ..cfg.grid.clone()
    };
    let opts = TuneOptions {
        scale_range: cfg.scale_range,
        kos: cfg.kos.clone(),
        svm: cfg.svm,
    };
    let start = Instant::now();
    match mode {
        Mode::Learning => {
            // Folds rescale themselves, so the search sees unscaled data.
            let res = grid_search(raw_train, method, &grid, &opts)?;
            Ok(Chosen {
                gamma: res.gamma,
                c: res.c,
                cv_score: Some(res.cv_score),
                estimate: None,
                tune_time: start.elapsed(),
            })
        }
        Mode::Dmm => {
            let geom = compute_geometry_with(train, &GeometryOptions { seed, ..cfg.geometry })?;
            let est = estimate(&geom, cfg.variant)?;
            let (c, cv_score) = match method {
                Method::Svm => {
                    let res = search_c(raw_train, est.gamma, &grid, &opts)?;
                    (res.c, Some(res.cv_score))
                }
                Method::Kos => (None, None),
            };
            Ok(Chosen {
                gamma: est.gamma,
                c,
                cv_score,
                estimate: Some(est),
                tune_time: start.elapsed(),
            })
        }
    }
}

fn fit(cfg: &BenchConfig, train: &Dataset, chosen: &Chosen, method: Method, seed: u64) -> Result<Box<dyn Classifier>> {
    Ok(match method {
        Method::Kos => {
            let params = KosParams {
                gamma: chosen.gamma,
                seed,
                ..cfg.kos.clone()
            };
            Box::new(KosModel::fit(train, &params)?)
        }
        Method::Svm => {
            let c = chosen.c.ok_or_else(|| Error::invalid("SVM row without a C value"))?;
            let params = SvmParams {
                gamma: chosen.gamma,
                c,
                ..cfg.svm
            };
            Box::new(train_multiclass(train, &params)?)
        }
    })
}

fn run_row(cfg: &BenchConfig, entry: &DatasetEntry, seed: u64) -> Result<Vec<EvalReport>> {
    let ds = entry.load()?;
    let (raw_train, raw_test) = stratified_split(&ds, cfg.test_fraction, seed)?;
    let (train, test) = match cfg.scale_range {
        Some(range) => {
            let spec = ScalingSpec::fit(&raw_train, range)?;
            (spec.apply(&raw_train)?, spec.apply(&raw_test)?)
        }
        None => (raw_train.clone(), raw_test),
    };
    let truth = test.labels();
    let xs = test.features();

    let mut out = Vec::with_capacity(cfg.methods.len() * cfg.modes.len());
    for &method in &cfg.methods {
        for &mode in &cfg.modes {
            let chosen = choose(cfg, &raw_train, &train, method, mode, seed)?;
            let t = Instant::now();
            let model = fit(cfg, &train, &chosen, method, seed)?;
            let train_time = t.elapsed();
            let t = Instant::now();
            let pred = model.predict_batch(&xs)?;
            let predict_time = t.elapsed();
            out.push(EvalReport {
                dataset: entry.name.clone(),
                n_classes: ds.n_classes(),
                n_train: train.len(),
                n_test: test.len(),
                method,
                mode,
                seed,
                gamma: chosen.gamma,
                c: chosen.c,
                accuracy: accuracy(&pred, &truth)?,
                precision: macro_precision(&pred, &truth, ds.n_classes())?,
                cv_score: chosen.cv_score,
                estimate: chosen.estimate,
                tune_time: chosen.tune_time,
                train_time,
                predict_time,
                config: cfg.echo(),
            });
        }
    }
    Ok(out)
}

/// Runs every (dataset, seed, method, mode) combination. Reports come back
/// ordered by dataset, then seed, then method, then mode, as listed in the
/// config, whether or not rows ran in parallel.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    let rows: Vec<(&DatasetEntry, u64)> = cfg
        .datasets
        .iter()
        .flat_map(|d| cfg.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let results: Vec<Result<Vec<EvalReport>>> = if cfg.parallel {
        rows.par_iter().map(|&(d, s)| run_row(cfg, d, s)).collect()
    } else {
        rows.iter().map(|&(d, s)| run_row(cfg, d, s)).collect()
    };
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
