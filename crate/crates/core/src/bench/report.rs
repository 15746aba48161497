use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::run::Mode;
use crate::dmm::{DmmEstimate, Variant};
use crate::error::{Error, Result};
use crate::kos::QueryNorm;
use crate::tuning::Method;

const REPORT_FORMAT: &str = "kernelgamma-report";
pub const REPORT_VERSION: u32 = 1;

/// Column order of [`ReportFormat::Csv`] output.
pub const CSV_HEADER: [&str; 12] = [
    "dataset",
    "classes",
    "method",
    "mode",
    "seed",
    "gamma",
    "c",
    "accuracy",
    "precision",
    "tune_s",
    "train_s",
    "predict_s",
];

/// Settings that shaped a report, repeated on every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub test_fraction: f64,
    pub scale_range: Option<(f64, f64)>,
    pub variant: Variant,
    pub precision_averaging: String,
    pub gamma_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub svm_tol: f64,
    pub svm_max_iter: usize,
    pub kos_tol: f64,
    #[serde(with = "crate::persist::infinite_as_null")]
    pub kos_imbalance_factor: f64,
    pub kos_norm: QueryNorm,
    pub subsample_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub n_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub method: Method,
    pub mode: Mode,
    pub seed: u64,
    pub gamma: f64,
    pub c: Option<f64>,
    pub accuracy: f64,
    pub precision: f64,
    /// Cross-validation score of the chosen parameters, when a search ran.
    pub cv_score: Option<f64>,
    pub estimate: Option<DmmEstimate>,
    #[serde(with = "seconds")]
    pub tune_time: Duration,
    #[serde(with = "seconds")]
    pub train_time: Duration,
    #[serde(with = "seconds")]
    pub predict_time: Duration,
    pub config: ConfigEcho,
}

impl EvalReport {
    /// Copy with all durations zeroed, for comparing runs.
    pub fn without_times(&self) -> Self {
        Self {
            tune_time: Duration::ZERO,
            train_time: Duration::ZERO,
            predict_time: Duration::ZERO,
            ..self.clone()
        }
    }
}

mod seconds {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "markdown",
        })
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(Error::invalid(format!("unknown report format {s:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    reports: Vec<EvalReport>,
}

/// Parses the JSON produced by [`emit_report`].
pub fn reports_from_json(text: &str) -> Result<Vec<EvalReport>> {
    let env: Envelope = serde_json::from_str(text)?;
    if env.format != REPORT_FORMAT || env.version != REPORT_VERSION {
        return Err(Error::data(format!(
            "unsupported report {:?} version {}",
            env.format, env.version
        )));
    }
    Ok(env.reports)
}

pub fn emit_report(reports: &[EvalReport], format: ReportFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to emit"));
    }
    match format {
        ReportFormat::Json => {
            let env = Envelope {
                format: REPORT_FORMAT.into(),
                version: REPORT_VERSION,
                reports: reports.to_vec(),
            };
            Ok(serde_json::to_string_pretty(&env)? + "\n")
        }
        ReportFormat::Csv => emit_csv(reports),
        ReportFormat::Markdown => Ok(emit_markdown(reports)),
    }
}

fn emit_csv(reports: &[EvalReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::data(format!("writing CSV: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in reports {
        w.write_record([
            r.dataset.clone(),
            r.n_classes.to_string(),
            r.method.to_string(),
            r.mode.to_string(),
            r.seed.to_string(),
            r.gamma.to_string(),
            r.c.map(|c| c.to_string()).unwrap_or_default(),
            r.accuracy.to_string(),
            r.precision.to_string(),
            r.tune_time.as_secs_f64().to_string(),
            r.train_time.as_secs_f64().to_string(),
            r.predict_time.as_secs_f64().to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(format!("writing CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::data(e.to_string()))
}

#[derive(Default)]
struct Cell {
    acc: f64,
    prec: f64,
    secs: f64,
    n: usize,
}

impl Cell {
    fn add(&mut self, r: &EvalReport) {
        self.acc += r.accuracy;
        self.prec += r.precision;
        self.secs += (r.tune_time + r.train_time).as_secs_f64();
        self.n += 1;
    }

    fn pair(&self) -> String {
        if self.n == 0 {
            return "–".into();
        }
        let n = self.n as f64;
        format!("({:.2} \\| {:.2})", 100.0 * self.acc / n, 100.0 * self.prec / n)
    }

    fn time(&self) -> String {
        if self.n == 0 {
            return "–".into();
        }
        format!("{:.3}", self.secs / self.n as f64)
    }
}

/// One row per (dataset, method), seeds averaged. Each mode gets an
/// "(Acc | Prec)" pair in percent and a tune+train time column in seconds.
fn emit_markdown(reports: &[EvalReport]) -> String {
    let mut keys: Vec<(&str, usize, Method)> = Vec::new();
    for r in reports {
        let k = (r.dataset.as_str(), r.n_classes, r.method);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = String::from(
        "| Dataset | Classes | Method | Learning (Acc \\| Prec) | DMM (Acc \\| Prec) | Learning time (s) | DMM time (s) |\n\
         |---|---:|---|---:|---:|---:|---:|\n",
    );
    for (name, classes, method) in keys {
        let mut learn = Cell::default();
        let mut dmm = Cell::default();
        for r in reports.iter().filter(|r| r.dataset == name && r.method == method) {
            match r.mode {
                Mode::Learning => learn.add(r),
                Mode::Dmm => dmm.add(r),
            }
        }
        let _ = writeln!(
            out,
            "| {name} | {classes} | {} | {} | {} | {} | {} |",
            method.to_string().to_uppercase(),
            learn.pair(),
            dmm.pair(),
            learn.time(),
            dmm.time()
        );
    }
    out
}
