//! Metrics, the benchmark runner and report emission.

pub mod metrics;
pub mod report;
pub mod run;

pub use metrics::{accuracy, confusion_matrix, macro_precision};
pub use report::{emit_report, reports_from_json, ConfigEcho, EvalReport, ReportFormat, CSV_HEADER};
pub use run::{run_benchmark, BenchConfig, DataSource, DatasetEntry, Mode};
