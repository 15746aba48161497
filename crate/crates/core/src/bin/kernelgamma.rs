use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kernelgamma::bench::{emit_report, run_benchmark, BenchConfig, DatasetEntry, Mode, ReportFormat};
use kernelgamma::dataset::{load, FileFormat, ScalingSpec};
use kernelgamma::dmm::{estimate, Variant};
use kernelgamma::geometry::{compute_geometry_with, GeometryOptions};
use kernelgamma::kos::{KosModel, KosParams, QueryNorm};
use kernelgamma::persist::{Model, ModelFile};
use kernelgamma::svm::{train_multiclass, SvmParams};
use kernelgamma::tuning::{grid_search, search_c, GridSpec, Method, TuneOptions};
use kernelgamma::{Dataset, Error, Result};

const THREADS_ENV: &str = "KERNELGAMMA_THREADS";

/// Closed-form RBF kernel width selection with KOS and SVM classifiers.
#[derive(Parser)]
#[command(name = "kernelgamma", version, about)]
#[command(after_help = "Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical error.\n\
                        Set KERNELGAMMA_THREADS to bound the worker pool.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the closed-form γ for a labeled dataset.
    EstimateGamma {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "avg")]
        gamma_variant: Variant,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print class diameters and inter-class distances.
    Geometry {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a model and save it as JSON.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        method: Method,
        /// Explicit γ; the closed-form estimate is used when absent.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value = "avg")]
        gamma_variant: Variant,
        /// SVM penalty. Required for SVM.
        #[arg(long = "C", alias = "c")]
        c: Option<f64>,
        #[command(flatten)]
        kos: KosArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label a dataset with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: Option<FileFormat>,
        #[arg(long, default_value_t = 0)]
        label_column: usize,
        /// Predicted labels, one per line. Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated grid search (LEARNING) or closed-form γ with a C search (DMM).
    Tune {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value = "learning")]
        mode: Mode,
        #[arg(long, default_value = "avg")]
        gamma_variant: Variant,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        kos: KosArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare LEARNING and DMM modes on one or more datasets.
    Bench {
        /// JSON benchmark config. Flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset file; repeatable. Named after the file stem.
        #[arg(long)]
        input: Vec<PathBuf>,
        #[arg(long)]
        format: Option<FileFormat>,
        #[arg(long, default_value_t = 0)]
        label_column: usize,
        #[arg(long, value_delimiter = ',')]
        method: Vec<Method>,
        #[arg(long, value_delimiter = ',')]
        mode: Vec<Mode>,
        /// Split seeds, comma-separated.
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        scale_range: Option<String>,
        #[arg(long)]
        gamma_variant: Option<Variant>,
        #[arg(long)]
        imbalance_factor: Option<String>,
        #[arg(long)]
        gamma_grid: Option<String>,
        #[arg(long)]
        c_grid: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
        /// Run dataset/seed rows concurrently; timings become unreliable.
        #[arg(long)]
        parallel: bool,
        /// json, csv or markdown. Guessed from `--out` when absent.
        #[arg(long)]
        report_format: Option<ReportFormat>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    input: PathBuf,
    /// sparse or csv; guessed from the extension when absent.
    #[arg(long)]
    format: Option<FileFormat>,
    #[arg(long, default_value_t = 0)]
    label_column: usize,
    /// Min-max range as `lo,hi`, or `none`.
    #[arg(long, default_value = "0,1")]
    scale_range: String,
}

#[derive(Args)]
struct KosArgs {
    /// Split classes larger than this multiple of the smallest; `none` disables.
    #[arg(long, default_value = "2")]
    imbalance_factor: String,
    #[arg(long, default_value = "centered")]
    query_norm: QueryNorm,
}

#[derive(Args)]
struct GridArgs {
    /// Comma-separated γ values; `2^k` items allowed.
    #[arg(long)]
    gamma_grid: Option<String>,
    #[arg(long)]
    c_grid: Option<String>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_scale(s: &str) -> Result<Option<(f64, f64)>> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let parts: Vec<&str> = s.split([',', ':']).map(str::trim).collect();
    let bad = || Error::InvalidArgument(format!("scale range {s:?} is not `lo,hi` or `none`"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    if !(lo < hi) {
        return Err(bad());
    }
    Ok(Some((lo, hi)))
}

fn parse_factor(s: &str) -> Result<f64> {
    if s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("inf") {
        return Ok(f64::INFINITY);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 1.0 => Ok(v),
        _ => Err(Error::InvalidArgument(format!(
            "imbalance factor must be >= 1 or `none`, got {s:?}"
        ))),
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let v = match t.strip_prefix("2^") {
                Some(e) => e.parse::<i32>().map(|e| 2f64.powi(e)).ok(),
                None => t.parse::<f64>().ok(),
            };
            v.ok_or_else(|| Error::InvalidArgument(format!("bad grid value {t:?}")))
        })
        .collect()
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        load_file(&self.input, self.format, self.label_column)
    }
}

impl KosArgs {
    fn params(&self, gamma: f64, seed: u64) -> Result<KosParams> {
        Ok(KosParams {
            imbalance_factor: parse_factor(&self.imbalance_factor)?,
            seed,
            norm: self.query_norm,
            ..KosParams::new(gamma)
        })
    }
}

impl GridArgs {
    fn spec(&self) -> Result<GridSpec> {
        let mut spec = GridSpec {
            folds: self.folds,
            seed: self.seed,
            ..GridSpec::default()
        };
        if let Some(g) = &self.gamma_grid {
            spec.gammas = parse_grid(g)?;
        }
        if let Some(c) = &self.c_grid {
            spec.cs = parse_grid(c)?;
        }
        Ok(spec)
    }
}

fn load_file(path: &Path, format: Option<FileFormat>, label_column: usize) -> Result<Dataset> {
    load(
        path,
        format.unwrap_or_else(|| FileFormat::from_path(path)),
        label_column,
    )
}

fn scaled(ds: &Dataset, range: Option<(f64, f64)>) -> Result<(Dataset, Option<ScalingSpec>)> {
    match range {
        Some(r) => {
            let spec = ScalingSpec::fit(ds, r)?;
            Ok((spec.apply(ds)?, Some(spec)))
        }
        None => Ok((ds.clone(), None)),
    }
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                })
        }
    }
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    write_out(out, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::EstimateGamma {
            data,
            gamma_variant,
            out,
        } => {
            let (ds, _) = scaled(&data.load()?, parse_scale(&data.scale_range)?)?;
            let geom = compute_geometry_with(&ds, &GeometryOptions::default())?;
            write_json(out.as_deref(), &estimate(&geom, gamma_variant)?)
        }
        Command::Geometry { data, out } => {
            let (ds, _) = scaled(&data.load()?, parse_scale(&data.scale_range)?)?;
            write_json(
                out.as_deref(),
                &compute_geometry_with(&ds, &GeometryOptions::default())?,
            )
        }
        Command::Train {
            data,
            method,
            gamma,
            gamma_variant,
            c,
            kos,
            seed,
            out,
        } => {
            let raw = data.load()?;
            let (ds, scaling) = scaled(&raw, parse_scale(&data.scale_range)?)?;
            let (gamma, est) = match gamma {
                Some(g) => (g, None),
                None => {
                    let est = estimate(&compute_geometry_with(&ds, &GeometryOptions::default())?, gamma_variant)?;
                    (est.gamma, Some(est))
                }
            };
            let model = match method {
                Method::Kos => Model::Kos(KosModel::fit(&ds, &kos.params(gamma, seed)?)?),
                Method::Svm => {
                    let c = c.ok_or_else(|| Error::InvalidArgument("SVM training needs --C".into()))?;
                    Model::Svm(train_multiclass(&ds, &SvmParams::new(gamma, c))?)
                }
            };
            ModelFile::new(&raw, scaling, est, model).save(&out)
        }
        Command::Predict {
            model,
            input,
            format,
            label_column,
            out,
        } => {
            let file = ModelFile::load(&model)?;
            let ds = load_file(&input, format, label_column)?;
            let pred = file.predict_dataset(&ds)?;
            let mut text = String::with_capacity(pred.len() * 4);
            for p in &pred {
                text.push_str(&file.label_names[*p]);
                text.push('\n');
            }
            // Score only when the input's labels all belong to the model.
            if let Ok(ds) = ds.relabel_to(&file.label_names) {
                let acc = kernelgamma::bench::accuracy(&pred, &ds.labels())?;
                eprintln!("accuracy {acc:.4} on {} samples", pred.len());
            }
            write_out(out.as_deref(), &text)
        }
        Command::Tune {
            data,
            method,
            mode,
            gamma_variant,
            grid,
            kos,
            out,
        } => {
            let ds = data.load()?;
            let spec = grid.spec()?;
            let opts = TuneOptions {
                scale_range: parse_scale(&data.scale_range)?,
                kos: kos.params(1.0, grid.seed)?,
                ..TuneOptions::default()
            };
            let result = match mode {
                Mode::Learning => grid_search(&ds, method, &spec, &opts)?,
                Mode::Dmm => {
                    let (scaled_ds, _) = scaled(&ds, opts.scale_range)?;
                    let est = estimate(
                        &compute_geometry_with(&scaled_ds, &GeometryOptions::default())?,
                        gamma_variant,
                    )?;
                    match method {
                        Method::Svm => search_c(&ds, est.gamma, &spec, &opts)?,
                        Method::Kos => {
                            let spec = GridSpec {
                                gammas: vec![est.gamma],
                                ..spec
                            };
                            grid_search(&ds, Method::Kos, &spec, &opts)?
                        }
                    }
                }
            };
            write_json(out.as_deref(), &result)
        }
        Command::Bench {
            config,
            input,
            format,
            label_column,
            method,
            mode,
            seed,
            test_fraction,
            scale_range,
            gamma_variant,
            imbalance_factor,
            gamma_grid,
            c_grid,
            folds,
            parallel,
            report_format,
            out,
        } => {
            let mut cfg = match &config {
                Some(path) => BenchConfig::from_json_file(path)?,
                None => BenchConfig::default(),
            };
            for path in &input {
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                let mut entry = DatasetEntry::file(name, path.clone());
                if let kernelgamma::bench::DataSource::File {
                    format: f,
                    label_column: l,
                    ..
                } = &mut entry.source
                {
                    *f = format;
                    *l = label_column;
                }
                cfg.datasets.push(entry);
            }
            if !method.is_empty() {
                cfg.methods = method;
            }
            if !mode.is_empty() {
                cfg.modes = mode;
            }
            if !seed.is_empty() {
                cfg.seeds = seed;
            }
            if let Some(f) = test_fraction {
                cfg.test_fraction = f;
            }
            if let Some(s) = scale_range {
                cfg.scale_range = parse_scale(&s)?;
            }
            if let Some(v) = gamma_variant {
                cfg.variant = v;
            }
            if let Some(f) = imbalance_factor {
                cfg.kos.imbalance_factor = parse_factor(&f)?;
            }
            if let Some(g) = gamma_grid {
                cfg.grid.gammas = parse_grid(&g)?;
            }
            if let Some(c) = c_grid {
                cfg.grid.cs = parse_grid(&c)?;
            }
            if let Some(k) = folds {
                cfg.grid.folds = k;
            }
            cfg.parallel |= parallel;
            if cfg.datasets.is_empty() {
                return Err(Error::InvalidArgument("bench needs --config or --input".into()));
            }

            let fmt = match (report_format, &out) {
                (Some(f), _) => f,
                (None, Some(path)) => match path.extension().and_then(|e| e.to_str()) {
                    Some(ext) => ext.parse()?,
                    None => ReportFormat::Json,
                },
                (None, None) => ReportFormat::Markdown,
            };
            let reports = run_benchmark(&cfg)?;
            write_out(out.as_deref(), &emit_report(&reports, fmt)?)
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match init_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
