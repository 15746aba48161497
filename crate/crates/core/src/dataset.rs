//! Labeled datasets: parsing (LIBSVM sparse text, CSV), min-max scaling,
//! stratified splitting and fold assignment, and a versioned JSON form used
//! to cache splits between runs.
//!
//! Sparse inputs are densified on load. Class labels are remapped to
//! contiguous 0-based ids; the original label tokens are kept in
//! [`Dataset::label_names`] for reporting and for writing the data back out.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labeled feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    /// Internal 0-based class id.
    pub label: usize,
}

/// An immutable labeled sample collection with its class partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    label_names: Vec<String>,
    feature_dim: usize,
    class_index: Vec<Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset, checking every structural invariant.
    ///
    /// The number of classes is `label_names.len()`; classes may be empty
    /// (e.g. after subsetting), but every label must be a valid class id.
    pub fn new(samples: Vec<Sample>, label_names: Vec<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if label_names.is_empty() {
            return Err(Error::data("dataset needs at least one class"));
        }
        let feature_dim = samples[0].features.len();
        if feature_dim == 0 {
            return Err(Error::data("samples have no features"));
        }
        let mut class_index = vec![Vec::new(); label_names.len()];
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: feature_dim,
                    got: s.features.len(),
                });
            }
            if let Some(v) = s.features.iter().find(|v| !v.is_finite()) {
                return Err(Error::data(format!("sample {i} has non-finite feature {v}")));
            }
            if s.label >= label_names.len() {
                return Err(Error::data(format!(
                    "sample {i} has label {} but only {} classes exist",
                    s.label,
                    label_names.len()
                )));
            }
            class_index[s.label].push(i);
        }
        Ok(Self {
            samples,
            label_names,
            feature_dim,
            class_index,
        })
    }

    /// Builds a dataset from dense rows and 0-based labels, naming classes `0..P`.
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::data(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let samples = rows
            .into_iter()
            .zip(labels)
            .map(|(features, label)| Sample { features, label })
            .collect();
        Self::new(samples, (0..n_classes).map(|c| c.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Original label tokens, indexed by internal class id.
    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Sample indices of each class; together they partition `0..len()`.
    pub fn class_index(&self) -> &[Vec<usize>] {
        &self.class_index
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.class_index.iter().map(Vec::len).collect()
    }

    /// Indices of one class ordered lexicographically by feature values, so
    /// that anything built from them ignores the order samples arrived in.
    pub fn canonical_class_index(&self, class: usize) -> Vec<usize> {
        let mut idx = self.class_index[class].clone();
        idx.sort_by(|&a, &b| {
            let (x, y) = (&self.samples[a].features, &self.samples[b].features);
            x.iter()
                .zip(y)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        idx
    }

    /// Feature vectors of one class, in stored order.
    pub fn class_points(&self, class: usize) -> Vec<&[f64]> {
        self.class_index[class]
            .iter()
            .map(|&i| self.samples[i].features.as_slice())
            .collect()
    }

    pub fn features(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|s| s.features.as_slice()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// A new dataset holding the given samples (in that order) with the same classes.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        Self::new(samples, self.label_names.clone())
    }

    /// The same samples with every feature vector replaced by `f(features)`.
    pub fn map_features<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                features: f(&s.features),
                label: s.label,
            })
            .collect();
        Self::new(samples, self.label_names.clone())
    }

    /// Re-expresses labels against another label vocabulary (matched by name).
    ///
    /// Used when a held-out file was parsed separately from the training file.
    pub fn relabel_to(&self, names: &[String]) -> Result<Self> {
        let lookup: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        // "+1" and "1" name the same numeric label
        let find = |name: &str| -> Option<usize> {
            if let Some(&i) = lookup.get(name) {
                return Some(i);
            }
            let v: f64 = name.parse().ok()?;
            names.iter().position(|n| n.parse::<f64>().ok() == Some(v))
        };
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let name = &self.label_names[s.label];
                let label = find(name).ok_or_else(|| Error::data(format!("unknown label {name:?}")))?;
                Ok(Sample {
                    features: s.features.clone(),
                    label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples, names.to_vec())
    }

    /// Zero-pads every feature vector to `dim` (sparse files omit trailing zeros).
    pub fn pad_to(&self, dim: usize) -> Result<Self> {
        if dim < self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.feature_dim,
            });
        }
        self.map_features(|x| {
            let mut v = x.to_vec();
            v.resize(dim, 0.0);
            v
        })
    }
}

/// Maps raw label tokens to contiguous ids.
///
/// Numeric tokens are ordered by value ("+1" and "1" are the same class);
/// otherwise tokens are ordered lexicographically.
fn remap_labels(tokens: Vec<String>) -> (Vec<usize>, Vec<String>) {
    let numeric: Option<Vec<f64>> = tokens.iter().map(|t| t.parse::<f64>().ok()).collect();
    match numeric {
        Some(values) => {
            let mut distinct: Vec<(f64, String)> = Vec::new();
            for (v, t) in values.iter().zip(&tokens) {
                if !distinct.iter().any(|(d, _)| d == v) {
                    distinct.push((*v, t.clone()));
                }
            }
            distinct.sort_by(|a, b| a.0.total_cmp(&b.0));
            let labels = values
                .iter()
                .map(|v| distinct.iter().position(|(d, _)| d == v).unwrap())
                .collect();
            (labels, distinct.into_iter().map(|(_, t)| t).collect())
        }
        None => {
            let mut names: Vec<String> = tokens.clone();
            names.sort();
            names.dedup();
            let labels = tokens.iter().map(|t| names.binary_search(t).unwrap()).collect();
            (labels, names)
        }
    }
}

fn build(rows: Vec<Vec<f64>>, tokens: Vec<String>) -> Result<Dataset> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (labels, names) = remap_labels(tokens);
    let samples = rows
        .into_iter()
        .zip(labels)
        .map(|(features, label)| Sample { features, label })
        .collect();
    Dataset::new(samples, names)
}

/// Parses LIBSVM sparse text: `<label> <idx>:<val> ...` with 1-based,
/// strictly increasing indices. Blank lines and `#` comments are skipped.
pub fn parse_sparse<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut tokens = Vec::new();
    let mut dim = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label = parts.next().unwrap();
        match label.parse::<f64>() {
            Ok(v) if v.is_finite() => {}
            _ => return Err(Error::parse(lineno, format!("invalid label {label:?}"))),
        }
        let mut row = Vec::new();
        let mut last = 0;
        for item in parts {
            let (idx, val) = item
                .split_once(':')
                .ok_or_else(|| Error::parse(lineno, format!("expected idx:val, got {item:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::parse(lineno, format!("invalid index {idx:?}")))?;
            if idx == 0 {
                return Err(Error::parse(lineno, "indices are 1-based"));
            }
            if idx <= last {
                return Err(Error::parse(lineno, "indices must be strictly increasing"));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| Error::parse(lineno, format!("invalid value {val:?}")))?;
            if !val.is_finite() {
                return Err(Error::parse(lineno, format!("non-finite value {val}")));
            }
            last = idx;
            row.push((idx, val));
        }
        dim = dim.max(last);
        rows.push(row);
        tokens.push(label.to_string());
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    if dim == 0 {
        return Err(Error::data("no features in input"));
    }
    let dense = rows
        .into_iter()
        .map(|row| {
            let mut v = vec![0.0; dim];
            for (idx, val) in row {
                v[idx - 1] = val;
            }
            v
        })
        .collect();
    build(dense, tokens)
}

pub fn parse_sparse_str(text: &str) -> Result<Dataset> {
    parse_sparse(text.as_bytes())
}

/// Writes LIBSVM sparse text that [`parse_sparse`] reads back to an equal dataset.
///
/// Zero entries are omitted, except that the last feature is always written
/// on the first line so the dimension survives.
pub fn write_sparse<W: Write>(ds: &Dataset, mut out: W) -> std::io::Result<()> {
    let dim = ds.feature_dim();
    for (row, s) in ds.samples().iter().enumerate() {
        write!(out, "{}", ds.label_names()[s.label])?;
        for (i, v) in s.features.iter().enumerate() {
            if *v != 0.0 || (row == 0 && i + 1 == dim) {
                write!(out, " {}:{}", i + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Parses a rectangular comma-separated numeric table.
///
/// The label column may hold arbitrary tokens; all other cells must be
/// numeric. A first row with a non-numeric cell outside the label column is
/// treated as a header.
pub fn parse_csv<R: Read>(reader: R, label_column: usize) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut tokens = Vec::new();
    let mut width = None;
    for (i, record) in rdr.records().enumerate() {
        let lineno = i + 1;
        let record = record.map_err(|e| Error::parse(lineno, e.to_string()))?;
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let is_header = record
            .iter()
            .enumerate()
            .any(|(j, c)| j != label_column && c.parse::<f64>().is_err());
        if i == 0 && is_header {
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::parse(
                lineno,
                format!("ragged row: {} cells, expected {w}", record.len()),
            ));
        }
        if label_column >= w {
            return Err(Error::invalid(format!(
                "label column {label_column} out of range for {w} columns"
            )));
        }
        let mut features = Vec::with_capacity(w - 1);
        for (j, cell) in record.iter().enumerate() {
            if j == label_column {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(lineno, format!("non-numeric cell {cell:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(lineno, format!("non-finite cell {cell:?}")));
            }
            features.push(v);
        }
        rows.push(features);
        tokens.push(record[label_column].to_string());
    }
    build(rows, tokens)
}

pub fn parse_csv_str(text: &str, label_column: usize) -> Result<Dataset> {
    parse_csv(text.as_bytes(), label_column)
}

/// Input file formats understood by [`load`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Sparse,
    Csv,
}

impl fmt::Display for FileFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FileFormat::Sparse => "sparse",
            FileFormat::Csv => "csv",
        })
    }
}

impl FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sparse" | "libsvm" => Ok(FileFormat::Sparse),
            "csv" => Ok(FileFormat::Csv),
            _ => Err(Error::invalid(format!("unknown file format {s:?}"))),
        }
    }
}

impl FileFormat {
    /// `.csv` files are CSV; everything else is read as LIBSVM sparse text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Sparse,
        }
    }
}

pub fn load(path: &Path, format: FileFormat, label_column: usize) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    match format {
        FileFormat::Sparse => parse_sparse(reader),
        FileFormat::Csv => parse_csv(reader, label_column),
    }
}

/// Per-feature affine map fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl ScalingSpec {
    pub fn fit(ds: &Dataset, range: (f64, f64)) -> Result<Self> {
        let (lo, hi) = range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("scaling range [{lo}, {hi}] is empty")));
        }
        let d = ds.feature_dim();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for s in ds.samples() {
            for (j, &v) in s.features.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max, lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Scales one vector. Constant training features map to the range midpoint.
    pub fn apply_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mid = 0.5 * (self.lo + self.hi);
        Ok(x.iter()
            .enumerate()
            .map(|(j, &v)| {
                let span = self.max[j] - self.min[j];
                if span > 0.0 {
                    self.lo + (self.hi - self.lo) * (v - self.min[j]) / span
                } else {
                    mid
                }
            })
            .collect())
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.feature_dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: ds.feature_dim(),
            });
        }
        ds.map_features(|x| self.apply_point(x).expect("dimension checked"))
    }
}

pub fn fit_scaling(ds: &Dataset, range: (f64, f64)) -> Result<ScalingSpec> {
    ScalingSpec::fit(ds, range)
}

pub fn apply_scaling(ds: &Dataset, spec: &ScalingSpec) -> Result<Dataset> {
    spec.apply(ds)
}

/// Train/test index sets produced by [`stratified_split_indices`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn stratified_split_indices(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, members) in ds.class_index().iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::data(format!(
                "class {} has {} sample(s); a split needs at least 2",
                ds.label_names()[class],
                members.len()
            )));
        }
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        let n_test = ((test_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        test.extend_from_slice(&shuffled[..n_test]);
        train.extend_from_slice(&shuffled[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// Splits each class independently so both sides keep the class proportions.
pub fn stratified_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let idx = stratified_split_indices(ds, test_fraction, seed)?;
    Ok((ds.subset(&idx.train)?, ds.subset(&idx.test)?))
}

/// Validation index sets for stratified k-fold cross-validation.
///
/// Each class is shuffled and dealt round-robin into the folds, continuing
/// the deal position across classes so fold sizes differ by at most one.
pub fn stratified_folds(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut pos = 0;
    for (class, members) in ds.class_index().iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::data(format!(
                "class {} has {} samples, fewer than {k} folds",
                ds.label_names()[class],
                members.len()
            )));
        }
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for i in shuffled {
            folds[pos % k].push(i);
            pos += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

const DATASET_FORMAT: &str = "kernelgamma-dataset";
const SPLIT_FORMAT: &str = "kernelgamma-split";
const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    version: u32,
    label_names: Vec<String>,
    samples: Vec<Sample>,
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    format: String,
    version: u32,
    test_fraction: f64,
    seed: u64,
    #[serde(flatten)]
    indices: SplitIndices,
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::data(format!("expected {expected} file, found {format:?}")));
    }
    if version != CACHE_VERSION {
        return Err(Error::data(format!(
            "unsupported {expected} version {version} (this build reads {CACHE_VERSION})"
        )));
    }
    Ok(())
}

impl Dataset {
    pub fn to_json(&self) -> Result<String> {
        let file = DatasetFile {
            format: DATASET_FORMAT.into(),
            version: CACHE_VERSION,
            label_names: self.label_names.clone(),
            samples: self.samples.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text)?;
        check_header(&file.format, file.version, DATASET_FORMAT)?;
        Self::new(file.samples, file.label_names)
    }
}

/// Serializes a split together with the parameters that produced it.
pub fn split_to_json(split: &SplitIndices, test_fraction: f64, seed: u64) -> Result<String> {
    Ok(serde_json::to_string(&SplitFile {
        format: SPLIT_FORMAT.into(),
        version: CACHE_VERSION,
        test_fraction,
        seed,
        indices: split.clone(),
    })?)
}

/// Reads a cached split, refusing it when it was made with other parameters
/// or does not fit the dataset.
pub fn split_from_json(text: &str, ds: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitIndices> {
    let file: SplitFile = serde_json::from_str(text)?;
    check_header(&file.format, file.version, SPLIT_FORMAT)?;
    if file.seed != seed || file.test_fraction != test_fraction {
        return Err(Error::data("cached split was made with different parameters"));
    }
    let mut all: Vec<usize> = file.indices.train.iter().chain(&file.indices.test).copied().collect();
    all.sort_unstable();
    if all != (0..ds.len()).collect::<Vec<_>>() {
        return Err(Error::data("cached split does not partition the dataset"));
    }
    Ok(file.indices)
}
