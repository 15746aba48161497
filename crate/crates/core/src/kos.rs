//! Kernel optimization subspaces (KOS): one POD subspace per class in the RBF
//! feature space, with classification by minimum distance to a subspace.
//!
//! Fitting a class: build its Gram matrix, double-center it, and keep the
//! eigenpairs of the centered matrix whose eigenvalue exceeds
//! `tol · σ_max`. A query's coordinate along eigenvector `V` with eigenvalue
//! `σ` is
//!
//! ```text
//! α = (1/√σ) [ Σ_l V_l k_l − Σ_l V_l r_l − k̄·Σ_l V_l + g·Σ_l V_l ]
//! ```
//!
//! where `k_l = K(X_l, x)`, `k̄` is their mean, `r_l` are the row means of the
//! uncentered class Gram matrix and `g` its grand mean. The row means and
//! grand mean are cached at fit time.
//!
//! Classes much larger than the smallest class are split into contiguous
//! chunks, each with its own subspace; a query landing closest to a chunk
//! is assigned that chunk's class.

use std::fmt;
use std::str::FromStr;

use faer::{Mat, Side};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{center, cross_vector, gram, Kernel, Rbf};

pub const DEFAULT_EIGEN_TOL: f64 = 1e-10;
pub const DEFAULT_IMBALANCE_FACTOR: f64 = 2.0;

/// Squared norm of the query's feature image used in the distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryNorm {
    /// `‖Φ(x) − μ‖² = K(x,x) − 2k̄ + g`: distance from the mapped query to the
    /// affine class subspace through the class mean. Training points of a
    /// full-rank subspace sit at distance 0.
    #[default]
    Centered,
    /// `‖Φ(x)‖² = K(x,x)` taken verbatim, ignoring the class mean offset.
    Raw,
}

impl fmt::Display for QueryNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryNorm::Centered => "centered",
            QueryNorm::Raw => "raw",
        })
    }
}

impl FromStr for QueryNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "centered" => Ok(QueryNorm::Centered),
            "raw" => Ok(QueryNorm::Raw),
            _ => Err(Error::invalid(format!("unknown query norm {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KosParams {
    pub gamma: f64,
    /// Relative eigenvalue retention threshold.
    pub tol: f64,
    /// Classes larger than `factor × smallest class` are split. `f64::INFINITY` disables.
    #[serde(with = "crate::persist::infinite_as_null")]
    pub imbalance_factor: f64,
    /// Shuffle a class before chunking it (seeded by `seed`).
    pub shuffle: bool,
    pub seed: u64,
    pub norm: QueryNorm,
}

impl KosParams {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            tol: DEFAULT_EIGEN_TOL,
            imbalance_factor: DEFAULT_IMBALANCE_FACTOR,
            shuffle: true,
            seed: 0,
            norm: QueryNorm::default(),
        }
    }
}

/// Subclass index lists of one original class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSplit {
    pub class_id: usize,
    /// Sample indices into the dataset, one list per subclass.
    pub subclasses: Vec<Vec<usize>>,
}

/// Splits every class larger than `factor × (smallest class size)` into
/// `ceil(size / (factor·min))` contiguous chunks whose sizes differ by at
/// most one. Members are taken in canonical (feature-sorted) order, so the
/// split does not depend on sample order; with `shuffle_seed` set, each
/// split class is then shuffled.
pub fn split_imbalanced(ds: &Dataset, factor: f64, shuffle_seed: Option<u64>) -> Vec<ClassSplit> {
    let sizes = ds.class_sizes();
    let min = sizes.iter().copied().filter(|&s| s > 0).min().unwrap_or(0);
    let threshold = factor * min as f64;
    let mut rng = shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    (0..ds.n_classes())
        .map(|class_id| ds.canonical_class_index(class_id))
        .enumerate()
        .filter(|(_, members)| !members.is_empty())
        .map(|(class_id, members)| {
            let size = members.len();
            if !(factor >= 1.0) || size as f64 <= threshold {
                return ClassSplit {
                    class_id,
                    subclasses: vec![members],
                };
            }
            let mut order = members;
            if let Some(rng) = rng.as_mut() {
                order.shuffle(rng);
            }
            let chunks = (size as f64 / threshold).ceil() as usize;
            let base = size / chunks;
            let extra = size % chunks;
            let mut subclasses = Vec::with_capacity(chunks);
            let mut start = 0;
            for c in 0..chunks {
                let len = base + usize::from(c < extra);
                subclasses.push(order[start..start + len].to_vec());
                start += len;
            }
            ClassSplit { class_id, subclasses }
        })
        .collect()
}

/// The POD subspace of one class (or subclass) in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSubspace {
    pub class_id: usize,
    pub subclass_id: usize,
    train_points: Vec<Vec<f64>>,
    /// Retained eigenvalues, descending, all positive.
    eigvals: Vec<f64>,
    /// Retained unit eigenvectors, each of length N.
    eigvecs: Vec<Vec<f64>>,
    /// Full spectrum of the centered Gram matrix, descending.
    spectrum: Vec<f64>,
    row_means: Vec<f64>,
    grand_mean: f64,
}

impl ClassSubspace {
    /// Builds the subspace of `points`, keeping eigenpairs with `σ > tol·σ_max`.
    pub fn fit(points: Vec<Vec<f64>>, gamma: f64, tol: f64, class_id: usize, subclass_id: usize) -> Result<Self> {
        let k = gram(&points, gamma)?;
        let row_means = k.row_means();
        let grand_mean = row_means.iter().sum::<f64>() / points.len() as f64;
        let m = center(&k)?;
        let n = m.n();

        let mat = Mat::<f64>::from_fn(n, n, |i, j| m.get(i, j));
        let evd = mat
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))?;
        let values = evd.S().column_vector();
        let vectors = evd.U();
        // faer returns ascending eigenvalues
        let order: Vec<usize> = (0..n).rev().collect();
        let spectrum: Vec<f64> = order.iter().map(|&i| values[i]).collect();

        let sigma_max = spectrum.first().copied().unwrap_or(0.0);
        if !(sigma_max > 0.0) {
            return Err(Error::DegenerateClass {
                class: class_id,
                msg: "centered Gram matrix has no positive eigenvalue".into(),
            });
        }
        let cutoff = tol * sigma_max;
        let mut eigvals = Vec::new();
        let mut eigvecs = Vec::new();
        for &i in &order {
            let s = values[i];
            if s > cutoff && s > 0.0 {
                eigvals.push(s);
                let v: Vec<f64> = (0..n).map(|l| vectors[(l, i)]).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                eigvecs.push(v.into_iter().map(|x| x / norm).collect());
            }
        }

        Ok(Self {
            class_id,
            subclass_id,
            train_points: points,
            eigvals,
            eigvecs,
            spectrum,
            row_means,
            grand_mean,
        })
    }

    pub fn train_points(&self) -> &[Vec<f64>] {
        &self.train_points
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn eigvecs(&self) -> &[Vec<f64>] {
        &self.eigvecs
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn row_means(&self) -> &[f64] {
        &self.row_means
    }

    pub fn grand_mean(&self) -> f64 {
        self.grand_mean
    }

    pub fn rank(&self) -> usize {
        self.eigvals.len()
    }

    fn dim(&self) -> usize {
        self.train_points[0].len()
    }

    /// Coordinates of `x` along each retained eigenvector.
    pub fn coordinates(&self, x: &[f64], gamma: f64) -> Result<Vec<f64>> {
        let k = cross_vector(&self.train_points, x, gamma)?;
        Ok(self.coordinates_from_cross(&k))
    }

    fn coordinates_from_cross(&self, k: &[f64]) -> Vec<f64> {
        let n = k.len() as f64;
        let k_mean = k.iter().sum::<f64>() / n;
        self.eigvals
            .iter()
            .zip(&self.eigvecs)
            .map(|(&s, v)| {
                let v_sum: f64 = v.iter().sum();
                let projected: f64 = v.iter().zip(k).map(|(a, b)| a * b).sum();
                let mean_term: f64 = v.iter().zip(&self.row_means).map(|(a, b)| a * b).sum();
                (projected - mean_term - k_mean * v_sum + self.grand_mean * v_sum) / s.sqrt()
            })
            .collect()
    }

    fn query_norm_sq(&self, self_sim: f64, k_mean: f64, norm: QueryNorm) -> f64 {
        match norm {
            QueryNorm::Raw => self_sim,
            QueryNorm::Centered => self_sim - 2.0 * k_mean + self.grand_mean,
        }
    }

    /// Distance of the mapped query to this subspace, `sqrt(max(0, ‖Ŷ‖² − Σα²))`.
    pub fn distance(&self, x: &[f64], gamma: f64, norm: QueryNorm) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let k = cross_vector(&self.train_points, x, gamma)?;
        let k_mean = k.iter().sum::<f64>() / k.len() as f64;
        let alpha_sq: f64 = self.coordinates_from_cross(&k).iter().map(|a| a * a).sum();
        let self_sim = Rbf::new(gamma)?.self_similarity(x);
        let radicand = self.query_norm_sq(self_sim, k_mean, norm) - alpha_sq;
        Ok(radicand.max(0.0).sqrt())
    }

    /// Distances of many queries at once via dense products.
    fn distances_batch(&self, queries: &[&[f64]], kernel: &Rbf, norm: QueryNorm) -> Vec<f64> {
        let n = self.train_points.len();
        let r = self.rank();
        let q = queries.len();
        let kx = Mat::<f64>::from_fn(n, q, |l, j| {
            kernel.eval(&self.train_points[l], queries[j]) - self.row_means[l]
        });
        let proj = Mat::<f64>::from_fn(n, r, |l, i| self.eigvecs[i][l] / self.eigvals[i].sqrt());
        let coeff: Vec<f64> = (0..r)
            .map(|i| self.eigvecs[i].iter().sum::<f64>() / self.eigvals[i].sqrt())
            .collect();
        let a = proj.transpose() * &kx;
        (0..q)
            .map(|j| {
                // kx holds k_l − r_l, so its column mean is k̄ − g
                let shifted_mean = (0..n).map(|l| kx[(l, j)]).sum::<f64>() / n as f64;
                let k_mean = shifted_mean + self.grand_mean;
                let alpha_sq: f64 = (0..r)
                    .map(|i| {
                        let alpha = a[(i, j)] - coeff[i] * shifted_mean;
                        alpha * alpha
                    })
                    .sum();
                let self_sim = kernel.self_similarity(queries[j]);
                (self.query_norm_sq(self_sim, k_mean, norm) - alpha_sq).max(0.0).sqrt()
            })
            .collect()
    }
}

pub fn coordinates(sub: &ClassSubspace, x: &[f64], gamma: f64) -> Result<Vec<f64>> {
    sub.coordinates(x, gamma)
}

pub fn distance(sub: &ClassSubspace, x: &[f64], gamma: f64) -> Result<f64> {
    sub.distance(x, gamma, QueryNorm::default())
}

/// A fitted KOS classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KosModel {
    pub gamma: f64,
    pub tol: f64,
    #[serde(with = "crate::persist::infinite_as_null")]
    pub imbalance_factor: f64,
    pub seed: u64,
    pub norm: QueryNorm,
    pub n_classes: usize,
    /// Ordered by (class_id, subclass_id).
    subspaces: Vec<ClassSubspace>,
}

const BATCH: usize = 512;

impl KosModel {
    pub fn fit(ds: &Dataset, params: &KosParams) -> Result<Self> {
        if !(params.gamma > 0.0) || !params.gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be positive, got {}", params.gamma)));
        }
        if let Some(c) = ds.class_sizes().iter().position(|&s| s == 0) {
            return Err(Error::data(format!(
                "class {} has no training samples",
                ds.label_names()[c]
            )));
        }
        let seed = params.shuffle.then_some(params.seed);
        let jobs: Vec<(usize, usize, Vec<Vec<f64>>)> = split_imbalanced(ds, params.imbalance_factor, seed)
            .into_iter()
            .flat_map(|split| {
                split.subclasses.into_iter().enumerate().map(move |(sub, idx)| {
                    let pts = idx.iter().map(|&i| ds.samples()[i].features.clone()).collect();
                    (split.class_id, sub, pts)
                })
            })
            .collect();
        let subspaces = jobs
            .into_par_iter()
            .map(|(class, sub, pts)| ClassSubspace::fit(pts, params.gamma, params.tol, class, sub))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gamma: params.gamma,
            tol: params.tol,
            imbalance_factor: params.imbalance_factor,
            seed: params.seed,
            norm: params.norm,
            n_classes: ds.n_classes(),
            subspaces,
        })
    }

    pub fn subspaces(&self) -> &[ClassSubspace] {
        &self.subspaces
    }

    pub fn feature_dim(&self) -> usize {
        self.subspaces[0].dim()
    }

    /// Distance of `x` to every subspace, in subspace order.
    pub fn distances(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.subspaces
            .iter()
            .map(|s| s.distance(x, self.gamma, self.norm))
            .collect()
    }

    fn decide(&self, dists: impl Iterator<Item = f64>) -> usize {
        // subspaces are sorted by (class, subclass); strict < keeps the first on ties
        let mut best = (f64::INFINITY, self.subspaces[0].class_id);
        for (d, s) in dists.zip(&self.subspaces) {
            if d < best.0 {
                best = (d, s.class_id);
            }
        }
        best.1
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.decide(self.distances(x)?.into_iter()))
    }

    pub fn predict_batch(&self, xs: &[&[f64]]) -> Result<Vec<usize>> {
        let dim = self.feature_dim();
        if let Some(x) = xs.iter().find(|x| x.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        let kernel = Rbf::new(self.gamma)?;
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(BATCH) {
            let per_sub: Vec<Vec<f64>> = self
                .subspaces
                .par_iter()
                .map(|s| s.distances_batch(chunk, &kernel, self.norm))
                .collect();
            out.extend((0..chunk.len()).map(|j| self.decide(per_sub.iter().map(|d| d[j]))));
        }
        Ok(out)
    }
}

pub fn fit(ds: &Dataset, params: &KosParams) -> Result<KosModel> {
    KosModel::fit(ds, params)
}

pub fn predict(model: &KosModel, x: &[f64]) -> Result<usize> {
    model.predict(x)
}
