//! Cross-validated grid search, the conventional way of picking γ (and C).
//!
//! Folds are stratified and each fold's training part gets its own scaling
//! fit, so validation data never leaks into scaling statistics.
//! For SVM every fold computes one Gram matrix per γ and reuses it across
//! the whole C grid.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::metrics::accuracy;
use crate::dataset::{stratified_folds, Dataset, ScalingSpec};
use crate::error::{Error, Result};
use crate::kernel::gram;
use crate::kos::{KosModel, KosParams};
use crate::svm::{train_multiclass_with_gram, SvmMulticlassModel, SvmParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Svm,
    Kos,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Svm => "svm",
            Method::Kos => "kos",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svm" => Ok(Method::Svm),
            "kos" => Ok(Method::Kos),
            _ => Err(Error::invalid(format!("unknown method {s:?}"))),
        }
    }
}

/// Anything that labels a batch of feature vectors.
pub trait Classifier {
    fn predict_batch(&self, xs: &[&[f64]]) -> Result<Vec<usize>>;
}

impl Classifier for KosModel {
    fn predict_batch(&self, xs: &[&[f64]]) -> Result<Vec<usize>> {
        KosModel::predict_batch(self, xs)
    }
}

impl Classifier for SvmMulticlassModel {
    fn predict_batch(&self, xs: &[&[f64]]) -> Result<Vec<usize>> {
        SvmMulticlassModel::predict_batch(self, xs)
    }
}

/// Powers of two `2^lo, 2^(lo+step), …, ≤ 2^hi`.
pub fn pow2_grid(lo: i32, hi: i32, step: i32) -> Vec<f64> {
    (lo..=hi).step_by(step as usize).map(|e| 2f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub gammas: Vec<f64>,
    pub cs: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for GridSpec {
    /// γ ∈ 2^{-15,-13,…,3} and C ∈ 2^{-5,-3,…,15}, 5 folds.
    fn default() -> Self {
        Self {
            gammas: pow2_grid(-15, 3, 2),
            cs: pow2_grid(-5, 15, 2),
            folds: 5,
            seed: 0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() || self.cs.is_empty() {
            return Err(Error::invalid("grids must be non-empty"));
        }
        if let Some(v) = self
            .gammas
            .iter()
            .chain(&self.cs)
            .find(|v| !(**v > 0.0) || !v.is_finite())
        {
            return Err(Error::invalid(format!("grid values must be positive, got {v}")));
        }
        if self.folds < 2 {
            return Err(Error::invalid(format!("need at least 2 folds, got {}", self.folds)));
        }
        Ok(())
    }
}

/// Settings shared by every model trained during a search. The `gamma`
/// and `c` fields of the templates are overwritten per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    /// Per-fold min-max scaling range; `None` uses features as given.
    pub scale_range: Option<(f64, f64)>,
    pub kos: KosParams,
    pub svm: SvmParams,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            scale_range: Some((0.0, 1.0)),
            kos: KosParams::new(1.0),
            svm: SvmParams {
                accept_unconverged: true,
                ..SvmParams::new(1.0, 1.0)
            },
        }
    }
}

struct Fold {
    train: Dataset,
    valid: Dataset,
}

fn make_folds(ds: &Dataset, k: usize, seed: u64, scale: Option<(f64, f64)>) -> Result<Vec<Fold>> {
    let folds = stratified_folds(ds, k, seed)?;
    let mut in_fold = vec![0; ds.len()];
    for (f, idx) in folds.iter().enumerate() {
        for &i in idx {
            in_fold[i] = f;
        }
    }
    folds
        .iter()
        .enumerate()
        .map(|(f, valid_idx)| {
            let train_idx: Vec<usize> = (0..ds.len()).filter(|&i| in_fold[i] != f).collect();
            let mut train = ds.subset(&train_idx)?;
            let mut valid = ds.subset(valid_idx)?;
            if let Some(range) = scale {
                let spec = ScalingSpec::fit(&train, range)?;
                train = spec.apply(&train)?;
                valid = spec.apply(&valid)?;
            }
            Ok(Fold { train, valid })
        })
        .collect()
}

fn score<M: Classifier>(model: &M, valid: &Dataset) -> Result<f64> {
    let pred = model.predict_batch(&valid.features())?;
    accuracy(&pred, &valid.labels())
}

/// Validation accuracy of each of `k` stratified folds.
pub fn cross_validate_scores<F, M>(
    ds: &Dataset,
    k: usize,
    seed: u64,
    scale: Option<(f64, f64)>,
    trainer: F,
) -> Result<Vec<f64>>
where
    F: Fn(&Dataset) -> Result<M> + Sync,
    M: Classifier,
{
    make_folds(ds, k, seed, scale)?
        .par_iter()
        .map(|fold| score(&trainer(&fold.train)?, &fold.valid))
        .collect()
}

/// Mean validation accuracy over `k` stratified folds.
pub fn cross_validate<F, M>(ds: &Dataset, k: usize, seed: u64, scale: Option<(f64, f64)>, trainer: F) -> Result<f64>
where
    F: Fn(&Dataset) -> Result<M> + Sync,
    M: Classifier,
{
    let scores = cross_validate_scores(ds, k, seed, scale, trainer)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub gamma: f64,
    pub c: Option<f64>,
    pub score: f64,
    /// Summed per-fold fit+validate time, excluding Gram matrices shared across C.
    pub cost: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub method: Method,
    pub gamma: f64,
    pub c: Option<f64>,
    pub cv_score: f64,
    pub elapsed: Duration,
    pub points: Vec<GridPoint>,
    /// Binary SVM problems that hit the iteration cap during the search.
    pub unconverged: usize,
}

/// Grid points whose model cannot be built (e.g. a fold leaves a class with
/// a rank-zero subspace) score 0 instead of aborting the search.
fn tolerate(r: Result<f64>) -> Result<f64> {
    match r {
        Ok(v) => Ok(v),
        Err(Error::DegenerateClass { .. } | Error::Numerical(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

fn pick_best(points: &[GridPoint]) -> &GridPoint {
    let mut best = &points[0];
    for p in &points[1..] {
        let better = p.score > best.score
            || (p.score == best.score
                && (p.gamma < best.gamma || (p.gamma == best.gamma && p.c.unwrap_or(0.0) < best.c.unwrap_or(0.0))));
        if better {
            best = p;
        }
    }
    best
}

struct SvmCell {
    score: f64,
    cost: Duration,
    unconverged: usize,
}

fn svm_fold_gamma(fold: &Fold, gamma: f64, cs: &[f64], template: &SvmParams) -> Result<Vec<SvmCell>> {
    let k = gram(&fold.train.features(), gamma)?;
    cs.iter()
        .map(|&c| {
            let start = Instant::now();
            let params = SvmParams { gamma, c, ..*template };
            let model = train_multiclass_with_gram(&fold.train, &k, &params)?;
            let unconverged = model.pairs.iter().filter(|(_, m)| !m.converged).count();
            let score = score(&model, &fold.valid)?;
            Ok(SvmCell {
                score,
                cost: start.elapsed(),
                unconverged,
            })
        })
        .collect()
}

fn search_svm(ds: &Dataset, gammas: &[f64], spec: &GridSpec, opts: &TuneOptions) -> Result<TuneResult> {
    let start = Instant::now();
    let folds = make_folds(ds, spec.folds, spec.seed, opts.scale_range)?;
    let jobs: Vec<(usize, usize)> = (0..folds.len())
        .flat_map(|f| (0..gammas.len()).map(move |g| (f, g)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(f, g)| svm_fold_gamma(&folds[f], gammas[g], &spec.cs, &opts.svm))
        .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::with_capacity(gammas.len() * spec.cs.len());
    let mut unconverged = 0;
    for (g, &gamma) in gammas.iter().enumerate() {
        for (ci, &c) in spec.cs.iter().enumerate() {
            let mut total = 0.0;
            let mut cost = Duration::ZERO;
            for f in 0..folds.len() {
                let cell = &cells[f * gammas.len() + g][ci];
                total += cell.score;
                cost += cell.cost;
                unconverged += cell.unconverged;
            }
            points.push(GridPoint {
                gamma,
                c: Some(c),
                score: total / folds.len() as f64,
                cost,
            });
        }
    }
    let best = pick_best(&points).clone();
    Ok(TuneResult {
        method: Method::Svm,
        gamma: best.gamma,
        c: best.c,
        cv_score: best.score,
        elapsed: start.elapsed(),
        points,
        unconverged,
    })
}

fn search_kos(ds: &Dataset, spec: &GridSpec, opts: &TuneOptions) -> Result<TuneResult> {
    let start = Instant::now();
    let folds = make_folds(ds, spec.folds, spec.seed, opts.scale_range)?;
    let jobs: Vec<(usize, usize)> = (0..folds.len())
        .flat_map(|f| (0..spec.gammas.len()).map(move |g| (f, g)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(f, g)| {
            let t = Instant::now();
            let params = KosParams {
                gamma: spec.gammas[g],
                ..opts.kos.clone()
            };
            let s = tolerate(KosModel::fit(&folds[f].train, &params).and_then(|m| score(&m, &folds[f].valid)))?;
            Ok((s, t.elapsed()))
        })
        .collect::<Result<Vec<_>>>()?;

    let points: Vec<GridPoint> = spec
        .gammas
        .iter()
        .enumerate()
        .map(|(g, &gamma)| {
            let (mut total, mut cost) = (0.0, Duration::ZERO);
            for f in 0..folds.len() {
                let (s, t) = cells[f * spec.gammas.len() + g];
                total += s;
                cost += t;
            }
            GridPoint {
                gamma,
                c: None,
                score: total / folds.len() as f64,
                cost,
            }
        })
        .collect();
    let best = pick_best(&points).clone();
    Ok(TuneResult {
        method: Method::Kos,
        gamma: best.gamma,
        c: None,
        cv_score: best.score,
        elapsed: start.elapsed(),
        points,
        unconverged: 0,
    })
}

/// Exhaustive cross-validated search. SVM searches γ × C; KOS has no C and
/// searches γ only. Best is the highest mean accuracy, ties going to the
/// smaller γ and then the smaller C.
pub fn grid_search(ds: &Dataset, method: Method, spec: &GridSpec, opts: &TuneOptions) -> Result<TuneResult> {
    spec.validate()?;
    match method {
        Method::Svm => search_svm(ds, &spec.gammas, spec, opts),
        Method::Kos => search_kos(ds, spec, opts),
    }
}

/// Searches C alone at a fixed γ, as done when γ comes from the closed form.
pub fn search_c(ds: &Dataset, gamma: f64, spec: &GridSpec, opts: &TuneOptions) -> Result<TuneResult> {
    let spec = GridSpec {
        gammas: vec![gamma],
        ..spec.clone()
    };
    spec.validate()?;
    search_svm(ds, &spec.gammas, &spec, opts)
}
