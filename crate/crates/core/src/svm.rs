//! Soft-margin C-SVM with an RBF kernel, trained in the dual by SMO.
//!
//! The solver minimizes `½αᵀQα − eᵀα` subject to `yᵀα = 0`, `0 ≤ α ≤ C`,
//! with `Q_ij = y_i y_j K(x_i, x_j)`. Each iteration picks the maximal
//! violating pair
//!
//! ```text
//! i = argmax { −y_t ∇_t : t ∈ I_up },   j = argmin { −y_t ∇_t : t ∈ I_low }
//! ```
//!
//! and stops once the gap between the two is at most `tol`. The primal
//! weight vector is never formed; decisions use the kernel expansion
//! `f(x) = Σ y_i α_i K(x_i, x) + b`. Multiclass problems are reduced
//! one-vs-one with majority voting.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{gram, GramMatrix, Kernel, Rbf};

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 100_000;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub gamma: f64,
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Cap on SMO pair updates per binary problem.
    pub max_iter: usize,
    /// Keep the last iterate instead of failing when the cap is hit.
    pub accept_unconverged: bool,
}

impl SvmParams {
    pub fn new(gamma: f64, c: f64) -> Self {
        Self {
            gamma,
            c,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            accept_unconverged: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::invalid(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Element access to a symmetric kernel matrix.
pub trait KernelSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, i: usize, j: usize) -> f64;

    /// Row-major `len × len` values, borrowed when already stored that way.
    fn dense(&self) -> Cow<'_, [f64]> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            out.extend((0..n).map(|j| self.get(i, j)));
        }
        Cow::Owned(out)
    }
}

impl KernelSource for GramMatrix {
    fn len(&self) -> usize {
        self.n()
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        GramMatrix::get(self, i, j)
    }

    fn dense(&self) -> Cow<'_, [f64]> {
        Cow::Borrowed(self.as_slice())
    }
}

/// A principal submatrix of a larger Gram matrix, selected by index.
pub struct IndexedKernel<'a> {
    pub full: &'a GramMatrix,
    pub idx: &'a [usize],
}

impl KernelSource for IndexedKernel<'_> {
    fn len(&self) -> usize {
        self.idx.len()
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.full.get(self.idx[i], self.idx[j])
    }

    fn dense(&self) -> Cow<'_, [f64]> {
        let identity = self.idx.len() == self.full.n() && self.idx.iter().enumerate().all(|(a, &b)| a == b);
        if identity {
            return Cow::Borrowed(self.full.as_slice());
        }
        let mut out = Vec::with_capacity(self.idx.len() * self.idx.len());
        for &i in self.idx {
            let row = self.full.row(i);
            out.extend(self.idx.iter().map(|&j| row[j]));
        }
        Cow::Owned(out)
    }
}

/// Raw result of the dual solver.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub y: Vec<f64>,
    /// `b` in `f(x) = Σ y_i α_i K(x_i, x) + b`.
    pub bias: f64,
    pub c: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final gap `m(α) − M(α)` between the selected pair.
    pub gap: f64,
}

impl DualSolution {
    /// `|Σ y_i α_i|`.
    pub fn equality_residual(&self) -> f64 {
        self.alpha.iter().zip(&self.y).map(|(a, y)| a * y).sum::<f64>().abs()
    }

    /// Decision values on the training points.
    pub fn training_decisions<K: KernelSource>(&self, k: &K) -> Vec<f64> {
        let n = k.len();
        (0..n)
            .map(|t| {
                (0..n)
                    .filter(|&s| self.alpha[s] != 0.0)
                    .map(|s| self.y[s] * self.alpha[s] * k.get(s, t))
                    .sum::<f64>()
                    + self.bias
            })
            .collect()
    }

    /// Largest violation of the soft-margin KKT conditions:
    /// `α=0 ⇒ y f ≥ 1`, `0<α<C ⇒ y f = 1`, `α=C ⇒ y f ≤ 1`.
    pub fn max_kkt_violation<K: KernelSource>(&self, k: &K) -> f64 {
        let f = self.training_decisions(k);
        let mut worst = 0.0f64;
        for t in 0..f.len() {
            let margin = self.y[t] * f[t] - 1.0;
            let a = self.alpha[t];
            let v = if a <= 0.0 {
                (-margin).max(0.0)
            } else if a >= self.c {
                margin.max(0.0)
            } else {
                margin.abs()
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// Index and value of the maximal violating pair.
struct Selection {
    i: usize,
    j: usize,
    gap: f64,
}

/// Additive masks: 0 for members of `I_up` / `I_low`, ∓∞ otherwise, so the
/// selection scan needs no per-element branching on `α`.
fn set_bias(alpha: f64, y: f64, c: f64) -> (f64, f64) {
    let (up, low) = if y > 0.0 {
        (alpha < c, alpha > 0.0)
    } else {
        (alpha > 0.0, alpha < c)
    };
    (
        if up { 0.0 } else { f64::NEG_INFINITY },
        if low { 0.0 } else { f64::INFINITY },
    )
}

const LANES: usize = 8;

/// Maximal violating pair from `v_t = −y_t ∇_t`. Runs several independent
/// running extrema and merges them; ties go to the lowest index, same as a
/// single left-to-right scan.
fn select(neg_y: &[f64], grad: &[f64], up_bias: &[f64], low_bias: &[f64]) -> Selection {
    let n = grad.len();
    let mut m = [f64::NEG_INFINITY; LANES];
    let mut mi = [usize::MAX; LANES];
    let mut big_m = [f64::INFINITY; LANES];
    let mut mj = [usize::MAX; LANES];
    let body = n - n % LANES;
    for base in (0..body).step_by(LANES) {
        for l in 0..LANES {
            let t = base + l;
            let v = neg_y[t] * grad[t];
            let vu = v + up_bias[t];
            let vl = v + low_bias[t];
            let up = vu > m[l];
            let low = vl < big_m[l];
            m[l] = if up { vu } else { m[l] };
            mi[l] = if up { t } else { mi[l] };
            big_m[l] = if low { vl } else { big_m[l] };
            mj[l] = if low { t } else { mj[l] };
        }
    }
    for t in body..n {
        let v = neg_y[t] * grad[t];
        let (vu, vl) = (v + up_bias[t], v + low_bias[t]);
        if vu > m[0] {
            m[0] = vu;
            mi[0] = t;
        }
        if vl < big_m[0] {
            big_m[0] = vl;
            mj[0] = t;
        }
    }
    let (mut bm, mut i) = (f64::NEG_INFINITY, usize::MAX);
    let (mut bl, mut j) = (f64::INFINITY, usize::MAX);
    for l in 0..LANES {
        if mi[l] != usize::MAX && (m[l] > bm || (m[l] == bm && mi[l] < i)) {
            bm = m[l];
            i = mi[l];
        }
        if mj[l] != usize::MAX && (big_m[l] < bl || (big_m[l] == bl && mj[l] < j)) {
            bl = big_m[l];
            j = mj[l];
        }
    }
    let gap = if i == usize::MAX || j == usize::MAX {
        0.0
    } else {
        bm - bl
    };
    Selection { i, j, gap }
}

/// Solves the C-SVM dual over `k` with labels `y ∈ {−1, +1}`.
///
/// Each iteration picks the maximal violating pair by first-order
/// information and solves the two-variable subproblem analytically.
pub fn solve_dual<K: KernelSource>(k: &K, y: &[f64], c: f64, tol: f64, max_iter: usize) -> DualSolution {
    let n = k.len();
    let kd = k.dense();
    let row = |i: usize| &kd[i * n..(i + 1) * n];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;

    let neg_y: Vec<f64> = y.iter().map(|v| -v).collect();
    let (mut up_bias, mut low_bias): (Vec<f64>, Vec<f64>) = y.iter().map(|&yt| set_bias(0.0, yt, c)).unzip();
    let mut sel = select(&neg_y, &grad, &up_bias, &low_bias);

    loop {
        if sel.gap <= tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (i, j) = (sel.i, sel.j);
        let (ki, kj) = (row(i), row(j));
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kij = ki[j];
        if y[i] != y[j] {
            let quad = (ki[i] + kj[j] - 2.0 * kij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (ki[i] + kj[j] - 2.0 * kij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let di = (alpha[i] - old_i) * y[i];
        let dj = (alpha[j] - old_j) * y[j];
        for t in 0..n {
            grad[t] += y[t] * (ki[t] * di + kj[t] * dj);
        }
        (up_bias[i], low_bias[i]) = set_bias(alpha[i], y[i], c);
        (up_bias[j], low_bias[j]) = set_bias(alpha[j], y[j], c);
        sel = select(&neg_y, &grad, &up_bias, &low_bias);
    }

    let bias = -rho(&alpha, &grad, y, c);
    DualSolution {
        alpha,
        y: y.to_vec(),
        bias,
        c,
        iterations,
        converged,
        gap: sel.gap,
    }
}

/// Offset `ρ = −b`: mean of `y_t ∇_t` over free variables, or the midpoint
/// of the feasible interval when every variable sits at a bound.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum_free += yg;
            n_free += 1;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    }
}

/// A two-class model, positive class first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmBinaryModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// `y_i α_i` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SvmBinaryModel {
    /// A model from an explicit kernel expansion.
    pub fn from_expansion(
        support_vectors: Vec<Vec<f64>>,
        dual_coef: Vec<f64>,
        bias: f64,
        gamma: f64,
        c: f64,
    ) -> Result<Self> {
        if support_vectors.len() != dual_coef.len() {
            return Err(Error::data("one dual coefficient per support vector"));
        }
        Ok(Self {
            support_vectors,
            dual_coef,
            bias,
            gamma,
            c,
            iterations: 0,
            converged: true,
        })
    }

    fn from_solution<P: AsRef<[f64]>>(points: &[P], sol: &DualSolution, gamma: f64) -> Self {
        let (support_vectors, dual_coef) = sol
            .alpha
            .iter()
            .zip(&sol.y)
            .zip(points)
            .filter(|((a, _), _)| **a > 0.0)
            .map(|((a, y), p)| (p.as_ref().to_vec(), a * y))
            .unzip();
        Self {
            support_vectors,
            dual_coef,
            bias: sol.bias,
            gamma,
            c: sol.c,
            iterations: sol.iterations,
            converged: sol.converged,
        }
    }

    pub fn n_support(&self) -> usize {
        self.support_vectors.len()
    }

    /// `f(x) = Σ y_i α_i K(sv_i, x) + b`.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if let Some(sv) = self.support_vectors.first() {
            if sv.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: sv.len(),
                    got: x.len(),
                });
            }
        }
        let kernel = Rbf::new(self.gamma)?;
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, w)| w * kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias)
    }
}

pub fn decision(model: &SvmBinaryModel, x: &[f64]) -> Result<f64> {
    model.decision(x)
}

fn finish<P: AsRef<[f64]>>(points: &[P], sol: DualSolution, params: &SvmParams) -> Result<SvmBinaryModel> {
    let model = SvmBinaryModel::from_solution(points, &sol, params.gamma);
    if !sol.converged && !params.accept_unconverged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            model: Box::new(model),
        });
    }
    Ok(model)
}

/// Trains `pos` (label +1) against `neg` (label −1).
pub fn train_binary<P, Q>(pos: &[P], neg: &[Q], params: &SvmParams) -> Result<SvmBinaryModel>
where
    P: AsRef<[f64]> + Sync,
    Q: AsRef<[f64]> + Sync,
{
    params.validate()?;
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::data("both classes need at least one sample"));
    }
    let points: Vec<&[f64]> = pos
        .iter()
        .map(AsRef::as_ref)
        .chain(neg.iter().map(AsRef::as_ref))
        .collect();
    let y: Vec<f64> = (0..points.len())
        .map(|i| if i < pos.len() { 1.0 } else { -1.0 })
        .collect();
    let k = gram(&points, params.gamma)?;
    let sol = solve_dual(&k, &y, params.c, params.tol, params.max_iter);
    finish(&points, sol, params)
}

/// One-vs-one ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmMulticlassModel {
    pub n_classes: usize,
    pub gamma: f64,
    pub c: f64,
    /// One model per class pair `(a, b)`, `a < b`, in lexicographic order;
    /// class `a` is the positive side.
    pub pairs: Vec<((usize, usize), SvmBinaryModel)>,
}

impl SvmMulticlassModel {
    /// Majority vote over pairwise decisions; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let mut votes = vec![0usize; self.n_classes];
        for ((a, b), model) in &self.pairs {
            if model.decision(x)? > 0.0 {
                votes[*a] += 1;
            } else {
                votes[*b] += 1;
            }
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        Ok(best)
    }

    pub fn predict_batch(&self, xs: &[&[f64]]) -> Result<Vec<usize>> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    pub fn total_iterations(&self) -> usize {
        self.pairs.iter().map(|(_, m)| m.iterations).sum()
    }

    pub fn all_converged(&self) -> bool {
        self.pairs.iter().all(|(_, m)| m.converged)
    }
}

fn class_pairs(ds: &Dataset) -> Result<Vec<(usize, usize)>> {
    let p = ds.n_classes();
    if p < 2 {
        return Err(Error::data("SVM training needs at least 2 classes"));
    }
    if let Some(c) = ds.class_sizes().iter().position(|&s| s == 0) {
        return Err(Error::data(format!(
            "class {} has no training samples",
            ds.label_names()[c]
        )));
    }
    Ok((0..p).flat_map(|a| (a + 1..p).map(move |b| (a, b))).collect())
}

/// Samples of classes `a` (labelled +1) and `b` (−1), each in canonical
/// order so training does not depend on the order samples arrived in.
fn pair_problem(ds: &Dataset, a: usize, b: usize) -> (Vec<usize>, Vec<f64>) {
    let pos = ds.canonical_class_index(a);
    let neg = ds.canonical_class_index(b);
    let y = std::iter::repeat(1.0)
        .take(pos.len())
        .chain(std::iter::repeat(-1.0).take(neg.len()))
        .collect();
    (pos.into_iter().chain(neg).collect(), y)
}

pub fn train_multiclass(ds: &Dataset, params: &SvmParams) -> Result<SvmMulticlassModel> {
    params.validate()?;
    let pairs = class_pairs(ds)?;
    let models = pairs
        .par_iter()
        .map(|&(a, b)| {
            let points = |c: usize| -> Vec<&[f64]> {
                ds.canonical_class_index(c)
                    .into_iter()
                    .map(|i| ds.samples()[i].features.as_slice())
                    .collect()
            };
            train_binary(&points(a), &points(b), params).map(|m| ((a, b), m))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmMulticlassModel {
        n_classes: ds.n_classes(),
        gamma: params.gamma,
        c: params.c,
        pairs: models,
    })
}

/// Like [`train_multiclass`] but reading kernel values from a Gram matrix
/// already computed over all of `ds` with `params.gamma`.
pub fn train_multiclass_with_gram(ds: &Dataset, full: &GramMatrix, params: &SvmParams) -> Result<SvmMulticlassModel> {
    params.validate()?;
    if full.n() != ds.len() || full.gamma != params.gamma {
        return Err(Error::invalid("Gram matrix does not match dataset and gamma"));
    }
    let pairs = class_pairs(ds)?;
    let models = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (idx, y) = pair_problem(ds, a, b);
            let k = IndexedKernel { full, idx: &idx };
            let sol = solve_dual(&k, &y, params.c, params.tol, params.max_iter);
            let points: Vec<&[f64]> = idx.iter().map(|&i| ds.samples()[i].features.as_slice()).collect();
            finish(&points, sol, params).map(|m| ((a, b), m))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmMulticlassModel {
        n_classes: ds.n_classes(),
        gamma: params.gamma,
        c: params.c,
        pairs: models,
    })
}

pub fn predict(model: &SvmMulticlassModel, x: &[f64]) -> Result<usize> {
    model.predict(x)
}
