//! RBF kernel evaluation and Gram matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::squared_distance;

/// A positive-definite kernel. Only [`Rbf`] ships; classifiers are written
/// against this trait so others can be added.
pub trait Kernel: Send + Sync {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;

    /// `K(x, x)`, the squared feature-space norm of `x`.
    fn self_similarity(&self, x: &[f64]) -> f64 {
        self.eval(x, x)
    }
}

/// `K(x, y) = exp(-γ‖x-y‖²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rbf {
    pub gamma: f64,
}

impl Rbf {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be finite and >= 0, got {gamma}")));
        }
        Ok(Self { gamma })
    }
}

impl Kernel for Rbf {
    #[inline]
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (-self.gamma * squared_distance(x, y)).exp()
    }

    fn self_similarity(&self, _x: &[f64]) -> f64 {
        1.0
    }
}

pub fn rbf(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(Rbf::new(gamma)?.eval(x, y))
}

/// Dense symmetric kernel matrix over one point set, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    n: usize,
    values: Vec<f64>,
    pub gamma: f64,
    pub centered: bool,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn row_means(&self) -> Vec<f64> {
        let n = self.n as f64;
        (0..self.n).map(|i| self.row(i).iter().sum::<f64>() / n).collect()
    }

    pub fn grand_mean(&self) -> f64 {
        self.row_means().iter().sum::<f64>() / self.n as f64
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

fn check_same_dim<P: AsRef<[f64]>>(points: &[P]) -> Result<usize> {
    let dim = points
        .first()
        .ok_or_else(|| Error::data("kernel matrix of an empty set"))?
        .as_ref()
        .len();
    for p in points {
        if p.as_ref().len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.as_ref().len(),
            });
        }
    }
    Ok(dim)
}

/// Gram matrix of `kernel` over `points`. The upper triangle is computed and
/// mirrored so the result is exactly symmetric.
pub fn gram_with<K: Kernel, P: AsRef<[f64]> + Sync>(kernel: &K, points: &[P]) -> Result<Vec<f64>> {
    check_same_dim(points)?;
    let n = points.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = points[i].as_ref();
            (i..n).map(|j| kernel.eval(xi, points[j].as_ref())).collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(values)
}

pub fn gram<P: AsRef<[f64]> + Sync>(points: &[P], gamma: f64) -> Result<GramMatrix> {
    let kernel = Rbf::new(gamma)?;
    let values = gram_with(&kernel, points)?;
    Ok(GramMatrix {
        n: points.len(),
        values,
        gamma,
        centered: false,
    })
}

/// Double-centers a Gram matrix: `M = H·K·H` with `H = I - (1/N)·11ᵀ`,
/// evaluated entrywise as `K(i,j) - r_i - r_j + g` from row means `r` and
/// grand mean `g`. This is the covariance of the mapped points about their
/// feature-space mean.
pub fn center(g: &GramMatrix) -> Result<GramMatrix> {
    if g.centered {
        return Err(Error::invalid("Gram matrix is already centered"));
    }
    let n = g.n;
    let r = g.row_means();
    let grand = r.iter().sum::<f64>() / n as f64;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = g.get(i, j) - r[i] - r[j] + grand;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(GramMatrix {
        n,
        values,
        gamma: g.gamma,
        centered: true,
    })
}

/// `[K(train_l, x)]_l`.
pub fn cross_vector<P: AsRef<[f64]>>(train: &[P], x: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let kernel = Rbf::new(gamma)?;
    train
        .iter()
        .map(|t| {
            let t = t.as_ref();
            if t.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: t.len(),
                    got: x.len(),
                });
            }
            Ok(kernel.eval(t, x))
        })
        .collect()
}
