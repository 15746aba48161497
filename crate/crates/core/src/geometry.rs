//! Attribute-space class geometry: diameters, inter-class distances and the
//! aggregates the gamma estimator consumes, plus their images under the RBF
//! feature map.
//!
//! All pairwise loops are exact O(N²). Squared distances are compared and
//! only the final extremum is square-rooted.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

fn check_dims<P: AsRef<[f64]>>(points: &[P], dim: usize) -> Result<()> {
    for p in points {
        if p.as_ref().len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.as_ref().len(),
            });
        }
    }
    Ok(())
}

/// Largest pairwise Euclidean distance within a point set; 0 for one point.
pub fn class_diameter<P: AsRef<[f64]>>(points: &[P]) -> Result<f64> {
    let first = points.first().ok_or_else(|| Error::data("diameter of an empty set"))?;
    check_dims(points, first.as_ref().len())?;
    let mut max_sq = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            max_sq = max_sq.max(squared_distance(a.as_ref(), b.as_ref()));
        }
    }
    Ok(max_sq.sqrt())
}

/// Smallest Euclidean distance between a point of `a` and a point of `b`.
pub fn interclass_distance<P: AsRef<[f64]>, Q: AsRef<[f64]>>(a: &[P], b: &[Q]) -> Result<f64> {
    let (Some(fa), Some(_)) = (a.first(), b.first()) else {
        return Err(Error::data("distance to an empty set"));
    };
    let dim = fa.as_ref().len();
    check_dims(a, dim)?;
    check_dims(b, dim)?;
    let mut min_sq = f64::INFINITY;
    for x in a {
        for y in b {
            min_sq = min_sq.min(squared_distance(x.as_ref(), y.as_ref()));
        }
    }
    Ok(min_sq.sqrt())
}

/// Per-class diameters, pairwise inter-class distances and their aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGeometry {
    /// `D_k` for each class.
    pub diameters: Vec<f64>,
    /// `d_{l,k}` for `l < k`, packed row by row: (0,1), (0,2), …, (1,2), …
    pub pair_distances: Vec<f64>,
    /// Largest class diameter.
    pub d_max: f64,
    /// Smallest inter-class distance.
    pub d_min: f64,
    /// Root-mean-square of the inter-class distances.
    pub d_av: f64,
    /// Number of class pairs, `P(P-1)/2`.
    pub t_pairs: usize,
    /// Per-class subsampling cap in effect, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample_cap: Option<usize>,
}

fn pair_count(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

impl ClassGeometry {
    /// Assembles a geometry from raw diameters and packed pair distances.
    pub fn from_parts(diameters: Vec<f64>, pair_distances: Vec<f64>) -> Result<Self> {
        let p = diameters.len();
        if p < 2 {
            return Err(Error::data(format!(
                "{p} class(es): inter-class distances need at least 2"
            )));
        }
        let t_pairs = pair_count(p);
        if pair_distances.len() != t_pairs {
            return Err(Error::data(format!(
                "{p} classes need {t_pairs} pair distances, got {}",
                pair_distances.len()
            )));
        }
        if let Some(v) = diameters
            .iter()
            .chain(&pair_distances)
            .find(|v| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::data(format!("invalid distance {v}")));
        }
        let d_max = diameters.iter().copied().fold(0.0, f64::max);
        let d_min = pair_distances.iter().copied().fold(f64::INFINITY, f64::min);
        let sum_sq: f64 = pair_distances.iter().map(|d| d * d).sum();
        let d_av = (sum_sq / t_pairs as f64).sqrt();
        Ok(Self {
            diameters,
            pair_distances,
            d_max,
            d_min,
            d_av,
            t_pairs,
            subsample_cap: None,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.diameters.len()
    }

    /// `d_{l,k}` for any two distinct classes, in either order.
    pub fn pair(&self, l: usize, k: usize) -> f64 {
        assert_ne!(l, k, "no inter-class distance of a class to itself");
        let (l, k) = if l < k { (l, k) } else { (k, l) };
        let p = self.n_classes();
        // rows before l hold (p-1) + (p-2) + ... + (p-l) entries
        let offset = l * p - l * (l + 1) / 2;
        self.pair_distances[offset + (k - l - 1)]
    }

    /// Full symmetric P×P matrix of inter-class distances, zero diagonal.
    pub fn pair_matrix(&self) -> Vec<Vec<f64>> {
        let p = self.n_classes();
        (0..p)
            .map(|l| (0..p).map(|k| if l == k { 0.0 } else { self.pair(l, k) }).collect())
            .collect()
    }
}

/// Knobs for [`compute_geometry_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GeometryOptions {
    /// Uniformly subsample classes larger than this before the pairwise loops.
    pub max_class_points: Option<usize>,
    pub seed: u64,
}

pub fn compute_geometry(ds: &Dataset) -> Result<ClassGeometry> {
    compute_geometry_with(ds, &GeometryOptions::default())
}

pub fn compute_geometry_with(ds: &Dataset, opts: &GeometryOptions) -> Result<ClassGeometry> {
    let p = ds.n_classes();
    if p < 2 {
        return Err(Error::data(format!(
            "{p} class(es): inter-class distances need at least 2"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut classes: Vec<Vec<&[f64]>> = Vec::with_capacity(p);
    for c in 0..p {
        let mut pts = ds.class_points(c);
        if pts.is_empty() {
            return Err(Error::data(format!("class {} has no samples", ds.label_names()[c])));
        }
        if let Some(cap) = opts.max_class_points {
            if pts.len() > cap {
                let mut keep = index::sample(&mut rng, pts.len(), cap).into_vec();
                keep.sort_unstable();
                pts = keep.into_iter().map(|i| pts[i]).collect();
            }
        }
        classes.push(pts);
    }

    let diameters = classes
        .par_iter()
        .map(|pts| class_diameter(pts))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|l| (l + 1..p).map(move |k| (l, k))).collect();
    let pair_distances = pairs
        .par_iter()
        .map(|&(l, k)| interclass_distance(&classes[l], &classes[k]))
        .collect::<Result<Vec<_>>>()?;

    let mut geom = ClassGeometry::from_parts(diameters, pair_distances)?;
    geom.subsample_cap = opts.max_class_points;
    Ok(geom)
}

fn feature_sq(gamma: f64, dist: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::invalid(format!("gamma must be non-negative, got {gamma}")));
    }
    if !(dist >= 0.0) {
        return Err(Error::invalid(format!("distance must be non-negative, got {dist}")));
    }
    // 2 - 2e^{-x} without cancellation for small x
    Ok(-2.0 * (-gamma * dist * dist).exp_m1())
}

/// Squared feature-space diameter of a class with attribute-space diameter `diameter`.
pub fn feature_diameter_sq(gamma: f64, diameter: f64) -> Result<f64> {
    feature_sq(gamma, diameter)
}

/// Squared feature-space distance between classes `dist` apart in attribute space.
pub fn feature_distance_sq(gamma: f64, dist: f64) -> Result<f64> {
    feature_sq(gamma, dist)
}
