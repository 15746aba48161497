#![allow(dead_code)]

use kernelgamma::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform points in `[-scale, scale]^dim`, `n_classes` classes, every class
/// non-empty, labels dealt at random after the first `n_classes` points.
pub fn random_dataset(rng: &mut ChaCha8Rng, n_classes: usize, n: usize, dim: usize, scale: f64) -> Dataset {
    assert!(n >= n_classes);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-scale..scale)).collect())
        .collect();
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            if i < n_classes {
                i
            } else {
                rng.random_range(0..n_classes)
            }
        })
        .collect();
    Dataset::from_rows(rows, labels).unwrap()
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d = euclid(a, b);
    (-gamma * d * d).exp()
}

/// Brute-force `(diameters, pairwise d_{l,k} for l<k, D_max, d_min, d_av)`.
pub struct BruteGeometry {
    pub diameters: Vec<f64>,
    pub pairs: Vec<f64>,
    pub d_max: f64,
    pub d_min: f64,
    pub d_av: f64,
}

pub fn brute_geometry(ds: &Dataset) -> BruteGeometry {
    let p = ds.n_classes();
    let pts: Vec<Vec<&[f64]>> = (0..p).map(|c| ds.class_points(c)).collect();
    let diameters: Vec<f64> = pts
        .iter()
        .map(|c| {
            let mut best = 0.0f64;
            for a in c {
                for b in c {
                    best = best.max(euclid(a, b));
                }
            }
            best
        })
        .collect();
    let mut pairs = Vec::new();
    for l in 0..p {
        for k in l + 1..p {
            let mut best = f64::INFINITY;
            for a in &pts[l] {
                for b in &pts[k] {
                    best = best.min(euclid(a, b));
                }
            }
            pairs.push(best);
        }
    }
    let d_max = diameters.iter().cloned().fold(0.0, f64::max);
    let d_min = pairs.iter().cloned().fold(f64::INFINITY, f64::min);
    let d_av = (pairs.iter().map(|d| d * d).sum::<f64>() / pairs.len() as f64).sqrt();
    BruteGeometry {
        diameters,
        pairs,
        d_max,
        d_min,
        d_av,
    }
}

/// `M(i,j) = K(i,j) − (1/N) Σ_k (K(i,k) + K(j,k)) + (1/N²) Σ_k Σ_l K(l,k)`, entry by entry.
pub fn literal_center(k: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = k.len();
    let nf = n as f64;
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut row_terms = 0.0;
                    for t in 0..n {
                        row_terms += k[i][t] + k[j][t];
                    }
                    let mut total = 0.0;
                    for l in 0..n {
                        for t in 0..n {
                            total += k[l][t];
                        }
                    }
                    k[i][j] - row_terms / nf + total / (nf * nf)
                })
                .collect()
        })
        .collect()
}

/// The four-term coordinate formula evaluated literally.
pub fn literal_coordinate(train: &[Vec<f64>], x: &[f64], gamma: f64, sigma: f64, v: &[f64]) -> f64 {
    let n = train.len();
    let nf = n as f64;
    let k: Vec<Vec<f64>> = train
        .iter()
        .map(|a| train.iter().map(|b| rbf(a, b, gamma)).collect())
        .collect();
    let kx: Vec<f64> = train.iter().map(|a| rbf(a, x, gamma)).collect();
    let v_sum: f64 = v.iter().sum();
    let t1: f64 = (0..n).map(|l| v[l] * kx[l]).sum();
    let mut t2 = 0.0;
    for l in 0..n {
        for j in 0..n {
            t2 += v[l] * k[l][j];
        }
    }
    t2 /= nf;
    let t3 = kx.iter().sum::<f64>() / nf * v_sum;
    let mut total = 0.0;
    for row in &k {
        total += row.iter().sum::<f64>();
    }
    let t4 = total / (nf * nf) * v_sum;
    (t1 - t2 - t3 + t4) / sigma.sqrt()
}
