//! Seeded synthetic datasets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Isotropic Gaussian blobs, one class per center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub centers: Vec<Vec<f64>>,
    pub std: f64,
    pub n_per_class: usize,
    pub seed: u64,
}

impl BlobSpec {
    /// Two blobs in `dim` dimensions whose centers are `separation` apart
    /// along the first axis.
    pub fn pair(dim: usize, separation: f64, std: f64, n_per_class: usize, seed: u64) -> Self {
        let mut a = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        a[0] = -0.5 * separation;
        b[0] = 0.5 * separation;
        Self {
            centers: vec![a, b],
            std,
            n_per_class,
            seed,
        }
    }

    pub fn generate(&self) -> Result<Dataset> {
        gaussian_blobs(&self.centers, self.std, self.n_per_class, self.seed)
    }
}

/// Samples `n_per_class` points around each center, grouped by class.
pub fn gaussian_blobs(centers: &[Vec<f64>], std: f64, n_per_class: usize, seed: u64) -> Result<Dataset> {
    if centers.is_empty() || n_per_class == 0 {
        return Err(Error::invalid("need at least one center and one point per class"));
    }
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::invalid(format!("invalid standard deviation {std}")));
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(format!("invalid standard deviation {std}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(centers.len() * n_per_class);
    let mut labels = Vec::with_capacity(rows.capacity());
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            rows.push(center.iter().map(|c| c + normal.sample(&mut rng)).collect());
            labels.push(class);
        }
    }
    Dataset::from_rows(rows, labels)
}
