//! Closed-form RBF kernel width selection, benchmarked against grid search.
//!
//! The width comes from two geometric quantities of the labeled data, the
//! largest class diameter `D_max` and an inter-class distance `d`:
//! `γ = 1 / (D_max · d)`. Two classifiers consume it, a kernel subspace
//! classifier ([`kos`]) and a soft-margin SVM ([`svm`]). [`tuning`] provides
//! the conventional cross-validated search and [`bench`](mod@bench) compares the two.
//!
//! ```
//! use kernelgamma::{compute_geometry, estimate, Dataset, Variant};
//!
//! let ds = Dataset::from_rows(
//!     vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![3.0, 0.0], vec![3.0, 1.0]],
//!     vec![0, 0, 1, 1],
//! )
//! .unwrap();
//! let geom = compute_geometry(&ds).unwrap();
//! let est = estimate(&geom, Variant::Min).unwrap();
//! assert!((est.gamma - 1.0 / 3.0).abs() < 1e-12);
//! ```

pub mod bench;
pub mod dataset;
pub mod dmm;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod kos;
pub mod persist;
pub mod svm;
pub mod synth;
pub mod tuning;

pub use dataset::{Dataset, FileFormat, Sample, ScalingSpec};
pub use dmm::{estimate, DmmEstimate, Variant};
pub use error::{Error, Result};
pub use geometry::{compute_geometry, ClassGeometry};
pub use kernel::{GramMatrix, Rbf};
pub use kos::{KosModel, KosParams, QueryNorm};
pub use persist::{Model, ModelFile};
pub use svm::{SvmBinaryModel, SvmMulticlassModel, SvmParams};
pub use tuning::{grid_search, GridSpec, Method, TuneResult};
