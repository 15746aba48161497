//! Versioned JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ScalingSpec};
use crate::dmm::DmmEstimate;
use crate::error::{Error, Result};
use crate::kos::KosModel;
use crate::svm::SvmMulticlassModel;

const MODEL_FORMAT: &str = "kernelgamma-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Kos(KosModel),
    Svm(SvmMulticlassModel),
}

impl Model {
    pub fn gamma(&self) -> f64 {
        match self {
            Model::Kos(m) => m.gamma,
            Model::Svm(m) => m.gamma,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        match self {
            Model::Kos(m) => m.predict(x),
            Model::Svm(m) => m.predict(x),
        }
    }

    pub fn predict_batch(&self, xs: &[&[f64]]) -> Result<Vec<usize>> {
        match self {
            Model::Kos(m) => m.predict_batch(xs),
            Model::Svm(m) => m.predict_batch(xs),
        }
    }
}

/// A trained model plus everything needed to apply it to raw input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub label_names: Vec<String>,
    pub feature_dim: usize,
    /// Scaling fitted on the training data, applied to every query.
    pub scaling: Option<ScalingSpec>,
    /// Present when γ came from the closed-form estimate.
    pub estimate: Option<DmmEstimate>,
    pub model: Model,
}

impl ModelFile {
    pub fn new(train: &Dataset, scaling: Option<ScalingSpec>, estimate: Option<DmmEstimate>, model: Model) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            label_names: train.label_names().to_vec(),
            feature_dim: train.feature_dim(),
            scaling,
            estimate,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::data(format!("not a model file (format {:?})", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::data(format!(
                "unsupported model version {} (this build reads {MODEL_VERSION})",
                file.version
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Brings a raw dataset onto the model's feature layout and scale.
    pub fn prepare(&self, ds: &Dataset) -> Result<Dataset> {
        let ds = if ds.feature_dim() < self.feature_dim {
            ds.pad_to(self.feature_dim)?
        } else if ds.feature_dim() > self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                got: ds.feature_dim(),
            });
        } else {
            ds.clone()
        };
        match &self.scaling {
            Some(spec) => spec.apply(&ds),
            None => Ok(ds),
        }
    }

    /// Predicted class ids for every sample of `ds` (raw, unscaled).
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<usize>> {
        let ds = self.prepare(ds)?;
        self.model.predict_batch(&ds.features())
    }
}

pub(crate) mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
