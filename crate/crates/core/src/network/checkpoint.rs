//! JSON checkpoints.
//!
//! Values are written as shortest round-trip decimals, so save/load is
//! lossless in both precisions and re-saving a loaded file reproduces it
//! byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::model::{DaRnnModel, DaRnnParams};
use crate::error::{Error, Result};
use crate::features::NormalizationStats;
use crate::nn::Matrix;
use crate::scalar::{Precision, Scalar};

pub const CHECKPOINT_FORMAT: &str = "darnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub name: String,
    pub tensors: Vec<TensorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub precision: Precision,
    /// `layer.tensor` names in storage order.
    pub manifest: Vec<String>,
    pub config: NetworkConfig,
    #[serde(default)]
    pub normalization: Option<NormalizationStats>,
    pub layers: Vec<LayerRecord>,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &DaRnnModel<T>, normalization: Option<NormalizationStats>) -> Self {
        let layers = model
            .params
            .layers()
            .into_iter()
            .map(|(layer, tensors)| LayerRecord {
                name: layer.to_string(),
                tensors: tensors
                    .into_iter()
                    .map(|(name, m)| TensorRecord {
                        name: name.to_string(),
                        rows: m.rows(),
                        cols: m.cols(),
                        data: m.as_slice().iter().map(|v| v.as_f64()).collect(),
                    })
                    .collect(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            precision: T::PRECISION,
            manifest: model.params.qualified_names(),
            config: model.config.clone(),
            normalization,
            layers,
        }
    }

    fn check_header(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!(
                "expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}, found {} v{}",
                self.format, self.version
            )));
        }
        Ok(())
    }

    /// Rebuilds the model stored in this checkpoint.
    pub fn to_model<T: Scalar>(&self) -> Result<DaRnnModel<T>> {
        self.check_header()?;
        if self.precision != T::PRECISION {
            log::warn!("checkpoint stored as {}, loading as {}", self.precision.as_str(), T::PRECISION.as_str());
        }
        let mut model = DaRnnModel::zeros(self.config.clone())?;
        let all: Vec<&str> = model.params.layers().iter().map(|(l, _)| *l).collect();
        copy_layers(self, &mut model.params, &all)?;
        if model.params.qualified_names() != self.manifest {
            return Err(Error::Schema("checkpoint manifest does not match its layers".into()));
        }
        Ok(model)
    }

    /// Overwrites `layers` of `params` with the stored tensors.
    pub fn load_layers_into<T: Scalar>(&self, params: &mut DaRnnParams<T>, layers: &[&str]) -> Result<()> {
        self.check_header()?;
        copy_layers(self, params, layers)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::schema_at(origin, e))?;
        ckpt.check_header().map_err(|e| Error::schema_at(origin, e))?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, &path.display().to_string())
    }
}

fn copy_layers<T: Scalar>(ckpt: &Checkpoint, params: &mut DaRnnParams<T>, wanted: &[&str]) -> Result<()> {
    for (layer, tensors) in params.layers_mut() {
        if !wanted.contains(&layer) {
            continue;
        }
        let stored = ckpt
            .layers
            .iter()
            .find(|l| l.name == layer)
            .ok_or_else(|| Error::Shape(format!("checkpoint has no layer `{layer}`")))?;
        if stored.tensors.len() != tensors.len() {
            return Err(Error::Shape(format!(
                "layer `{layer}`: checkpoint has {} tensors, model has {}",
                stored.tensors.len(),
                tensors.len()
            )));
        }
        for ((name, m), rec) in tensors.into_iter().zip(&stored.tensors) {
            if rec.name != name || rec.rows != m.rows() || rec.cols != m.cols() || rec.data.len() != rec.rows * rec.cols {
                return Err(Error::Shape(format!(
                    "layer `{layer}`: tensor `{}` is {}x{} in checkpoint, model expects `{name}` {}x{}",
                    rec.name,
                    rec.rows,
                    rec.cols,
                    m.rows(),
                    m.cols()
                )));
            }
            *m = Matrix::from_vec(rec.rows, rec.cols, rec.data.iter().map(|&v| T::of(v)).collect())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_bytes_and_values() {
        let model = DaRnnModel::<f64>::new(NetworkConfig::compact(3), 5).unwrap();
        let ckpt = Checkpoint::from_model(&model, None);
        let text = ckpt.to_json_string();
        let back = Checkpoint::from_json_str(&text, "mem").unwrap();
        let restored: DaRnnModel<f64> = back.to_model().unwrap();
        assert_eq!(restored, model);
        assert_eq!(Checkpoint::from_model(&restored, None).to_json_string(), text);
    }

    #[test]
    fn f32_round_trip() {
        let model = DaRnnModel::<f32>::new(NetworkConfig::compact(2), 1).unwrap();
        let text = Checkpoint::from_model(&model, None).to_json_string();
        let restored: DaRnnModel<f32> = Checkpoint::from_json_str(&text, "mem").unwrap().to_model().unwrap();
        assert_eq!(restored, model);
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let donor = DaRnnModel::<f64>::new(NetworkConfig::compact(4), 0).unwrap();
        let ckpt = Checkpoint::from_model(&donor, None);
        let mut other = DaRnnModel::<f64>::new(NetworkConfig::compact(3), 0).unwrap();
        let err = ckpt.load_layers_into(&mut other.params, &["lstm_phi"]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
        assert!(err.to_string().contains("lstm_phi"), "{err}");
    }
}
