//! Versioned JSON checkpoints of trained weights: layer shapes plus row-major values.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::classifier::MlpClassifier;
use crate::encoders::GcnModel;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const FORMAT: &str = "otgen-checkpoint/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Model {
    Gcn { hidden: usize, weights: Vec<Layer> },
    Mlp { weights: Vec<Layer>, biases: Vec<Layer> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    /// Scalar type the weights were trained in.
    pub scalar: String,
    #[serde(flatten)]
    pub model: Model,
}

fn layer<T: Real>(m: &Array2<T>) -> Layer {
    Layer {
        rows: m.nrows(),
        cols: m.ncols(),
        values: m.iter().map(|v| v.as_f64()).collect(),
    }
}

fn matrix<T: Real>(l: &Layer) -> Result<Array2<T>> {
    if l.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Checkpoint("non-finite weight".into()));
    }
    Array2::from_shape_vec((l.rows, l.cols), l.values.iter().map(|&v| T::of(v)).collect())
        .map_err(|e| Error::Checkpoint(format!("layer shape {}x{}: {e}", l.rows, l.cols)))
}

fn check_chain<T>(weights: &[Array2<T>]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Checkpoint("no layers".into()));
    }
    for w in weights.windows(2) {
        if w[0].ncols() != w[1].nrows() {
            return Err(Error::Checkpoint("layer shapes do not chain".into()));
        }
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_gcn<T: Real>(m: &GcnModel<T>) -> Self {
        Self {
            format: FORMAT.into(),
            scalar: T::TAG.into(),
            model: Model::Gcn {
                hidden: m.hidden,
                weights: m.weights.iter().map(layer).collect(),
            },
        }
    }

    pub fn from_mlp<T: Real>(m: &MlpClassifier<T>) -> Self {
        Self {
            format: FORMAT.into(),
            scalar: T::TAG.into(),
            model: Model::Mlp {
                weights: m.weights.iter().map(layer).collect(),
                biases: m.biases.iter().map(layer).collect(),
            },
        }
    }

    pub fn to_gcn<T: Real>(&self) -> Result<GcnModel<T>> {
        self.check_format()?;
        match &self.model {
            Model::Gcn { hidden, weights } => {
                let weights = weights.iter().map(matrix).collect::<Result<Vec<_>>>()?;
                check_chain(&weights)?;
                Ok(GcnModel { weights, hidden: *hidden })
            }
            Model::Mlp { .. } => Err(Error::Checkpoint("checkpoint holds an MLP, not a GCN".into())),
        }
    }

    pub fn to_mlp<T: Real>(&self) -> Result<MlpClassifier<T>> {
        self.check_format()?;
        match &self.model {
            Model::Mlp { weights, biases } => {
                let weights = weights.iter().map(matrix).collect::<Result<Vec<_>>>()?;
                let biases = biases.iter().map(matrix).collect::<Result<Vec<_>>>()?;
                check_chain(&weights)?;
                let ok = biases.len() == weights.len()
                    && biases.iter().zip(&weights).all(|(b, w)| b.dim() == (1, w.ncols()));
                if !ok {
                    return Err(Error::Checkpoint("bias shapes do not match layers".into()));
                }
                Ok(MlpClassifier { weights, biases })
            }
            Model::Gcn { .. } => Err(Error::Checkpoint("checkpoint holds a GCN, not an MLP".into())),
        }
    }

    fn check_format(&self) -> Result<()> {
        if self.format == FORMAT {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!("unsupported format {:?}", self.format)))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let gcn = GcnModel::<f64>::init(5, 3, 4, 11);
        let path = dir.path().join("gcn.json");
        Checkpoint::from_gcn(&gcn).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.to_gcn::<f64>().unwrap(), gcn);
        assert!(back.to_mlp::<f64>().is_err());

        let mlp = MlpClassifier::<f64>::init(3, 2, 4, 6, 1).unwrap();
        let cp = Checkpoint::from_mlp(&mlp);
        assert_eq!(cp.to_mlp::<f64>().unwrap(), mlp);

        let mut bad = cp.clone();
        bad.format = "otgen-checkpoint/v0".into();
        assert!(bad.to_mlp::<f64>().is_err());
    }
}
