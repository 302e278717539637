//! JSON model checkpoints: shapes, row-major parameters, training setup.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, DenseLayer, GaeModel, GcnLayer, PcaModel, TrainOptions, VaeModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    rows: usize,
    cols: usize,
    /// Row-major values.
    data: Vec<f64>,
}

impl MatrixJson {
    fn pack(m: &Array2<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().copied().collect(),
        }
    }

    fn unpack(&self) -> Result<Array2<f64>, String> {
        Array2::from_shape_vec((self.rows, self.cols), self.data.clone())
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcnLayerJson {
    u: MatrixJson,
    w: MatrixJson,
    b: MatrixJson,
    activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayerJson {
    w: MatrixJson,
    b: MatrixJson,
    activation: Activation,
}

/// Serializable model state plus provenance (training config, seed, config
/// hash of the run that produced it).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelCheckpoint {
    Gae {
        n: usize,
        a_hat: MatrixJson,
        layers: Vec<GcnLayerJson>,
        train: TrainOptions,
        seed: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        config_hash: Option<String>,
    },
    Vae {
        n: usize,
        layers: Vec<DenseLayerJson>,
        train: TrainOptions,
        seed: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        config_hash: Option<String>,
    },
    Pca {
        n: usize,
        mean: Vec<f64>,
        components: MatrixJson,
        eigenvalues: Vec<f64>,
        seed: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        config_hash: Option<String>,
    },
}

impl ModelCheckpoint {
    pub fn from_gae(
        model: &GaeModel,
        train: &TrainOptions,
        seed: u64,
        config_hash: Option<&str>,
    ) -> Self {
        ModelCheckpoint::Gae {
            n: model.n,
            a_hat: MatrixJson::pack(&model.a_hat),
            layers: model
                .layers
                .iter()
                .map(|l| GcnLayerJson {
                    u: MatrixJson::pack(&l.u),
                    w: MatrixJson::pack(&l.w),
                    b: MatrixJson::pack(&l.b),
                    activation: l.activation,
                })
                .collect(),
            train: *train,
            seed,
            config_hash: config_hash.map(str::to_string),
        }
    }

    pub fn from_vae(
        model: &VaeModel,
        train: &TrainOptions,
        seed: u64,
        config_hash: Option<&str>,
    ) -> Self {
        ModelCheckpoint::Vae {
            n: model.n,
            layers: model
                .layers
                .iter()
                .map(|l| DenseLayerJson {
                    w: MatrixJson::pack(&l.w),
                    b: MatrixJson::pack(&l.b),
                    activation: l.activation,
                })
                .collect(),
            train: *train,
            seed,
            config_hash: config_hash.map(str::to_string),
        }
    }

    pub fn from_pca(model: &PcaModel, seed: u64, config_hash: Option<&str>) -> Self {
        ModelCheckpoint::Pca {
            n: model.n,
            mean: model.mean.to_vec(),
            components: MatrixJson::pack(&model.components),
            eigenvalues: model.eigenvalues.clone(),
            seed,
            config_hash: config_hash.map(str::to_string),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelCheckpoint::Gae { .. } => "gae",
            ModelCheckpoint::Vae { .. } => "vae",
            ModelCheckpoint::Pca { .. } => "pca",
        }
    }

    pub fn to_gae(&self) -> Result<GaeModel, String> {
        let ModelCheckpoint::Gae { n, a_hat, layers, .. } = self else {
            return Err(format!("checkpoint holds a {} model", self.kind()));
        };
        Ok(GaeModel {
            n: *n,
            a_hat: a_hat.unpack()?,
            layers: layers
                .iter()
                .map(|l| {
                    Ok(GcnLayer {
                        u: l.u.unpack()?,
                        w: l.w.unpack()?,
                        b: l.b.unpack()?,
                        activation: l.activation,
                    })
                })
                .collect::<Result<Vec<_>, String>>()?,
        })
    }

    pub fn to_vae(&self) -> Result<VaeModel, String> {
        let ModelCheckpoint::Vae { n, layers, .. } = self else {
            return Err(format!("checkpoint holds a {} model", self.kind()));
        };
        Ok(VaeModel {
            n: *n,
            layers: layers
                .iter()
                .map(|l| {
                    Ok(DenseLayer {
                        w: l.w.unpack()?,
                        b: l.b.unpack()?,
                        activation: l.activation,
                    })
                })
                .collect::<Result<Vec<_>, String>>()?,
        })
    }

    pub fn to_pca(&self) -> Result<PcaModel, String> {
        let ModelCheckpoint::Pca {
            n,
            mean,
            components,
            eigenvalues,
            ..
        } = self
        else {
            return Err(format!("checkpoint holds a {} model", self.kind()));
        };
        Ok(PcaModel {
            n: *n,
            mean: Array1::from_vec(mean.clone()),
            components: components.unpack()?,
            eigenvalues: eigenvalues.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("serializable"))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}
