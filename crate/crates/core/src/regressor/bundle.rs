//! The deployable model bundle and its on-disk JSON envelope:
//!
//! ```json
//! {"version": 1, "architecture": {..}, "t_bar": {..26 features..},
//!  "metadata": {..}, "models": {"scatter": [..], "line": [..], "density": [..]},
//!  "checksum": "<sha256 hex of the envelope without this field>"}
//! ```
//!
//! Each model is a flat parameter array in the layer order documented in
//! [`super::network`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{ConvRegressor, ParamDump};
use super::network::Architecture;
use super::train::{train_model, TrainConfig, TypeData, TypeHistory};
use crate::error::{Error, Result};
use crate::stats::FeatureVector;
use crate::table::PlotType;

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub config: TrainConfig,
    pub history: BTreeMap<PlotType, TypeHistory>,
}

/// One regressor per plot type plus the training-set feature means used as
/// loss normalizers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub architecture: Architecture,
    pub models: BTreeMap<PlotType, ConvRegressor>,
    pub t_bar: FeatureVector,
    pub metadata: TrainingMetadata,
}

impl ModelBundle {
    pub(crate) fn empty(architecture: Architecture, t_bar: FeatureVector, config: TrainConfig) -> Self {
        ModelBundle {
            architecture,
            models: BTreeMap::new(),
            t_bar,
            metadata: TrainingMetadata {
                config,
                history: BTreeMap::new(),
            },
        }
    }

    pub(crate) fn insert(&mut self, p: PlotType, model: ConvRegressor, history: TypeHistory) {
        self.models.insert(p, model);
        self.metadata.history.insert(p, history);
    }

    pub fn model(&self, p: PlotType) -> Result<&ConvRegressor> {
        self.models.get(&p).ok_or(Error::MissingModel(p))
    }

    /// Retrains one plot type's model, keeping `t_bar` and every other model
    /// untouched.
    pub fn retrain(&mut self, p: PlotType, data: &TypeData, cfg: &TrainConfig) -> Result<()> {
        let (model, history) = train_model(&self.architecture, p, data, &self.t_bar, cfg)?;
        self.insert(p, model, history);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let payload = Payload {
            version: BUNDLE_VERSION,
            architecture: self.architecture.clone(),
            t_bar: self.t_bar,
            metadata: self.metadata.clone(),
            models: self.models.iter().map(|(p, m)| (*p, ParamDump::from(m))).collect(),
        };
        let checksum = payload.checksum();
        let env = Envelope { payload, checksum };
        serde_json::to_string(&env).map_err(|e| Error::CorruptBundle(e.to_string()))
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let corrupt = |e: serde_json::Error| Error::CorruptBundle(e.to_string());
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(corrupt)?;
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::CorruptBundle("missing version".into()))?;
        if version != BUNDLE_VERSION as u64 {
            return Err(Error::VersionMismatch {
                found: version.min(u32::MAX as u64) as u32,
                expected: BUNDLE_VERSION,
            });
        }
        let env: Envelope = serde_json::from_value(value).map_err(corrupt)?;
        if env.payload.checksum() != env.checksum {
            return Err(Error::CorruptBundle("checksum mismatch".into()));
        }
        let Payload {
            architecture,
            t_bar,
            metadata,
            models,
            ..
        } = env.payload;
        if !t_bar.is_finite() {
            return Err(Error::CorruptBundle("non-finite t_bar".into()));
        }
        let mut out = BTreeMap::new();
        for (p, dump) in models {
            out.insert(p, dump.into_model(architecture.clone())?);
        }
        if let Some(p) = PlotType::ALL.into_iter().find(|p| !out.contains_key(p)) {
            return Err(Error::CorruptBundle(format!("no model for {p}")));
        }
        Ok(ModelBundle {
            architecture,
            models: out,
            t_bar,
            metadata,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Payload {
    version: u32,
    architecture: Architecture,
    t_bar: FeatureVector,
    metadata: TrainingMetadata,
    models: BTreeMap<PlotType, ParamDump>,
}

impl Payload {
    fn checksum(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("payload serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    #[serde(flatten)]
    payload: Payload,
    checksum: String,
}

pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, bundle.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelBundle::from_json(&bytes)
}
