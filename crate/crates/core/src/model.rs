//! A network plus its parameters, and the JSON checkpoint format.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Network, NetworkSpec, Workspace};

pub const CHECKPOINT_FORMAT: &str = "trafficmtl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialised model. Floats are written in shortest round-trip form, so a
/// save/load cycle reproduces every parameter bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub network: NetworkSpec,
    pub params: Vec<f64>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    network: Network,
    params: Vec<f64>,
}

impl Model {
    /// Builds the network and draws initial weights from `seed`.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let network = Network::build(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = network.init_params(&mut rng);
        Ok(Model { network, params })
    }

    pub fn from_parts(spec: NetworkSpec, params: Vec<f64>) -> Result<Self> {
        let network = Network::build(spec)?;
        if params.len() != network.param_count() {
            return Err(Error::Shape(format!(
                "network has {} parameters, got {}",
                network.param_count(),
                params.len()
            )));
        }
        if let Some(&bad) = params.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                context: "model parameters".into(),
                value: bad,
            });
        }
        Ok(Model { network, params })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn trunk_params(&self) -> &[f64] {
        &self.params[..self.network.trunk_param_count()]
    }

    pub fn head_params(&self, head: usize) -> &[f64] {
        &self.params[self.network.heads()[head].param_range()]
    }

    pub fn workspace(&self) -> Workspace {
        self.network.workspace()
    }

    /// Probabilities of every head for one flat `(k, 2)` input.
    pub fn predict_proba(&self, input: &[f64], ws: &mut Workspace) -> Result<Vec<Vec<f64>>> {
        self.network.predict_proba(&self.params, input, ws)
    }

    pub fn to_checkpoint(&self, metadata: BTreeMap<String, serde_json::Value>) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            network: self.network.spec().clone(),
            params: self.params.clone(),
            metadata,
        }
    }

    pub fn from_checkpoint(checkpoint: Checkpoint) -> Result<Self> {
        if checkpoint.format != CHECKPOINT_FORMAT {
            return Err(Error::data(
                "checkpoint",
                format!("unknown format '{}'", checkpoint.format),
            ));
        }
        if checkpoint.version != CHECKPOINT_VERSION {
            return Err(Error::data(
                "checkpoint",
                format!("unsupported version {}", checkpoint.version),
            ));
        }
        Model::from_parts(checkpoint.network, checkpoint.params)
    }

    pub fn save_json<W: Write>(&self, writer: W, metadata: BTreeMap<String, serde_json::Value>) -> Result<()> {
        serde_json::to_writer(writer, &self.to_checkpoint(metadata))
            .map_err(|e| Error::data("checkpoint output", e.to_string()))
    }

    pub fn load_json<R: Read>(reader: R) -> Result<(Self, BTreeMap<String, serde_json::Value>)> {
        let checkpoint: Checkpoint =
            serde_json::from_reader(reader).map_err(|e| Error::data("checkpoint", e.to_string()))?;
        let metadata = checkpoint.metadata.clone();
        Ok((Model::from_checkpoint(checkpoint)?, metadata))
    }
}

/// Index of the largest probability; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
