use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Layer, MlpClassifier, TrainConfig};

pub const CHECKPOINT_FORMAT: &str = "music-intent-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("unsupported checkpoint {format} version {version}")]
    Unsupported { format: String, version: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Trained parameters plus the configuration that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub labels: Vec<String>,
    pub model: MlpClassifier,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    fan_in: usize,
    fan_out: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: TrainConfig,
    labels: Vec<String>,
    layers: Vec<LayerFile>,
}

impl Checkpoint {
    pub fn write<W: Write>(&self, writer: W) -> Result<(), CheckpointError> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            labels: self.labels.clone(),
            layers: self
                .model
                .layers()
                .iter()
                .map(|l| LayerFile {
                    fan_in: l.fan_in(),
                    fan_out: l.fan_out(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        };
        serde_json::to_writer(writer, &file).map_err(|e| CheckpointError::Malformed(e.to_string()))
    }

    pub fn read<R: Read>(reader: R) -> Result<Self, CheckpointError> {
        let file: CheckpointFile = serde_json::from_reader(reader)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Unsupported {
                format: file.format,
                version: file.version,
            });
        }
        let malformed = |m: String| CheckpointError::Malformed(m);
        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, l) in file.layers.into_iter().enumerate() {
            if l.bias.len() != l.fan_out {
                return Err(malformed(format!(
                    "layer {i}: bias length {}",
                    l.bias.len()
                )));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(malformed(format!("layer {i}: non-finite parameter")));
            }
            let weights = Array2::from_shape_vec((l.fan_in, l.fan_out), l.weights)
                .map_err(|_| malformed(format!("layer {i}: weights do not match shape")))?;
            layers.push(Layer {
                weights,
                bias: Array1::from(l.bias),
            });
        }
        let model = MlpClassifier::from_layers(layers).map_err(|e| malformed(e.to_string()))?;
        if file.labels.len() != model.output_dim() {
            return Err(malformed(format!(
                "{} labels for {} outputs",
                file.labels.len(),
                model.output_dim()
            )));
        }
        Ok(Checkpoint {
            config: file.config,
            labels: file.labels,
            model,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Checkpoint::read(BufReader::new(File::open(path)?))
    }
}
