//! Dialect classifier over frozen-backbone hidden states.
//!
//! The backbone yields one frame sequence per layer ([`LayerStack`]); the
//! probe mixes them with learnable weights, applies pointwise convolutions,
//! mean-pools over time and classifies. The backbone's feedforward layers
//! carry trainable LoRA adapters while their base weights stay frozen.

pub mod encoder;
pub mod head;
pub mod lora;
pub mod model;
pub mod nn;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use encoder::{Backbone, Encoder, EncoderConfig, Frontend, NamedLora};
pub use head::ProbeHead;
pub use lora::LoraAdapter;
pub use model::{DialectModel, ModelGrads, ParamGroup, ProbeState};

pub const DEFAULT_LORA_RANK: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProbeError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("probe state is not initialized")]
    Uninitialized,
    #[error("LoRA target {0} does not exist in the backbone")]
    UnknownLoraTarget(String),
    #[error("waveform has {samples} samples, backbone needs at least {minimum}")]
    TooShort { samples: usize, minimum: usize },
    #[error("invalid probe configuration: {0}")]
    InvalidConfig(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

/// Hidden states of every backbone layer for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    /// `L + 1` matrices of shape `T x D`.
    pub layers: Vec<Array2<f64>>,
    pub frame_rate_hz: f64,
}

impl LayerStack {
    pub fn new(layers: Vec<Array2<f64>>, frame_rate_hz: f64) -> Result<Self, ProbeError> {
        let first = layers
            .first()
            .ok_or_else(|| ProbeError::DimensionMismatch("empty layer stack".into()))?;
        if layers.len() < 2 {
            return Err(ProbeError::DimensionMismatch("need the frontend layer plus at least one block".into()));
        }
        if first.nrows() == 0 || first.ncols() == 0 {
            return Err(ProbeError::DimensionMismatch("layers must have at least one frame and feature".into()));
        }
        if layers.iter().any(|l| l.dim() != first.dim()) {
            return Err(ProbeError::DimensionMismatch("layers disagree on T or D".into()));
        }
        Ok(LayerStack { layers, frame_rate_hz })
    }

    pub fn frames(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[0].ncols()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerWeighting {
    /// Convex combination through a softmax over learnable logits.
    #[default]
    Softmax,
    /// Free weights, initialised uniform.
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Backbone layers including the frontend output (`L + 1`).
    pub num_layers: usize,
    pub feature_dim: usize,
    pub conv_channels: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub num_classes: usize,
    #[serde(default)]
    pub layer_weighting: LayerWeighting,
    pub lora_rank: usize,
    /// Defaults to the rank, i.e. a scale of 1.
    #[serde(default)]
    pub lora_alpha: Option<f64>,
    /// `None` adapts every feedforward layer.
    #[serde(default)]
    pub lora_targets: Option<Vec<String>>,
    #[serde(default)]
    pub seed: u64,
}

impl ProbeConfig {
    /// Defaults: convs `[D, D, 256]`, one hidden dense layer of 256, rank 64.
    pub fn new(num_layers: usize, feature_dim: usize, num_classes: usize) -> Self {
        ProbeConfig {
            num_layers,
            feature_dim,
            conv_channels: vec![feature_dim, feature_dim, 256],
            head_hidden: vec![256],
            num_classes,
            layer_weighting: LayerWeighting::Softmax,
            lora_rank: DEFAULT_LORA_RANK,
            lora_alpha: None,
            lora_targets: None,
            seed: 0,
        }
    }

    pub fn lora_alpha(&self) -> f64 {
        self.lora_alpha.unwrap_or(self.lora_rank as f64)
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |m: &str| Err(ProbeError::InvalidConfig(m.into()));
        if self.num_layers < 2 {
            return bad("num_layers must count the frontend plus at least one block");
        }
        if self.feature_dim == 0 || self.num_classes < 2 {
            return bad("feature_dim must be positive and num_classes at least 2");
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) || self.head_hidden.contains(&0) {
            return bad("conv stack must be nonempty with positive widths");
        }
        if self.lora_rank == 0 {
            return bad("lora_rank must be at least 1");
        }
        Ok(())
    }
}

/// Class posterior for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub utterance_id: String,
    pub probabilities: Vec<f64>,
    pub label: usize,
    pub max_probability: f64,
}

impl Prediction {
    pub fn from_logits(utterance_id: impl Into<String>, logits: &[f64]) -> Self {
        let probabilities = nn::softmax(logits);
        let (label, max_probability) = probabilities
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p > best.1 { (i, p) } else { best });
        Prediction {
            utterance_id: utterance_id.into(),
            probabilities,
            label,
            max_probability,
        }
    }
}

#[cfg(test)]
mod tests;
