//! Frozen backbone: a feature frontend followed by a stack of residual
//! feedforward blocks whose dense layers accept LoRA adapters.
//!
//! Layer 0 of the produced [`LayerStack`] is the projected frontend output;
//! layer `k` is the residual stream after block `k`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lora::{LoraAdapter, LoraGrads};
use super::nn::{gelu, gelu_grad, Linear};
use super::{LayerStack, ProbeError};

/// Turns a 16 kHz waveform into a `frames x feature_dim` matrix.
pub trait Frontend {
    fn feature_dim(&self) -> usize;
    fn frame_rate_hz(&self) -> f64;
    /// Shortest waveform that yields at least one frame.
    fn min_samples(&self) -> usize;
    fn features(&self, waveform: &[f32]) -> Result<Array2<f64>, ProbeError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub num_blocks: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardBlock {
    pub fc1: Linear,
    pub fc2: Linear,
    pub lora1: Option<LoraAdapter>,
    pub lora2: Option<LoraAdapter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub input_proj: Linear,
    pub blocks: Vec<FeedForwardBlock>,
}

/// Per-block activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockTrace {
    z: Array2<f64>,
    a: Array2<f64>,
    u1: Option<Array2<f64>>,
    u2: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct EncoderTrace {
    blocks: Vec<BlockTrace>,
}

/// Gradients of the adapters of one block; `None` where no adapter exists.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLoraGrads {
    pub fc1: Option<LoraGrads>,
    pub fc2: Option<LoraGrads>,
}

/// Adapter weights keyed by target name, for checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedLora {
    pub target: String,
    pub adapter: LoraAdapter,
}

impl Encoder {
    /// Seeded random weights, scaled down so the residual stream stays bounded.
    pub fn seeded(config: &EncoderConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let input_proj = Linear::init(config.input_dim, config.hidden_dim, &mut rng);
        let blocks = (0..config.num_blocks)
            .map(|_| {
                let mut fc1 = Linear::init(config.hidden_dim, config.ffn_dim, &mut rng);
                let mut fc2 = Linear::init(config.ffn_dim, config.hidden_dim, &mut rng);
                fc2.weight *= 0.5;
                fc2.bias *= 0.5;
                fc1.bias *= 0.5;
                FeedForwardBlock {
                    fc1,
                    fc2,
                    lora1: None,
                    lora2: None,
                }
            })
            .collect();
        Encoder { input_proj, blocks }
    }

    pub fn hidden_dim(&self) -> usize {
        self.input_proj.output_dim()
    }

    pub fn num_layers(&self) -> usize {
        self.blocks.len() + 1
    }

    /// Names of every adaptable dense layer, in block order.
    pub fn feedforward_names(&self) -> Vec<String> {
        (0..self.blocks.len())
            .flat_map(|i| [format!("blocks.{i}.ffn.fc1"), format!("blocks.{i}.ffn.fc2")])
            .collect()
    }

    fn slot_mut(&mut self, name: &str) -> Option<(&Linear, &mut Option<LoraAdapter>)> {
        let rest = name.strip_prefix("blocks.")?;
        let (idx, layer) = rest.split_once(".ffn.")?;
        let block = self.blocks.get_mut(idx.parse::<usize>().ok()?)?;
        match layer {
            "fc1" => Some((&block.fc1, &mut block.lora1)),
            "fc2" => Some((&block.fc2, &mut block.lora2)),
            _ => None,
        }
    }

    /// Attaches fresh adapters. `targets = None` means every feedforward layer.
    pub fn apply_lora<R: Rng + ?Sized>(
        &mut self,
        rank: usize,
        alpha: f64,
        targets: Option<&[String]>,
        rng: &mut R,
    ) -> Result<(), ProbeError> {
        if rank == 0 {
            return Err(ProbeError::InvalidConfig("LoRA rank must be at least 1".into()));
        }
        let names = match targets {
            Some(t) => t.to_vec(),
            None => self.feedforward_names(),
        };
        for name in &names {
            if self.slot_mut(name).is_none() {
                return Err(ProbeError::UnknownLoraTarget(name.clone()));
            }
        }
        for name in &names {
            let (base, slot) = self.slot_mut(name).expect("checked above");
            *slot = Some(LoraAdapter::init(base.input_dim(), base.output_dim(), rank, alpha, rng));
        }
        Ok(())
    }

    pub fn lora_state(&self) -> Vec<NamedLora> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            for (layer, slot) in [("fc1", &b.lora1), ("fc2", &b.lora2)] {
                if let Some(adapter) = slot {
                    out.push(NamedLora {
                        target: format!("blocks.{i}.ffn.{layer}"),
                        adapter: adapter.clone(),
                    });
                }
            }
        }
        out
    }

    /// Replaces all adapters with `state`.
    pub fn load_lora_state(&mut self, state: &[NamedLora]) -> Result<(), ProbeError> {
        for b in &mut self.blocks {
            b.lora1 = None;
            b.lora2 = None;
        }
        for named in state {
            let (base, slot) = self
                .slot_mut(&named.target)
                .ok_or_else(|| ProbeError::UnknownLoraTarget(named.target.clone()))?;
            if named.adapter.a.ncols() != base.input_dim() || named.adapter.b.nrows() != base.output_dim() {
                return Err(ProbeError::DimensionMismatch(format!("adapter {} has wrong shape", named.target)));
            }
            *slot = Some(named.adapter.clone());
        }
        Ok(())
    }

    pub fn has_lora(&self) -> bool {
        self.blocks.iter().any(|b| b.lora1.is_some() || b.lora2.is_some())
    }

    /// Frozen weights, in a fixed order.
    pub fn base_parameters(&self) -> Vec<&[f64]> {
        let linears = core::iter::once(&self.input_proj).chain(self.blocks.iter().flat_map(|b| [&b.fc1, &b.fc2]));
        let mut out = Vec::new();
        for l in linears {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn forward(&self, features: &Array2<f64>, frame_rate_hz: f64) -> Result<(LayerStack, EncoderTrace), ProbeError> {
        if features.ncols() != self.input_proj.input_dim() {
            return Err(ProbeError::DimensionMismatch(format!(
                "frontend gives {} features, encoder expects {}",
                features.ncols(),
                self.input_proj.input_dim()
            )));
        }
        if features.nrows() == 0 {
            return Err(ProbeError::TooShort { samples: 0, minimum: 1 });
        }
        let mut layers = Vec::with_capacity(self.blocks.len() + 1);
        let mut traces = Vec::with_capacity(self.blocks.len());
        layers.push(self.input_proj.forward(features));
        for block in &self.blocks {
            let x = layers.last().expect("nonempty");
            let mut z = block.fc1.forward(x);
            let u1 = block.lora1.as_ref().map(|l| {
                let (delta, u) = l.forward(x);
                z += &delta;
                u
            });
            let a = z.mapv(gelu);
            let mut f = block.fc2.forward(&a);
            let u2 = block.lora2.as_ref().map(|l| {
                let (delta, u) = l.forward(&a);
                f += &delta;
                u
            });
            layers.push(f + x);
            traces.push(BlockTrace { z, a, u1, u2 });
        }
        Ok((LayerStack::new(layers, frame_rate_hz)?, EncoderTrace { blocks: traces }))
    }

    /// Backpropagates per-layer gradients `dlayers[k] = dL/d layer_k`
    /// (direct contributions only) into the adapters.
    pub fn backward(&self, stack: &LayerStack, trace: &EncoderTrace, dlayers: &[Array2<f64>]) -> Vec<BlockLoraGrads> {
        let n = self.blocks.len();
        let mut grads: Vec<BlockLoraGrads> = Vec::with_capacity(n);
        let mut g = dlayers[n].clone();
        for k in (1..=n).rev() {
            let block = &self.blocks[k - 1];
            let t = &trace.blocks[k - 1];
            let x = &stack.layers[k - 1];
            let (mut da, _) = block.fc2.backward(&t.a, &g);
            let fc2 = match (&block.lora2, &t.u2) {
                (Some(l), Some(u)) => {
                    let (dx, lg) = l.backward(&t.a, u, &g);
                    da += &dx;
                    Some(lg)
                }
                _ => None,
            };
            let dz = da * &t.z.mapv(gelu_grad);
            let (mut dx, _) = block.fc1.backward(x, &dz);
            let fc1 = match (&block.lora1, &t.u1) {
                (Some(l), Some(u)) => {
                    let (dxl, lg) = l.backward(x, u, &dz);
                    dx += &dxl;
                    Some(lg)
                }
                _ => None,
            };
            grads.push(BlockLoraGrads { fc1, fc2 });
            g = g + dx + &dlayers[k - 1];
        }
        grads.reverse();
        grads
    }
}

/// A frontend plus a frozen encoder.
#[derive(Debug, Clone)]
pub struct Backbone<F> {
    pub id: String,
    pub frontend: F,
    pub encoder: Encoder,
}

impl<F: Frontend> Backbone<F> {
    pub fn new(id: impl Into<String>, frontend: F, encoder: Encoder) -> Result<Self, ProbeError> {
        if frontend.feature_dim() != encoder.input_proj.input_dim() {
            return Err(ProbeError::DimensionMismatch("frontend and encoder disagree on feature size".into()));
        }
        Ok(Backbone {
            id: id.into(),
            frontend,
            encoder,
        })
    }

    pub fn layer_stack(&self, waveform: &[f32]) -> Result<LayerStack, ProbeError> {
        self.layer_stack_traced(waveform).map(|(s, _)| s)
    }

    pub fn layer_stack_traced(&self, waveform: &[f32]) -> Result<(LayerStack, EncoderTrace), ProbeError> {
        if waveform.len() < self.frontend.min_samples() {
            return Err(ProbeError::TooShort {
                samples: waveform.len(),
                minimum: self.frontend.min_samples(),
            });
        }
        let feats = self.frontend.features(waveform)?;
        self.encoder.forward(&feats, self.frontend.frame_rate_hz())
    }

    pub fn apply_lora<R: Rng + ?Sized>(
        &mut self,
        rank: usize,
        alpha: f64,
        targets: Option<&[String]>,
        rng: &mut R,
    ) -> Result<(), ProbeError> {
        self.encoder.apply_lora(rank, alpha, targets, rng)
    }
}
