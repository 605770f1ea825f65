use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{Backbone, BlockLoraGrads, Frontend, NamedLora};
use super::head::{HeadGrads, ProbeHead};
use super::lora::LoraGrads;
use super::{LayerStack, Prediction, ProbeConfig, ProbeError};

/// Everything trainable: the probe head and the backbone adapters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeState {
    pub head: ProbeHead,
    pub lora: Vec<NamedLora>,
}

/// Which part of the model a trainable tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParamGroup {
    LayerWeights,
    Conv,
    Head,
    Lora,
}

#[derive(Debug, Clone)]
pub struct DialectModel<F> {
    pub config: ProbeConfig,
    pub backbone: Backbone<F>,
    pub head: ProbeHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub head: HeadGrads,
    pub lora: Vec<BlockLoraGrads>,
}

impl<F: Frontend> DialectModel<F> {
    /// Fresh probe plus fresh LoRA adapters on `backbone`, seeded from the config.
    pub fn new(config: ProbeConfig, mut backbone: Backbone<F>) -> Result<Self, ProbeError> {
        config.validate()?;
        if config.num_layers != backbone.encoder.num_layers() || config.feature_dim != backbone.encoder.hidden_dim() {
            return Err(ProbeError::DimensionMismatch(alloc::format!(
                "probe expects {} layers of width {}, backbone has {} of width {}",
                config.num_layers,
                config.feature_dim,
                backbone.encoder.num_layers(),
                backbone.encoder.hidden_dim()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let head = ProbeHead::init(&config, &mut rng)?;
        backbone.apply_lora(config.lora_rank, config.lora_alpha(), config.lora_targets.as_deref(), &mut rng)?;
        Ok(DialectModel { config, backbone, head })
    }

    /// Probe with no adapters attached; used to compare against the plain backbone.
    pub fn without_lora(config: ProbeConfig, backbone: Backbone<F>) -> Result<Self, ProbeError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let head = ProbeHead::init(&config, &mut rng)?;
        Ok(DialectModel { config, backbone, head })
    }

    pub fn num_classes(&self) -> usize {
        self.head.num_classes()
    }

    pub fn layer_stack(&self, waveform: &[f32]) -> Result<LayerStack, ProbeError> {
        self.backbone.layer_stack(waveform)
    }

    pub fn logits(&self, waveform: &[f32]) -> Result<Vec<f64>, ProbeError> {
        self.head.forward(&self.layer_stack(waveform)?)
    }

    pub fn predict_proba(&self, utterance_id: &str, waveform: &[f32]) -> Result<Prediction, ProbeError> {
        Ok(Prediction::from_logits(utterance_id, &self.logits(waveform)?))
    }

    /// Cross-entropy loss and gradients for one utterance.
    pub fn loss_and_grads(&self, waveform: &[f32], label: usize) -> Result<(f64, ModelGrads), ProbeError> {
        let (stack, enc_trace) = self.backbone.layer_stack_traced(waveform)?;
        let (logits, head_trace) = self.head.forward_traced(&stack)?;
        if label >= logits.len() {
            return Err(ProbeError::LabelOutOfRange {
                label,
                classes: logits.len(),
            });
        }
        let mut probs = super::nn::softmax(&logits);
        let loss = -libm::log(probs[label].max(f64::MIN_POSITIVE));
        probs[label] -= 1.0;
        let (head, dlayers) = self.head.backward(&stack, &head_trace, &probs);
        let lora = if self.backbone.encoder.has_lora() {
            self.backbone.encoder.backward(&stack, &enc_trace, &dlayers)
        } else {
            Vec::new()
        };
        Ok((loss, ModelGrads { head, lora }))
    }

    pub fn state(&self) -> ProbeState {
        ProbeState {
            head: self.head.clone(),
            lora: self.backbone.encoder.lora_state(),
        }
    }

    pub fn load_state(&mut self, state: &ProbeState) -> Result<(), ProbeError> {
        if state.head.layer_logits.len() != self.backbone.encoder.num_layers() {
            return Err(ProbeError::DimensionMismatch("state does not match the backbone depth".into()));
        }
        self.backbone.encoder.load_lora_state(&state.lora)?;
        self.head = state.head.clone();
        Ok(())
    }

    pub fn zero_grads(&self) -> ModelGrads {
        let lora = if self.backbone.encoder.has_lora() {
            self.backbone
                .encoder
                .blocks
                .iter()
                .map(|b| BlockLoraGrads {
                    fc1: b.lora1.as_ref().map(LoraGrads::zeros_like),
                    fc2: b.lora2.as_ref().map(LoraGrads::zeros_like),
                })
                .collect()
        } else {
            Vec::new()
        };
        ModelGrads {
            head: HeadGrads::zeros_like(&self.head),
            lora,
        }
    }

    /// Mutable views of every trainable tensor, in the order of [`ModelGrads::params`].
    pub fn params_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        fn sl<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        let mut out: Vec<(ParamGroup, &mut [f64])> = Vec::new();
        out.push((ParamGroup::LayerWeights, sl(&mut self.head.layer_logits)));
        for l in &mut self.head.conv {
            out.push((ParamGroup::Conv, sl(&mut l.weight)));
            out.push((ParamGroup::Conv, sl(&mut l.bias)));
        }
        for l in &mut self.head.fc {
            out.push((ParamGroup::Head, sl(&mut l.weight)));
            out.push((ParamGroup::Head, sl(&mut l.bias)));
        }
        for b in &mut self.backbone.encoder.blocks {
            for adapter in [&mut b.lora1, &mut b.lora2].into_iter().flatten() {
                out.push((ParamGroup::Lora, sl(&mut adapter.a)));
                out.push((ParamGroup::Lora, sl(&mut adapter.b)));
            }
        }
        out
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.head.parameter_count()
            + self
                .backbone
                .encoder
                .lora_state()
                .iter()
                .map(|n| n.adapter.parameter_count())
                .sum::<usize>()
    }
}

impl ModelGrads {
    pub fn add_assign(&mut self, other: &ModelGrads) {
        self.head.add_assign(&other.head);
        for (a, b) in self.lora.iter_mut().zip(&other.lora) {
            for (x, y) in [(&mut a.fc1, &b.fc1), (&mut a.fc2, &b.fc2)] {
                if let (Some(x), Some(y)) = (x.as_mut(), y.as_ref()) {
                    x.add_assign(y);
                }
            }
        }
    }

    /// Gradient tensors, in the order of [`DialectModel::params_mut`].
    pub fn params(&self) -> Vec<(ParamGroup, &[f64])> {
        fn sl<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        let mut out: Vec<(ParamGroup, &[f64])> = Vec::new();
        out.push((ParamGroup::LayerWeights, sl(&self.head.layer_logits)));
        for l in &self.head.conv {
            out.push((ParamGroup::Conv, sl(&l.weight)));
            out.push((ParamGroup::Conv, sl(&l.bias)));
        }
        for l in &self.head.fc {
            out.push((ParamGroup::Head, sl(&l.weight)));
            out.push((ParamGroup::Head, sl(&l.bias)));
        }
        for b in &self.lora {
            for g in [&b.fc1, &b.fc2].into_iter().flatten() {
                out.push((ParamGroup::Lora, sl(&g.a)));
                out.push((ParamGroup::Lora, sl(&g.b)));
            }
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        self.head.layer_logits *= factor;
        for l in self.head.conv.iter_mut().chain(self.head.fc.iter_mut()) {
            l.weight *= factor;
            l.bias *= factor;
        }
        for b in &mut self.lora {
            for g in [&mut b.fc1, &mut b.fc2].into_iter().flatten() {
                g.a *= factor;
                g.b *= factor;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(
            self.params()
                .iter()
                .flat_map(|(_, s)| s.iter())
                .map(|v| v * v)
                .sum::<f64>(),
        )
    }
}
