//! Fine-tuning loop, run configuration and evaluation.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{self, AugmentError, AugmentationPolicy};
use crate::corpus::{self, CorpusError, PreparedExample};
use crate::dsp::SincResampler;
use crate::metrics::{EvalReport, MetricsError};
use crate::optim::{AdamW, AdamWConfig};
use crate::probe::{DialectModel, Frontend, LayerWeighting, ProbeConfig, ProbeError, ProbeState, DEFAULT_LORA_RANK};
use crate::seeds;
use crate::taxonomy::LanguageGroup;

pub const DEFAULT_LEARNING_RATE: f64 = 5e-4;
/// The two learning rates worth trying.
pub const LEARNING_RATE_GRID: [f64; 2] = [1e-4, 5e-4];
pub const DEFAULT_EPOCHS: usize = 15;
pub const DEFAULT_BATCH_SIZE: usize = 16;
pub const MMS_LID_256_BATCH_SIZE: usize = 6;
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.1;

/// Epoch count used when a run does not set one.
pub fn scheduled_epochs(group: LanguageGroup) -> usize {
    match group {
        LanguageGroup::Thai | LanguageGroup::Arabic => 5,
        _ => DEFAULT_EPOCHS,
    }
}

/// Batch size used when a run does not set one.
pub fn scheduled_batch_size(backbone_id: &str) -> usize {
    if backbone_id.to_ascii_lowercase().contains("mms-lid-256") {
        MMS_LID_256_BATCH_SIZE
    } else {
        DEFAULT_BATCH_SIZE
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("class count mismatch: model has {model}, taxonomy has {taxonomy}")]
    ClassCount { model: usize, taxonomy: usize },
    #[error("utterance {utterance_id} has label {label} outside the {group} taxonomy")]
    ForeignLabel { utterance_id: String, label: String, group: LanguageGroup },
    #[error("test utterance {0} appears in the training set")]
    TestLeak(String),
    #[error("non-finite loss at epoch {epoch}, step {step} (utterance {utterance_id}); aborting")]
    NonFiniteLoss { epoch: usize, step: usize, utterance_id: String },
    #[error("epoch callback failed: {0}")]
    Callback(String),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Probe architecture knobs; `None` widths fall back to the probe defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeSettings {
    pub conv_channels: Option<Vec<usize>>,
    pub head_hidden: Option<Vec<usize>>,
    pub layer_weighting: LayerWeighting,
    pub lora_rank: usize,
    pub lora_alpha: Option<f64>,
    pub lora_targets: Option<Vec<String>>,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            conv_channels: None,
            head_hidden: None,
            layer_weighting: LayerWeighting::Softmax,
            lora_rank: DEFAULT_LORA_RANK,
            lora_alpha: None,
            lora_targets: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub language_group: LanguageGroup,
    pub backbone_id: String,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// `None` follows [`scheduled_epochs`].
    #[serde(default)]
    pub epochs: Option<usize>,
    /// `None` follows [`scheduled_batch_size`].
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub augmentation: AugmentationPolicy,
    #[serde(default)]
    pub weight_decay: f64,
    /// Global gradient-norm clip; off when `None`.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Share of training speakers held out for model selection.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub probe: ProbeSettings,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn default_learning_rate() -> f64 {
    DEFAULT_LEARNING_RATE
}

fn default_validation_fraction() -> f64 {
    DEFAULT_VALIDATION_FRACTION
}

impl RunConfig {
    pub fn new(language_group: LanguageGroup, backbone_id: impl Into<String>) -> Self {
        RunConfig {
            language_group,
            backbone_id: backbone_id.into(),
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: None,
            batch_size: None,
            seed: 0,
            augmentation: AugmentationPolicy::default(),
            weight_decay: 0.0,
            grad_clip: None,
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            probe: ProbeSettings::default(),
            output_dir: None,
        }
    }

    pub fn effective_epochs(&self) -> usize {
        self.epochs.unwrap_or_else(|| scheduled_epochs(self.language_group))
    }

    pub fn effective_batch_size(&self) -> usize {
        self.batch_size.unwrap_or_else(|| scheduled_batch_size(&self.backbone_id))
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.effective_epochs() == 0 {
            return bad("epochs must be at least 1");
        }
        if self.effective_batch_size() == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be nonnegative");
        }
        if matches!(self.grad_clip, Some(c) if c <= 0.0 || c.is_nan()) {
            return bad("grad_clip must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        self.augmentation.validate()?;
        Ok(())
    }

    /// Probe configuration for a backbone with `num_layers` layers of width
    /// `feature_dim`, seeded from the run seed.
    pub fn probe_config(&self, num_layers: usize, feature_dim: usize, num_classes: usize) -> ProbeConfig {
        let base = ProbeConfig::new(num_layers, feature_dim, num_classes);
        let p = &self.probe;
        ProbeConfig {
            conv_channels: p.conv_channels.clone().unwrap_or(base.conv_channels.clone()),
            head_hidden: p.head_hidden.clone().unwrap_or(base.head_hidden.clone()),
            layer_weighting: p.layer_weighting,
            lora_rank: p.lora_rank,
            lora_alpha: p.lora_alpha,
            lora_targets: p.lora_targets.clone(),
            seed: self.seed,
            ..base
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub val_macro_f1: Option<f64>,
    pub is_best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_state: ProbeState,
    pub validation_speakers: Vec<String>,
    pub epochs: usize,
    pub batch_size: usize,
}

impl TrainOutcome {
    pub fn best(&self) -> &EpochLog {
        &self.log[self.best_epoch - 1]
    }
}

/// Model output for one utterance, kept for downstream analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub duration_s: f64,
    pub label: usize,
    pub predicted: usize,
    pub max_probability: f64,
    pub probabilities: Vec<f64>,
}

impl PredictionRecord {
    pub fn correct(&self) -> bool {
        self.label == self.predicted
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub predictions: Vec<PredictionRecord>,
}

pub fn predict_example<F: Frontend>(
    model: &DialectModel<F>,
    example: &PreparedExample,
    waveform: &[f32],
) -> Result<PredictionRecord, TrainError> {
    let p = model.predict_proba(&example.utterance_id, waveform)?;
    Ok(PredictionRecord {
        utterance_id: p.utterance_id,
        speaker_id: example.speaker_id.clone(),
        duration_s: example.duration_s,
        label: example.label.index,
        predicted: p.label,
        max_probability: p.max_probability,
        probabilities: p.probabilities,
    })
}

pub fn report_from_predictions(
    group: LanguageGroup,
    class_names: &[String],
    predictions: &[PredictionRecord],
) -> Result<EvalReport, MetricsError> {
    let labels: Vec<usize> = predictions.iter().map(|p| p.label).collect();
    let preds: Vec<usize> = predictions.iter().map(|p| p.predicted).collect();
    EvalReport::from_labels(group, class_names, &labels, &preds)
}

/// Scores clean (unaugmented) audio.
pub fn evaluate<F: Frontend>(
    model: &DialectModel<F>,
    group: LanguageGroup,
    class_names: &[String],
    examples: &[PreparedExample],
) -> Result<Evaluation, TrainError> {
    check_labels(group, class_names.len(), examples)?;
    let predictions = examples
        .iter()
        .map(|e| predict_example(model, e, &e.waveform))
        .collect::<Result<Vec<_>, _>>()?;
    let report = report_from_predictions(group, class_names, &predictions)?;
    Ok(Evaluation { report, predictions })
}

fn check_labels(group: LanguageGroup, classes: usize, examples: &[PreparedExample]) -> Result<(), TrainError> {
    for e in examples {
        if e.label.group != group || e.label.index >= classes {
            return Err(TrainError::ForeignLabel {
                utterance_id: e.utterance_id.clone(),
                label: e.label.name.clone(),
                group,
            });
        }
    }
    Ok(())
}

fn mean_cross_entropy(predictions: &[PredictionRecord]) -> f64 {
    let total: f64 = predictions
        .iter()
        .map(|p| -libm::log(p.probabilities[p.label].max(f64::MIN_POSITIVE)))
        .sum();
    total / predictions.len() as f64
}

/// Fine-tunes the probe and LoRA adapters of `model` on `train_set`.
///
/// A validation share of the training speakers is held out and the epoch
/// with the best validation Macro-F1 is kept (the last epoch when nothing
/// is held out). `test_ids` lists held-out test utterances; training refuses
/// to start if any of them is in `train_set`. `on_epoch` runs after every
/// epoch with the model in its current state.
pub fn train<F, C>(
    config: &RunConfig,
    model: &mut DialectModel<F>,
    class_names: &[String],
    train_set: &[PreparedExample],
    test_ids: &BTreeSet<String>,
    mut on_epoch: C,
) -> Result<TrainOutcome, TrainError>
where
    F: Frontend,
    C: FnMut(&EpochLog, &DialectModel<F>) -> Result<(), String>,
{
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if model.num_classes() != class_names.len() {
        return Err(TrainError::ClassCount {
            model: model.num_classes(),
            taxonomy: class_names.len(),
        });
    }
    let group = config.language_group;
    check_labels(group, class_names.len(), train_set)?;
    if let Some(leak) = train_set.iter().find(|e| test_ids.contains(&e.utterance_id)) {
        return Err(TrainError::TestLeak(leak.utterance_id.clone()));
    }

    let speakers: BTreeSet<String> = train_set.iter().map(|e| e.speaker_id.clone()).collect();
    let validation_speakers = if config.validation_fraction > 0.0 && speakers.len() >= 2 {
        let mut rng = seeds::stream(config.seed, seeds::VALIDATION_SPLIT);
        corpus::select_speakers(&speakers, config.validation_fraction, rand::Rng::random(&mut rng))?
    } else {
        BTreeSet::new()
    };
    let (fit, val): (Vec<&PreparedExample>, Vec<&PreparedExample>) =
        train_set.iter().partition(|e| !validation_speakers.contains(&e.speaker_id));
    let val: Vec<PreparedExample> = val.into_iter().cloned().collect();

    let epochs = config.effective_epochs();
    let batch_size = config.effective_batch_size();
    let mut optimizer = AdamW::new(AdamWConfig {
        weight_decay: config.weight_decay,
        ..AdamWConfig::new(config.learning_rate)
    });
    let resampler = SincResampler::default();
    let mut shuffle_rng = seeds::stream(config.seed, seeds::SHUFFLE);
    let mut augment_rng = seeds::stream(config.seed.wrapping_add(config.augmentation.seed), seeds::AUGMENT);

    let mut log: Vec<EpochLog> = Vec::with_capacity(epochs);
    let mut best: Option<(usize, f64, ProbeState)> = None;
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut step = 0;
    for epoch in 1..=epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for batch in order.chunks(batch_size) {
            step += 1;
            steps += 1;
            let mut grads = model.zero_grads();
            for &i in batch {
                let ex = fit[i];
                let wave = augment::apply_policy(ex.waveform.clone(), &config.augmentation, &mut augment_rng, &resampler)?;
                let (loss, g) = model.loss_and_grads(&wave, ex.label.index)?;
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        step,
                        utterance_id: ex.utterance_id.clone(),
                    });
                }
                loss_sum += loss;
                grads.add_assign(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            if let Some(clip) = config.grad_clip {
                let norm = grads.norm();
                if norm > clip {
                    grads.scale(clip / norm);
                }
            }
            let g: Vec<&[f64]> = grads.params().into_iter().map(|(_, s)| s).collect();
            let mut p: Vec<&mut [f64]> = model.params_mut().into_iter().map(|(_, s)| s).collect();
            optimizer.step(&mut p, &g);
        }
        let train_loss = loss_sum / fit.len().max(1) as f64;
        if !train_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                step,
                utterance_id: "<epoch mean>".to_string(),
            });
        }

        let mut entry = EpochLog {
            epoch,
            steps,
            train_loss,
            val_loss: None,
            val_accuracy: None,
            val_macro_f1: None,
            is_best: false,
        };
        let score = if val.is_empty() {
            // Without a validation set the latest epoch wins.
            epoch as f64
        } else {
            let ev = evaluate(model, group, class_names, &val)?;
            entry.val_loss = Some(mean_cross_entropy(&ev.predictions));
            entry.val_accuracy = Some(ev.report.accuracy);
            entry.val_macro_f1 = Some(ev.report.macro_f1);
            ev.report.macro_f1
        };
        if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            best = Some((epoch, score, model.state()));
            entry.is_best = true;
        }
        on_epoch(&entry, model).map_err(TrainError::Callback)?;
        log.push(entry);
    }

    let (best_epoch, _, best_state) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        log,
        best_epoch,
        best_state,
        validation_speakers: validation_speakers.into_iter().collect(),
        epochs,
        batch_size,
    })
}

/// Human-readable single line for an epoch record.
pub fn format_epoch(e: &EpochLog) -> String {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    format!(
        "epoch {} steps {} train_loss {:.4} val_loss {} val_acc {} val_macro_f1 {}{}",
        e.epoch,
        e.steps,
        e.train_loss,
        opt(e.val_loss),
        opt(e.val_accuracy),
        opt(e.val_macro_f1),
        if e.is_best { " *" } else { "" }
    )
}
