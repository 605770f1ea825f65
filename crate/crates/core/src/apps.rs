//! ASR error analysis by dialect and TTS dialect scoring.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::probe::Prediction;

pub const DEFAULT_GATE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AppError {
    #[error("unknown dialect {0}")]
    UnknownDialect(String),
    #[error("no prediction for utterance {0}")]
    MissingPrediction(String),
    #[error("prediction has {found} classes, expected {expected}")]
    ClassCount { found: usize, expected: usize },
    #[error("no utterances to score")]
    Empty,
    #[error("gate {0} outside [0, 1]")]
    BadGate(f64),
}

/// How transcripts are split into scoring tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tokenization {
    /// Whitespace-separated words.
    #[default]
    Whitespace,
    /// One token per non-whitespace character (CER semantics for Han script).
    Character,
}

impl Tokenization {
    pub fn tokens(self, text: &str) -> Vec<&str> {
        match self {
            Tokenization::Whitespace => text.split_whitespace().collect(),
            Tokenization::Character => text
                .char_indices()
                .filter(|(_, c)| !c.is_whitespace())
                .map(|(i, c)| &text[i..i + c.len_utf8()])
                .collect(),
        }
    }
}

/// Levenshtein distance with unit substitution, insertion and deletion costs.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + (r != h) as usize;
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WerScore {
    pub errors: usize,
    pub reference_tokens: usize,
}

impl WerScore {
    /// Errors over reference tokens. An empty reference gives 0 when the
    /// hypothesis is empty too and `f64::INFINITY` otherwise.
    pub fn rate(&self) -> f64 {
        match (self.errors, self.reference_tokens) {
            (0, 0) => 0.0,
            (_, 0) => f64::INFINITY,
            (e, n) => e as f64 / n as f64,
        }
    }

    /// True for the empty-reference, nonempty-hypothesis case.
    pub fn undefined(&self) -> bool {
        self.reference_tokens == 0 && self.errors > 0
    }
}

pub fn wer(reference: &str, hypothesis: &str, tokenization: Tokenization) -> WerScore {
    let r = tokenization.tokens(reference);
    let h = tokenization.tokens(hypothesis);
    WerScore {
        errors: edit_distance(&r, &h),
        reference_tokens: r.len(),
    }
}

/// One line of an ASR record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrRecord {
    pub utterance_id: String,
    pub reference: String,
    pub hypothesis: String,
    #[serde(default)]
    pub dialect: Option<String>,
    pub audio_path: String,
}

/// Indices of predictions whose top probability is strictly above `gate`.
pub fn gate_retained(max_probabilities: &[f64], gate: f64) -> Vec<usize> {
    max_probabilities
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > gate)
        .map(|(i, _)| i)
        .collect()
}

/// Share of predictions that pass the gate; 0 for an empty list.
pub fn retention_fraction(max_probabilities: &[f64], gate: f64) -> f64 {
    if max_probabilities.is_empty() {
        return 0.0;
    }
    gate_retained(max_probabilities, gate).len() as f64 / max_probabilities.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WerRow {
    pub dialect: String,
    pub utterances: usize,
    /// Mean of per-utterance WER over utterances with a nonempty reference.
    pub utterance_mean_wer: Option<f64>,
    /// Total errors over total reference tokens.
    pub pooled_wer: Option<f64>,
    /// Utterances with an empty reference and a nonempty hypothesis.
    pub undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedWer {
    pub tokenization: Tokenization,
    pub gate: f64,
    pub ground_truth: Vec<WerRow>,
    pub predicted: Vec<WerRow>,
    pub total: usize,
    pub retained: usize,
    pub retention_fraction: f64,
    pub warnings: Vec<String>,
}

#[derive(Default)]
struct Acc {
    n: usize,
    rate_sum: f64,
    rated: usize,
    errors: usize,
    tokens: usize,
    undefined: usize,
}

impl Acc {
    fn add(&mut self, s: &WerScore) {
        self.n += 1;
        self.errors += s.errors;
        self.tokens += s.reference_tokens;
        if s.undefined() {
            self.undefined += 1;
        } else if s.reference_tokens > 0 {
            self.rate_sum += s.rate();
            self.rated += 1;
        }
    }
}

fn rows(class_names: &[String], groups: BTreeMap<usize, Acc>) -> Vec<WerRow> {
    groups
        .into_iter()
        .map(|(i, a)| WerRow {
            dialect: class_names[i].clone(),
            utterances: a.n,
            utterance_mean_wer: (a.rated > 0).then(|| a.rate_sum / a.rated as f64),
            pooled_wer: (a.tokens > 0).then(|| a.errors as f64 / a.tokens as f64),
            undefined: a.undefined,
        })
        .collect()
}

/// WER per dialect, grouped once by the recorded dialect and once by the
/// predicted one. The predicted grouping keeps only predictions whose top
/// probability is strictly above `gate`. Rows follow canonical class order.
pub fn dialect_stratified_wer(
    records: &[AsrRecord],
    predictions: &[Prediction],
    class_names: &[String],
    gate: f64,
    tokenization: Tokenization,
) -> Result<StratifiedWer, AppError> {
    if !(0.0..=1.0).contains(&gate) {
        return Err(AppError::BadGate(gate));
    }
    let by_id: BTreeMap<&str, &Prediction> = predictions.iter().map(|p| (p.utterance_id.as_str(), p)).collect();
    let mut truth: BTreeMap<usize, Acc> = BTreeMap::new();
    let mut predicted: BTreeMap<usize, Acc> = BTreeMap::new();
    let mut max_probs = Vec::with_capacity(records.len());
    let mut warnings = Vec::new();
    for r in records {
        let p = by_id
            .get(r.utterance_id.as_str())
            .ok_or_else(|| AppError::MissingPrediction(r.utterance_id.clone()))?;
        if p.probabilities.len() != class_names.len() {
            return Err(AppError::ClassCount {
                found: p.probabilities.len(),
                expected: class_names.len(),
            });
        }
        let score = wer(&r.reference, &r.hypothesis, tokenization);
        if let Some(d) = &r.dialect {
            let i = class_names
                .iter()
                .position(|n| n == d)
                .ok_or_else(|| AppError::UnknownDialect(d.clone()))?;
            truth.entry(i).or_default().add(&score);
        }
        max_probs.push(p.max_probability);
        if p.max_probability > gate {
            predicted.entry(p.label).or_default().add(&score);
        }
    }
    let retained = gate_retained(&max_probs, gate).len();
    if retained == 0 {
        warnings.push(format!("no utterance passed the {gate} probability gate"));
    }
    Ok(StratifiedWer {
        tokenization,
        gate,
        ground_truth: rows(class_names, truth),
        predicted: rows(class_names, predicted),
        total: records.len(),
        retained,
        retention_fraction: retention_fraction(&max_probs, gate),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsScore {
    pub target: String,
    pub utterances: usize,
    /// Mean probability of the target dialect, in [0, 1].
    pub mean_probability: f64,
    pub percent: f64,
}

pub fn tts_dialect_score(predictions: &[Prediction], class_names: &[String], target: &str) -> Result<TtsScore, AppError> {
    let t = class_names
        .iter()
        .position(|n| n == target)
        .ok_or_else(|| AppError::UnknownDialect(target.into()))?;
    if predictions.is_empty() {
        return Err(AppError::Empty);
    }
    let mut sum = 0.0;
    for p in predictions {
        if p.probabilities.len() != class_names.len() {
            return Err(AppError::ClassCount {
                found: p.probabilities.len(),
                expected: class_names.len(),
            });
        }
        sum += p.probabilities[t];
    }
    let mean = sum / predictions.len() as f64;
    Ok(TtsScore {
        target: target.into(),
        utterances: predictions.len(),
        mean_probability: mean,
        percent: 100.0 * mean,
    })
}
