//! Noise sweeps, utterance-length strata and paired model comparison.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::add_gaussian_noise;
use crate::corpus::PreparedExample;
use crate::metrics::{EvalReport, MetricsError};
use crate::probe::{DialectModel, Frontend};
use crate::seeds;
use crate::taxonomy::LanguageGroup;
use crate::train::{predict_example, report_from_predictions, PredictionRecord, TrainError};

pub const DEFAULT_SNR_LEVELS_DB: [f64; 3] = [25.0, 15.0, 5.0];
pub const DEFAULT_LENGTH_THRESHOLD_S: f64 = 6.0;
pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 10_000;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RobustnessError {
    #[error("SNR level {0} is not finite")]
    BadLevel(f64),
    #[error("length threshold {0} is not finite")]
    BadThreshold(f64),
    #[error("models were scored on different utterances: {0}")]
    MismatchedUtterances(String),
    #[error("condition lists differ: {0}")]
    MismatchedConditions(String),
    #[error("no clean condition to compare against")]
    MissingClean,
    #[error("bootstrap needs at least one resample")]
    NoResamples,
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Clean audio, or audio with white noise at a given SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Clean,
    SnrDb(f64),
}

impl Condition {
    pub fn name(&self) -> String {
        match self {
            Condition::Clean => String::from("clean"),
            Condition::SnrDb(s) => format!("snr_{s}db"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: Condition,
    pub report: EvalReport,
    /// `(F1 - F1_clean) / F1_clean`; `None` when the clean score is 0.
    pub relative_change: Option<f64>,
    pub predictions: Vec<PredictionRecord>,
}

fn relative_change(value: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0).then(|| (value - baseline) / baseline)
}

/// Clean evaluation followed by one pass per SNR level. Noise draws come
/// from a stream reserved for evaluation, one per level.
pub fn noise_sweep<F: Frontend>(
    model: &DialectModel<F>,
    group: LanguageGroup,
    class_names: &[String],
    examples: &[PreparedExample],
    levels_db: &[f64],
    seed: u64,
) -> Result<Vec<ConditionResult>, RobustnessError> {
    if let Some(&bad) = levels_db.iter().find(|l| !l.is_finite()) {
        return Err(RobustnessError::BadLevel(bad));
    }
    let clean = crate::train::evaluate(model, group, class_names, examples)?;
    let base = clean.report.macro_f1;
    let mut out = Vec::with_capacity(levels_db.len() + 1);
    out.push(ConditionResult {
        condition: Condition::Clean,
        relative_change: relative_change(base, base),
        report: clean.report,
        predictions: clean.predictions,
    });
    for (i, &snr) in levels_db.iter().enumerate() {
        let mut rng = seeds::stream(seed, seeds::EVAL_NOISE + i as u64);
        let mut predictions = Vec::with_capacity(examples.len());
        for e in examples {
            let mut wave = e.waveform.clone();
            add_gaussian_noise(&mut wave, snr, &mut rng).map_err(TrainError::from)?;
            predictions.push(predict_example(model, e, &wave)?);
        }
        let report = report_from_predictions(group, class_names, &predictions)?;
        out.push(ConditionResult {
            condition: Condition::SnrDb(snr),
            relative_change: relative_change(report.macro_f1, base),
            report,
            predictions,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub utterance_ids: Vec<String>,
    pub report: EvalReport,
}

/// Short (`duration <= threshold`) and long utterances; an empty side is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStrata {
    pub threshold_s: f64,
    pub short: Option<Stratum>,
    pub long: Option<Stratum>,
}

pub fn is_short(duration_s: f64, threshold_s: f64) -> bool {
    duration_s <= threshold_s
}

pub fn length_stratified(
    group: LanguageGroup,
    class_names: &[String],
    predictions: &[PredictionRecord],
    threshold_s: f64,
) -> Result<LengthStrata, RobustnessError> {
    if !threshold_s.is_finite() {
        return Err(RobustnessError::BadThreshold(threshold_s));
    }
    let (short, long): (Vec<PredictionRecord>, Vec<PredictionRecord>) =
        predictions.iter().cloned().partition(|p| is_short(p.duration_s, threshold_s));
    let stratum = |preds: Vec<PredictionRecord>| -> Result<Option<Stratum>, RobustnessError> {
        if preds.is_empty() {
            return Ok(None);
        }
        Ok(Some(Stratum {
            report: report_from_predictions(group, class_names, &preds)?,
            utterance_ids: preds.into_iter().map(|p| p.utterance_id).collect(),
        }))
    };
    Ok(LengthStrata {
        threshold_s,
        short: stratum(short)?,
        long: stratum(long)?,
    })
}

/// One model's predictions under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionDump {
    pub condition: Condition,
    pub predictions: Vec<PredictionRecord>,
}

impl From<&ConditionResult> for ConditionDump {
    fn from(r: &ConditionResult) -> Self {
        ConditionDump {
            condition: r.condition,
            predictions: r.predictions.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub condition: Condition,
    pub macro_f1_a: f64,
    pub macro_f1_b: f64,
    /// Each model against its own clean Macro-F1.
    pub relative_change_a: Option<f64>,
    pub relative_change_b: Option<f64>,
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    /// `accuracy_a - accuracy_b`.
    pub accuracy_difference: f64,
    /// Two-sided paired-bootstrap p-value for the accuracy difference.
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub resamples: usize,
    pub seed: u64,
    pub rows: Vec<ComparisonRow>,
}

/// Two-sided paired bootstrap over per-utterance correctness.
///
/// Resamples utterance indices with replacement and counts how often the
/// resampled accuracy difference falls on either side of zero:
/// `p = min(1, 2 * min(#{d <= 0}, #{d >= 0}) / R)`.
pub fn paired_bootstrap_p(correct_a: &[bool], correct_b: &[bool], resamples: usize, seed: u64) -> Result<f64, RobustnessError> {
    if resamples == 0 {
        return Err(RobustnessError::NoResamples);
    }
    if correct_a.len() != correct_b.len() || correct_a.is_empty() {
        return Err(RobustnessError::MismatchedUtterances(format!(
            "{} vs {} utterances",
            correct_a.len(),
            correct_b.len()
        )));
    }
    let n = correct_a.len();
    let diff: Vec<i64> = correct_a.iter().zip(correct_b).map(|(&a, &b)| a as i64 - b as i64).collect();
    let mut rng = seeds::stream(seed, seeds::BOOTSTRAP);
    let (mut le, mut ge) = (0usize, 0usize);
    for _ in 0..resamples {
        let s: i64 = (0..n).map(|_| diff[rng.random_range(0..n)]).sum();
        le += (s <= 0) as usize;
        ge += (s >= 0) as usize;
    }
    Ok((2.0 * le.min(ge) as f64 / resamples as f64).min(1.0))
}

fn by_id(preds: &[PredictionRecord]) -> BTreeMap<&str, &PredictionRecord> {
    preds.iter().map(|p| (p.utterance_id.as_str(), p)).collect()
}

/// Per-condition deltas for two models and the significance of their
/// accuracy difference. Both lists must hold the same conditions, in the
/// same order, including [`Condition::Clean`], each scored on the same
/// utterances.
pub fn compare_models(
    group: LanguageGroup,
    class_names: &[String],
    a: &[ConditionDump],
    b: &[ConditionDump],
    resamples: usize,
    seed: u64,
) -> Result<Comparison, RobustnessError> {
    let conds_a: Vec<Condition> = a.iter().map(|d| d.condition).collect();
    let conds_b: Vec<Condition> = b.iter().map(|d| d.condition).collect();
    if conds_a != conds_b {
        return Err(RobustnessError::MismatchedConditions(format!("{conds_a:?} vs {conds_b:?}")));
    }
    let clean = conds_a.iter().position(|c| *c == Condition::Clean).ok_or(RobustnessError::MissingClean)?;
    let mut reports = Vec::with_capacity(a.len());
    for (da, db) in a.iter().zip(b) {
        let (ma, mb) = (by_id(&da.predictions), by_id(&db.predictions));
        if ma.len() != da.predictions.len() || ma.keys().ne(mb.keys()) || mb.len() != db.predictions.len() {
            return Err(RobustnessError::MismatchedUtterances(da.condition.name()));
        }
        let ra = report_from_predictions(group, class_names, &da.predictions)?;
        let rb = report_from_predictions(group, class_names, &db.predictions)?;
        let ca: Vec<bool> = ma.values().map(|p| p.correct()).collect();
        let cb: Vec<bool> = mb.values().map(|p| p.correct()).collect();
        reports.push((da.condition, ra, rb, ca, cb));
    }
    let (base_a, base_b) = (reports[clean].1.macro_f1, reports[clean].2.macro_f1);
    let mut rows = Vec::with_capacity(reports.len());
    for (condition, ra, rb, ca, cb) in reports {
        let p_value = paired_bootstrap_p(&ca, &cb, resamples, seed)?;
        rows.push(ComparisonRow {
            condition,
            macro_f1_a: ra.macro_f1,
            macro_f1_b: rb.macro_f1,
            relative_change_a: relative_change(ra.macro_f1, base_a),
            relative_change_b: relative_change(rb.macro_f1, base_b),
            accuracy_a: ra.accuracy,
            accuracy_b: rb.accuracy,
            accuracy_difference: ra.accuracy - rb.accuracy,
            p_value,
            significant: p_value < SIGNIFICANCE_LEVEL,
        });
    }
    Ok(Comparison { resamples, seed, rows })
}
