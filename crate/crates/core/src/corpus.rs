//! Manifest records and the preprocessing / split policies applied to them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::SincResampler;
use crate::taxonomy::{DialectLabel, LanguageGroup, Resolved, Taxonomy, TaxonomyError};

pub const TARGET_SAMPLE_RATE: u32 = 16_000;
pub const MIN_DURATION_S: f64 = 3.0;
pub const MAX_DURATION_S: f64 = 15.0;
pub const MIN_SAMPLES: usize = 48_000;
pub const MAX_SAMPLES: usize = 240_000;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const DEFAULT_MAX_PER_SPEAKER: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("record {utterance_id}: {reason}")]
    InvalidRecord { utterance_id: String, reason: String },
    #[error("duplicate utterance id {0}")]
    DuplicateUtterance(String),
    #[error("cannot split: need at least 2 speakers, found {0}")]
    CannotSplit(usize),
    #[error("default split present; refusing to reassign speakers")]
    DefaultSplitPresent,
    #[error("test fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("utterance {utterance_id}: {reason}")]
    Decode { utterance_id: String, reason: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub utterance_id: String,
    pub audio_path: String,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub speaker_id: String,
    pub raw_label: String,
    pub dataset_id: String,
    #[serde(default)]
    pub split: Split,
}

impl ManifestRecord {
    pub fn check(&self) -> Result<(), CorpusError> {
        let bad = |reason: &str| {
            Err(CorpusError::InvalidRecord {
                utterance_id: self.utterance_id.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration_s must be positive");
        }
        if self.sample_rate_hz == 0 {
            return bad("sample_rate_hz must be positive");
        }
        if self.speaker_id.is_empty() {
            return bad("speaker_id is empty");
        }
        Ok(())
    }
}

/// A retained record together with its canonical class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub record: ManifestRecord,
    pub label: DialectLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    BelowMinimumDuration,
    ExcludedLabel,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExclusionReason::BelowMinimumDuration => "below 3 s minimum",
            ExclusionReason::ExcludedLabel => "excluded label",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub utterance_id: String,
    pub dataset_id: String,
    pub raw_label: String,
    pub duration_s: f64,
    pub reason: ExclusionReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutcome {
    pub retained: Vec<LabeledRecord>,
    /// Sorted by utterance id.
    pub excluded: Vec<Exclusion>,
}

/// Resolves labels and applies the duration floor.
///
/// Every raw label is resolved before anything is dropped, so an unmapped
/// label fails the whole batch even when its clip is too short.
pub fn filter_records(
    records: Vec<ManifestRecord>,
    taxonomy: &Taxonomy,
    group: LanguageGroup,
) -> Result<IngestOutcome, CorpusError> {
    let mut ids = BTreeSet::new();
    let mut out = IngestOutcome::default();
    for record in records {
        record.check()?;
        if !ids.insert(record.utterance_id.clone()) {
            return Err(CorpusError::DuplicateUtterance(record.utterance_id));
        }
        let resolved = taxonomy.resolve(group, &record.dataset_id, &record.raw_label)?;
        let reason = match (&resolved, record.duration_s < MIN_DURATION_S) {
            (Resolved::Excluded, _) => Some(ExclusionReason::ExcludedLabel),
            (_, true) => Some(ExclusionReason::BelowMinimumDuration),
            _ => None,
        };
        match (reason, resolved) {
            (Some(reason), _) => out.excluded.push(Exclusion {
                detail: reason.to_string(),
                utterance_id: record.utterance_id,
                dataset_id: record.dataset_id,
                raw_label: record.raw_label,
                duration_s: record.duration_s,
                reason,
            }),
            (None, Resolved::Label(label)) => out.retained.push(LabeledRecord { record, label }),
            (None, Resolved::Excluded) => unreachable!(),
        }
    }
    out.excluded.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    Ok(out)
}

/// Anything carrying a speaker and a split assignment.
pub trait SpeakerRecord {
    fn speaker_id(&self) -> &str;
    fn split(&self) -> Split;
    fn set_split(&mut self, split: Split);
}

impl SpeakerRecord for ManifestRecord {
    fn speaker_id(&self) -> &str {
        &self.speaker_id
    }
    fn split(&self) -> Split {
        self.split
    }
    fn set_split(&mut self, split: Split) {
        self.split = split;
    }
}

impl SpeakerRecord for LabeledRecord {
    fn speaker_id(&self) -> &str {
        &self.record.speaker_id
    }
    fn split(&self) -> Split {
        self.record.split
    }
    fn set_split(&mut self, split: Split) {
        self.record.split = split;
    }
}

/// Draws `round(fraction * n)` of the given speakers, at least one and
/// leaving at least one behind. Deterministic in `seed`.
pub fn select_speakers(
    speakers: &BTreeSet<String>,
    fraction: f64,
    seed: u64,
) -> Result<BTreeSet<String>, CorpusError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::BadFraction(fraction));
    }
    let n = speakers.len();
    if n < 2 {
        return Err(CorpusError::CannotSplit(n));
    }
    let take = (libm::round(fraction * n as f64) as usize).clamp(1, n - 1);
    let mut order: Vec<&String> = speakers.iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order.into_iter().take(take).cloned().collect())
}

/// Speaker-disjoint train/test assignment for datasets without a default split.
pub fn speaker_split<R: SpeakerRecord>(records: &mut [R], test_fraction: f64, seed: u64) -> Result<SplitSummary, CorpusError> {
    if records.iter().any(|r| r.split() != Split::Unassigned) {
        return Err(CorpusError::DefaultSplitPresent);
    }
    let speakers: BTreeSet<String> = records.iter().map(|r| r.speaker_id().to_string()).collect();
    let test = select_speakers(&speakers, test_fraction, seed)?;
    for r in records.iter_mut() {
        let split = if test.contains(r.speaker_id()) { Split::Test } else { Split::Train };
        r.set_split(split);
    }
    Ok(SplitSummary {
        train_speakers: speakers.len() - test.len(),
        test_speakers: test.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train_speakers: usize,
    pub test_speakers: usize,
}

/// Keeps at most `max_per_speaker` records per speaker, preserving input order.
pub fn subsample_per_speaker<R: SpeakerRecord>(records: Vec<R>, max_per_speaker: usize, seed: u64) -> Vec<R> {
    let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_speaker.entry(r.speaker_id()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = alloc::vec![false; records.len()];
    for idx in by_speaker.values_mut() {
        if idx.len() > max_per_speaker {
            idx.shuffle(&mut rng);
            idx.truncate(max_per_speaker);
        }
        for &i in idx.iter() {
            keep[i] = true;
        }
    }
    records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect()
}

/// Per-speaker cap applied by default to a dataset, if any.
pub fn default_speaker_cap(dataset_id: &str) -> Option<usize> {
    match dataset_id {
        "IndicVoices" => Some(DEFAULT_MAX_PER_SPEAKER),
        _ => None,
    }
}

/// A model-ready utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedExample {
    pub utterance_id: String,
    pub speaker_id: String,
    /// Mono, 16 kHz, clipped to [-1, 1].
    pub waveform: Vec<f32>,
    pub label: DialectLabel,
    pub duration_s: f64,
}

/// Downmixes, resamples to 16 kHz, truncates to the first 15 s and clips.
///
/// `interleaved` holds `channels` interleaved channels at `sample_rate`.
pub fn prepare_waveform(
    utterance_id: &str,
    interleaved: &[f32],
    channels: u16,
    sample_rate: u32,
    truncate: bool,
    resampler: &SincResampler,
) -> Result<Vec<f32>, CorpusError> {
    let fail = |reason: &str| CorpusError::Decode {
        utterance_id: utterance_id.to_string(),
        reason: reason.to_string(),
    };
    if channels == 0 || sample_rate == 0 {
        return Err(fail("zero channels or sample rate"));
    }
    let ch = channels as usize;
    if !interleaved.len().is_multiple_of(ch) {
        return Err(fail("sample count not a multiple of the channel count"));
    }
    let mono: Vec<f32> = if ch == 1 {
        interleaved.to_vec()
    } else {
        interleaved
            .chunks_exact(ch)
            .map(|frame| frame.iter().sum::<f32>() / ch as f32)
            .collect()
    };
    let mut wave = if sample_rate == TARGET_SAMPLE_RATE {
        mono
    } else {
        resampler.resample(&mono, TARGET_SAMPLE_RATE as f64 / sample_rate as f64)
    };
    if truncate {
        wave.truncate(MAX_SAMPLES);
    }
    if wave.len() < MIN_SAMPLES {
        return Err(fail("audio shorter than the 3 s minimum"));
    }
    for s in wave.iter_mut() {
        *s = s.clamp(-1.0, 1.0);
    }
    Ok(wave)
}

impl PreparedExample {
    pub fn new(record: &LabeledRecord, waveform: Vec<f32>) -> Self {
        PreparedExample {
            utterance_id: record.record.utterance_id.clone(),
            speaker_id: record.record.speaker_id.clone(),
            duration_s: waveform.len() as f64 / TARGET_SAMPLE_RATE as f64,
            waveform,
            label: record.label.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{LabelMap, LabelTarget};
    use alloc::format;
    use alloc::vec;

    fn taxonomy() -> Taxonomy {
        let mut t = Taxonomy::new("t");
        t.insert_group(
            LanguageGroup::Tibetan,
            ["U-Tsang", "Kham", "Amdo"],
            vec![LabelMap::identity("TIBMD", LanguageGroup::Tibetan).with("Lhasa", LabelTarget::Exclude)],
        );
        t
    }

    fn rec(id: &str, spk: &str, dur: f64, raw: &str) -> ManifestRecord {
        ManifestRecord {
            utterance_id: id.into(),
            audio_path: format!("{id}.wav"),
            duration_s: dur,
            sample_rate_hz: 16_000,
            speaker_id: spk.into(),
            raw_label: raw.into(),
            dataset_id: "TIBMD".into(),
            split: Split::Unassigned,
        }
    }

    #[test]
    fn ingest_drops_short_and_excluded() {
        let recs = vec![
            rec("c", "s1", 2.9, "Amdo"),
            rec("a", "s1", 3.0, "Amdo"),
            rec("b", "s2", 5.0, "Lhasa"),
        ];
        let out = filter_records(recs, &taxonomy(), LanguageGroup::Tibetan).unwrap();
        assert_eq!(out.retained.len(), 1);
        assert_eq!(out.retained[0].record.utterance_id, "a");
        assert_eq!(out.retained[0].label.name, "Amdo");
        let reasons: Vec<_> = out.excluded.iter().map(|e| (e.utterance_id.as_str(), e.detail.as_str())).collect();
        assert_eq!(reasons, vec![("b", "excluded label"), ("c", "below 3 s minimum")]);
    }

    #[test]
    fn ingest_fails_on_unmapped_and_duplicates() {
        let err = filter_records(vec![rec("a", "s", 1.0, "Klingon")], &taxonomy(), LanguageGroup::Tibetan).unwrap_err();
        assert!(err.to_string().contains("Klingon"));
        let err = filter_records(
            vec![rec("a", "s", 4.0, "Kham"), rec("a", "s", 4.0, "Kham")],
            &taxonomy(),
            LanguageGroup::Tibetan,
        )
        .unwrap_err();
        assert_eq!(err, CorpusError::DuplicateUtterance("a".into()));
        let mut bad = rec("z", "s", 4.0, "Kham");
        bad.duration_s = 0.0;
        assert!(filter_records(vec![bad], &taxonomy(), LanguageGroup::Tibetan).is_err());
    }

    #[test]
    fn split_ten_speakers() {
        let mut recs: Vec<_> = (0..30).map(|i| rec(&format!("u{i}"), &format!("s{}", i % 10), 4.0, "Kham")).collect();
        let summary = speaker_split(&mut recs, 0.2, 7).unwrap();
        assert_eq!(summary, SplitSummary { train_speakers: 8, test_speakers: 2 });
        let test: BTreeSet<_> = recs.iter().filter(|r| r.split == Split::Test).map(|r| r.speaker_id.clone()).collect();
        let train: BTreeSet<_> = recs.iter().filter(|r| r.split == Split::Train).map(|r| r.speaker_id.clone()).collect();
        assert_eq!(test.len(), 2);
        assert!(test.is_disjoint(&train));

        let mut again: Vec<_> = recs.iter().cloned().map(|mut r| { r.split = Split::Unassigned; r }).collect();
        speaker_split(&mut again, 0.2, 7).unwrap();
        assert_eq!(again, recs);
    }

    #[test]
    fn split_refusals() {
        let mut one = vec![rec("a", "s", 4.0, "Kham"), rec("b", "s", 4.0, "Kham")];
        assert_eq!(speaker_split(&mut one, 0.2, 0), Err(CorpusError::CannotSplit(1)));
        let mut preset = vec![rec("a", "s", 4.0, "Kham"), rec("b", "t", 4.0, "Kham")];
        preset[0].split = Split::Test;
        let err = speaker_split(&mut preset, 0.2, 0).unwrap_err();
        assert_eq!(err.to_string(), "default split present; refusing to reassign speakers");
    }

    #[test]
    fn subsample_caps() {
        let mut recs: Vec<_> = (0..37).map(|i| rec(&format!("a{i}"), "big", 4.0, "Kham")).collect();
        recs.extend((0..4).map(|i| rec(&format!("b{i}"), "small", 4.0, "Kham")));
        let out = subsample_per_speaker(recs.clone(), 10, 3);
        assert_eq!(out.iter().filter(|r| r.speaker_id == "big").count(), 10);
        assert_eq!(out.iter().filter(|r| r.speaker_id == "small").count(), 4);
        assert_eq!(out, subsample_per_speaker(recs, 10, 3));

        let three: Vec<_> = (0..15).map(|i| rec(&format!("c{i}"), &format!("s{}", i % 3), 4.0, "Kham")).collect();
        assert_eq!(subsample_per_speaker(three, 1, 0).len(), 3);
        assert_eq!(default_speaker_cap("IndicVoices"), Some(10));
        assert_eq!(default_speaker_cap("TIBMD"), None);
    }

    #[test]
    fn prepare_stereo_44k_truncates_to_15_s() {
        let n = 20 * 44_100;
        let stereo: Vec<f32> = (0..2 * n).map(|i| if i % 2 == 0 { 0.5 } else { -0.1 }).collect();
        let w = prepare_waveform("u", &stereo, 2, 44_100, true, &SincResampler::default()).unwrap();
        assert_eq!(w.len(), 240_000);
        assert!((w[100_000] - 0.2).abs() < 1e-3);
    }

    #[test]
    fn prepare_identity_and_bounds() {
        let r = SincResampler::default();
        let x: Vec<f32> = (0..64_000).map(|i| ((i % 100) as f32 / 50.0) - 1.0).collect();
        assert_eq!(prepare_waveform("u", &x, 1, 16_000, true, &r).unwrap(), x);
        assert_eq!(prepare_waveform("u", &vec![0.0; 240_000], 1, 16_000, true, &r).unwrap().len(), 240_000);
        assert_eq!(prepare_waveform("u", &vec![0.0; 300_000], 1, 16_000, false, &r).unwrap().len(), 300_000);
        let loud = prepare_waveform("u", &vec![3.0; 48_000], 1, 16_000, true, &r).unwrap();
        assert!(loud.iter().all(|&s| s == 1.0));
        let err = prepare_waveform("short-one", &vec![0.0; 47_999], 1, 16_000, true, &r).unwrap_err();
        assert!(err.to_string().contains("short-one"));
    }
}
