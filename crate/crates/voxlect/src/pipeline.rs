//! File-level workflows: ingest a manifest, prepare audio, train from a
//! manifest and evaluate a checkpoint.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use voxlect_core::corpus::{
    default_speaker_cap, filter_records, prepare_waveform, speaker_split, subsample_per_speaker, Exclusion,
    ExclusionReason, LabeledRecord, ManifestRecord, PreparedExample, Split, DEFAULT_TEST_FRACTION,
};
use voxlect_core::dsp::SincResampler;
use voxlect_core::probe::DialectModel;
use voxlect_core::taxonomy::{LanguageGroup, Taxonomy};
use voxlect_core::train::{self, EpochLog, Evaluation, RunConfig};

use crate::audio::read_wav;
use crate::checkpoint::{self, base_weight_hash, CheckpointMeta, Model, FORMAT_VERSION};
use crate::error::{io_at, Error, Result};
use crate::frontend::{mock_backbone, MockBackboneConfig};
use crate::io::{read_jsonl, write_json, write_jsonl};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const EXCLUSIONS_FILE: &str = "exclusions.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub group: LanguageGroup,
    pub seed: u64,
    pub test_fraction: f64,
    /// Overrides the per-dataset default cap when set.
    pub max_per_speaker: Option<usize>,
}

impl IngestOptions {
    pub fn new(group: LanguageGroup) -> Self {
        IngestOptions {
            group,
            seed: 0,
            test_fraction: DEFAULT_TEST_FRACTION,
            max_per_speaker: None,
        }
    }
}

/// A retained manifest line plus its canonical label. Reads back as a
/// plain [`ManifestRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestedRecord {
    #[serde(flatten)]
    pub record: ManifestRecord,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class: String,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub group: LanguageGroup,
    pub input_records: usize,
    pub retained: usize,
    pub excluded_below_minimum: usize,
    pub excluded_label: usize,
    pub removed_by_speaker_cap: usize,
    /// Datasets split here by speaker; the rest kept their own split.
    pub speaker_split_datasets: Vec<String>,
    pub train_speakers: usize,
    pub test_speakers: usize,
    pub classes: Vec<ClassCount>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub records: Vec<LabeledRecord>,
    pub excluded: Vec<Exclusion>,
    pub summary: IngestSummary,
}

/// Filters, caps utterances per speaker and assigns speaker-disjoint splits
/// to datasets that arrive without one.
pub fn ingest_records(records: Vec<ManifestRecord>, taxonomy: &Taxonomy, options: &IngestOptions) -> Result<Ingested> {
    let input_records = records.len();
    let outcome = filter_records(records, taxonomy, options.group)?;
    let mut by_dataset: BTreeMap<String, Vec<LabeledRecord>> = BTreeMap::new();
    for r in outcome.retained {
        by_dataset.entry(r.record.dataset_id.clone()).or_default().push(r);
    }
    let mut kept = Vec::new();
    let mut removed_by_speaker_cap = 0;
    let mut speaker_split_datasets = Vec::new();
    for (dataset, mut rows) in by_dataset {
        if let Some(cap) = options.max_per_speaker.or_else(|| default_speaker_cap(&dataset)) {
            let before = rows.len();
            rows = subsample_per_speaker(rows, cap, options.seed);
            removed_by_speaker_cap += before - rows.len();
        }
        if rows.iter().all(|r| r.record.split == Split::Unassigned) {
            speaker_split(&mut rows, options.test_fraction, options.seed)?;
            speaker_split_datasets.push(dataset);
        } else if rows.iter().any(|r| r.record.split == Split::Unassigned) {
            return Err(Error::Invalid(format!(
                "dataset {dataset} mixes assigned and unassigned splits"
            )));
        }
        kept.extend(rows);
    }
    kept.sort_by(|a, b| a.record.utterance_id.cmp(&b.record.utterance_id));

    let speakers = |split: Split| -> usize {
        kept.iter()
            .filter(|r| r.record.split == split)
            .map(|r| (&r.record.dataset_id, &r.record.speaker_id))
            .collect::<BTreeSet<_>>()
            .len()
    };
    let classes = taxonomy
        .class_names(options.group)?
        .into_iter()
        .enumerate()
        .map(|(i, class)| {
            let count = |split| kept.iter().filter(|r| r.label.index == i && r.record.split == split).count();
            ClassCount {
                class,
                train: count(Split::Train),
                test: count(Split::Test),
            }
        })
        .collect();
    let reason = |want| outcome.excluded.iter().filter(|e| e.reason == want).count();
    let summary = IngestSummary {
        group: options.group,
        input_records,
        retained: kept.len(),
        excluded_below_minimum: reason(ExclusionReason::BelowMinimumDuration),
        excluded_label: reason(ExclusionReason::ExcludedLabel),
        removed_by_speaker_cap,
        speaker_split_datasets,
        train_speakers: speakers(Split::Train),
        test_speakers: speakers(Split::Test),
        classes,
    };
    Ok(Ingested {
        records: kept,
        excluded: outcome.excluded,
        summary,
    })
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let dir = if dir.as_os_str().is_empty() { Path::new(".") } else { dir };
    fs::canonicalize(dir).unwrap_or_else(|_| dir.to_path_buf())
}

/// Reads a manifest, resolving relative audio paths against its directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let base = manifest_dir(path);
    let mut records: Vec<ManifestRecord> = read_jsonl(path).map_err(|e| match e {
        Error::NotFound { path, .. } => Error::NotFound { what: "manifest", path },
        other => other,
    })?;
    for r in &mut records {
        if Path::new(&r.audio_path).is_relative() {
            r.audio_path = base.join(&r.audio_path).to_string_lossy().into_owned();
        }
    }
    Ok(records)
}

pub fn ingest_manifest(path: &Path, taxonomy: &Taxonomy, options: &IngestOptions) -> Result<Ingested> {
    ingest_records(read_manifest(path)?, taxonomy, options)
}

/// Writes the retained manifest, the exclusion log and the summary.
pub fn write_ingest(ingested: &Ingested, dir: &Path) -> Result<()> {
    let rows: Vec<IngestedRecord> = ingested
        .records
        .iter()
        .map(|r| IngestedRecord {
            record: r.record.clone(),
            label: r.label.name.clone(),
        })
        .collect();
    write_jsonl(&dir.join(MANIFEST_FILE), &rows)?;
    write_jsonl(&dir.join(EXCLUSIONS_FILE), &ingested.excluded)?;
    write_json(&dir.join(SUMMARY_FILE), &ingested.summary)
}

/// Decodes `path` to mono 16 kHz, truncating to 15 s when asked.
pub fn load_waveform(utterance_id: &str, path: &Path, truncate: bool, resampler: &SincResampler) -> Result<Vec<f32>> {
    let audio = read_wav(path)?;
    Ok(prepare_waveform(
        utterance_id,
        &audio.samples,
        audio.channels,
        audio.sample_rate,
        truncate,
        resampler,
    )?)
}

pub fn prepare_examples(records: &[LabeledRecord], truncate: bool) -> Result<Vec<PreparedExample>> {
    let resampler = SincResampler::default();
    records
        .iter()
        .map(|r| {
            let wave = load_waveform(&r.record.utterance_id, Path::new(&r.record.audio_path), truncate, &resampler)?;
            Ok(PreparedExample::new(r, wave))
        })
        .collect()
}

/// A training run as stored in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub manifest: PathBuf,
    #[serde(flatten)]
    pub run: RunConfig,
    #[serde(default)]
    pub backbone: MockBackboneConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub batch_size: usize,
    pub best_epoch: usize,
    pub best_val_macro_f1: Option<f64>,
    pub final_train_loss: f64,
    pub train_utterances: usize,
    pub validation_speakers: Vec<String>,
    pub base_weight_sha256: String,
}

/// Output of [`train_examples`], with the in-memory model at its best epoch.
pub struct Trained {
    pub summary: TrainSummary,
    pub log: Vec<EpochLog>,
    pub model: Model,
    pub class_names: Vec<String>,
}

pub fn build_model(run: &RunConfig, backbone: &MockBackboneConfig, num_classes: usize) -> Result<Model> {
    let b = mock_backbone(backbone)?;
    if run.backbone_id != b.id {
        return Err(Error::Invalid(format!(
            "backbone {} is not available; this build provides {}",
            run.backbone_id, b.id
        )));
    }
    let probe = run.probe_config(b.encoder.num_layers(), b.encoder.hidden_dim(), num_classes);
    Ok(DialectModel::new(probe, b)?)
}

/// Trains on prepared examples. With `out_dir` set, the epoch log and the
/// `checkpoints/last` and `checkpoints/best` directories are written there
/// as training progresses.
pub fn train_examples(
    run: &RunConfig,
    backbone: &MockBackboneConfig,
    taxonomy: &Taxonomy,
    train_set: &[PreparedExample],
    test_ids: &BTreeSet<String>,
    out_dir: Option<&Path>,
    config_sha256: Option<String>,
) -> Result<Trained> {
    let class_names = taxonomy.class_names(run.language_group)?;
    let mut model = build_model(run, backbone, class_names.len())?;
    let base_hash = base_weight_hash(&model.backbone.encoder);
    let meta = |epoch: usize, f1: Option<f64>, model: &Model| CheckpointMeta {
        format_version: FORMAT_VERSION,
        taxonomy_version: taxonomy.version.clone(),
        language_group: run.language_group,
        class_names: class_names.clone(),
        backbone_id: model.backbone.id.clone(),
        backbone: backbone.clone(),
        base_weight_sha256: base_hash.clone(),
        probe: model.config.clone(),
        epoch,
        val_macro_f1: f1,
        config_sha256: config_sha256.clone(),
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir.join("checkpoints")).map_err(io_at(dir))?;
    }
    let mut log = Vec::new();
    let outcome = train::train(run, &mut model, &class_names, train_set, test_ids, |entry, m| {
        info!("{}", train::format_epoch(entry));
        log.push(entry.clone());
        let Some(dir) = out_dir else { return Ok(()) };
        let save = || -> Result<()> {
            write_jsonl(&dir.join(TRAIN_LOG_FILE), &log)?;
            let m_meta = meta(entry.epoch, entry.val_macro_f1, m);
            checkpoint::save(&dir.join("checkpoints/last"), &m_meta, &m.state())?;
            if entry.is_best {
                checkpoint::save(&dir.join("checkpoints/best"), &m_meta, &m.state())?;
            }
            Ok(())
        };
        save().map_err(|e| e.to_string())
    })?;
    if base_weight_hash(&model.backbone.encoder) != base_hash {
        return Err(Error::Invalid("frozen backbone weights changed during training".into()));
    }
    model.load_state(&outcome.best_state)?;
    let best = outcome.best();
    Ok(Trained {
        summary: TrainSummary {
            epochs: outcome.epochs,
            batch_size: outcome.batch_size,
            best_epoch: outcome.best_epoch,
            best_val_macro_f1: best.val_macro_f1,
            final_train_loss: outcome.log.last().map_or(f64::NAN, |e| e.train_loss),
            train_utterances: train_set.len(),
            validation_speakers: outcome.validation_speakers.clone(),
            base_weight_sha256: base_hash,
        },
        log: outcome.log,
        model,
        class_names,
    })
}

/// Splits an ingested manifest and trains on its `train` side.
pub fn train_from_manifest(
    settings: &TrainSettings,
    taxonomy: &Taxonomy,
    out_dir: &Path,
    config_sha256: Option<String>,
) -> Result<Trained> {
    let records = filter_records(read_manifest(&settings.manifest)?, taxonomy, settings.run.language_group)?.retained;
    if let Some(r) = records.iter().find(|r| r.record.split == Split::Unassigned) {
        return Err(Error::Invalid(format!(
            "utterance {} has no split; run `voxlect corpus ingest` first",
            r.record.utterance_id
        )));
    }
    let (train_rows, test_rows): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| r.record.split == Split::Train);
    let test_ids = test_rows.iter().map(|r| r.record.utterance_id.clone()).collect();
    let train_set = prepare_examples(&train_rows, true)?;
    info!("training on {} utterances", train_set.len());
    train_examples(
        &settings.run,
        &settings.backbone,
        taxonomy,
        &train_set,
        &test_ids,
        Some(out_dir),
        config_sha256,
    )
}

/// Which manifest rows an evaluation reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSelection {
    Train,
    Test,
    All,
}

impl SplitSelection {
    pub fn keeps(self, split: Split) -> bool {
        match self {
            SplitSelection::Train => split == Split::Train,
            SplitSelection::Test => split == Split::Test,
            SplitSelection::All => true,
        }
    }
}

/// Prepared examples of `group` from a manifest, restricted to `split`.
pub fn manifest_examples(
    manifest: &Path,
    taxonomy: &Taxonomy,
    group: LanguageGroup,
    split: SplitSelection,
    truncate: bool,
) -> Result<Vec<PreparedExample>> {
    let rows: Vec<LabeledRecord> = filter_records(read_manifest(manifest)?, taxonomy, group)?
        .retained
        .into_iter()
        .filter(|r| split.keeps(r.record.split))
        .collect();
    if rows.is_empty() {
        return Err(Error::Invalid(format!("manifest {} has no usable utterances", manifest.display())));
    }
    prepare_examples(&rows, truncate)
}

pub fn evaluate_checkpoint(
    checkpoint_dir: &Path,
    manifest: &Path,
    taxonomy: &Taxonomy,
    split: SplitSelection,
    truncate: bool,
) -> Result<(CheckpointMeta, Evaluation)> {
    let (meta, model) = checkpoint::load(checkpoint_dir, taxonomy)?;
    let examples = manifest_examples(manifest, taxonomy, meta.language_group, split, truncate)?;
    let mut eval = train::evaluate(&model, meta.language_group, &meta.class_names, &examples)?;
    eval.report.config_fingerprint = meta.config_sha256.clone();
    Ok((meta, eval))
}
