//! The `voxlect` command line.
//!
//! Each subcommand resolves its settings from an optional config file
//! (`--config`, TOML, or JSON such as a previous run's `fingerprint.json`)
//! overlaid with command-line flags, then writes `fingerprint.json` next to
//! its outputs.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use voxlect_core::apps::{dialect_stratified_wer, tts_dialect_score, AsrRecord, Tokenization, DEFAULT_GATE};
use voxlect_core::augment::AugmentationPolicy;
use voxlect_core::dsp::SincResampler;
use voxlect_core::probe::Prediction;
use voxlect_core::robustness::{
    compare_models, length_stratified, noise_sweep, Condition, ConditionDump, ConditionResult, LengthStrata,
    DEFAULT_BOOTSTRAP_RESAMPLES, DEFAULT_LENGTH_THRESHOLD_S, DEFAULT_SNR_LEVELS_DB,
};
use voxlect_core::taxonomy::{LanguageGroup, Taxonomy};
use voxlect_core::train::Evaluation;

use crate::checkpoint::{self, Model};
use crate::error::{io_at, require, Error, Result};
use crate::fingerprint::Fingerprint;
use crate::frontend::MockBackboneConfig;
use crate::io::{atomic_write, read_jsonl, write_json, write_jsonl};
use crate::pipeline::{self, IngestOptions, SplitSelection, TrainSettings};
use crate::report::{self, write_eval_outputs};
use crate::synth::{self, SynthConfig};
use crate::taxonomy_data;

#[derive(Debug, Parser)]
#[command(name = "voxlect", version, about = "Dialect classification on frozen speech encoders")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Global {
    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Config file (TOML, or JSON such as a previous `fingerprint.json`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect and check the shipped dialect taxonomy.
    #[command(subcommand)]
    Taxonomy(TaxonomyCommand),
    /// Manifest ingestion.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Train a probe (and LoRA adapters) on an ingested manifest.
    Train(TrainArgs),
    /// Score a checkpoint on a manifest split.
    Evaluate(EvaluateArgs),
    /// Noise sweep and length stratification for a checkpoint.
    Robustness(RobustnessArgs),
    /// Tables and plots from an evaluation directory.
    Report(ReportArgs),
    /// Downstream analyses.
    #[command(subcommand)]
    App(AppCommand),
    /// Write a generated four-class corpus with a manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Subcommand)]
pub enum TaxonomyCommand {
    /// Check every label map against the canonical class lists
    Validate,
    /// Print the classes and raw-label maps of one language group
    Show { group: String },
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    Ingest(IngestArgs),
}

#[derive(Debug, Subcommand)]
pub enum AppCommand {
    /// Dialect-stratified WER over externally produced transcripts.
    Asr(AsrArgs),
    /// Mean target-dialect probability over a directory of generated audio.
    Tts(TtsArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    max_per_speaker: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lora_rank: Option<usize>,
    /// Lower end of the training-noise SNR range, dB.
    #[arg(long)]
    snr_low: Option<f64>,
    /// Upper end of the training-noise SNR range, dB.
    #[arg(long)]
    snr_high: Option<f64>,
    /// Train without augmentation.
    #[arg(long)]
    no_augment: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// train, test or all.
    #[arg(long)]
    split: Option<String>,
    /// Score full-length audio instead of the first 15 s.
    #[arg(long)]
    no_truncate: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct RobustnessArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated SNR levels in dB.
    #[arg(long, value_delimiter = ',')]
    snr: Option<Vec<f64>>,
    /// Seconds; utterances at or below it count as short.
    #[arg(long)]
    length_threshold: Option<f64>,
    #[arg(long)]
    split: Option<String>,
    /// Second checkpoint to compare against, with paired bootstrap tests.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long)]
    resamples: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    eval_dir: Option<PathBuf>,
    /// Also draw SVG plots.
    #[arg(long)]
    plots: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct AsrArgs {
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    gate: Option<f64>,
    /// whitespace or character; defaults by language group.
    #[arg(long)]
    tokenization: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct TtsArgs {
    #[arg(long)]
    audio_dir: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    speakers: Option<usize>,
    #[arg(long)]
    utterances_per_speaker: Option<usize>,
    #[arg(long)]
    group: Option<String>,
    #[arg(long)]
    dataset_id: Option<String>,
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            1
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    match cli.command {
        Command::Taxonomy(TaxonomyCommand::Validate) => taxonomy_validate(&g),
        Command::Taxonomy(TaxonomyCommand::Show { group }) => taxonomy_show(&g, &group),
        Command::Corpus(CorpusCommand::Ingest(a)) => ingest(&g, a),
        Command::Train(a) => train(&g, a),
        Command::Evaluate(a) => evaluate(&g, a),
        Command::Robustness(a) => robustness(&g, a),
        Command::Report(a) => render(&g, a),
        Command::App(AppCommand::Asr(a)) => asr(&g, a),
        Command::App(AppCommand::Tts(a)) => tts(&g, a),
        Command::Synth(a) => synthesize(&g, a),
    }
}

/// Config-file settings with command-line values laid over them.
#[derive(Debug, Default)]
struct Settings(Map<String, Value>);

impl Settings {
    fn load(global: &Global) -> Result<Self> {
        let mut s = Settings::default();
        if let Some(path) = &global.config {
            require(path, "config")?;
            let text = fs::read_to_string(path).map_err(io_at(path))?;
            let parse_err = |message: String| Error::Parse {
                path: path.clone(),
                line: 0,
                message,
            };
            let value = if path.extension().is_some_and(|e| e == "json") {
                let v: Value = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
                match v {
                    Value::Object(mut m) if m.contains_key("resolved_config") => m.remove("resolved_config").unwrap(),
                    v => v,
                }
            } else {
                let t: toml::Table = toml::from_str(&text).map_err(|e| parse_err(one_line(&e.to_string())))?;
                serde_json::to_value(t).map_err(|e| parse_err(e.to_string()))?
            };
            match value {
                Value::Object(m) => s.0 = m,
                _ => return Err(parse_err("expected a table of settings".into())),
            }
        }
        s.set("seed", global.seed);
        s.set("out", global.out.clone());
        Ok(s)
    }

    fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value.and_then(|v| serde_json::to_value(v).ok()) {
            self.0.insert(key.into(), v);
        }
    }

    /// Every non-null field of `args`, serialized.
    fn overlay<T: Serialize>(&mut self, args: &T) {
        if let Ok(Value::Object(m)) = serde_json::to_value(args) {
            for (k, v) in m {
                if !v.is_null() && v != Value::Bool(false) {
                    self.0.insert(k, v);
                }
            }
        }
    }

    fn or_insert<T: Serialize>(&mut self, key: &str, value: T) {
        if !self.0.contains_key(key) {
            self.set(key, Some(value));
        }
    }

    fn resolve<T: DeserializeOwned>(self) -> Result<T> {
        serde_json::from_value(Value::Object(self.0)).map_err(|e| Error::Invalid(format!("settings: {e}")))
    }
}

fn finish<T: Serialize>(command: &str, resolved: &T, seed: Option<u64>, out: &Path) -> Result<()> {
    Fingerprint::new(command, resolved, seed)?.write(out)?;
    info!("wrote {}", out.display());
    Ok(())
}

fn taxonomy() -> Result<Taxonomy> {
    taxonomy_data::load_validated()
}

fn parse_group(s: &str) -> Result<LanguageGroup> {
    Ok(s.parse()?)
}

#[derive(Debug, Serialize, Deserialize)]
struct TaxonomyConfig {
    out: Option<PathBuf>,
}

fn taxonomy_validate(g: &Global) -> Result<()> {
    let t = taxonomy_data::builtin()?;
    let violations = taxonomy_data::validate(&t);
    for v in &violations {
        println!("{}: {}", v.group, v.message);
    }
    if let Some(out) = &g.out {
        let lines: Vec<String> = violations.iter().map(|v| format!("{}: {}", v.group, v.message)).collect();
        write_json(&out.join("taxonomy_validation.json"), &lines)?;
        finish("taxonomy validate", &TaxonomyConfig { out: g.out.clone() }, None, out)?;
    }
    if !violations.is_empty() {
        return Err(Error::Invalid(format!("taxonomy {}: {} violation(s)", t.version, violations.len())));
    }
    let labels: usize = t.groups().map(|gt| gt.labels().len()).sum();
    let maps: usize = t.groups().map(|gt| gt.maps.len()).sum();
    println!(
        "taxonomy {}: {} groups, {labels} labels, {maps} dataset maps: ok",
        t.version,
        t.groups().count()
    );
    Ok(())
}

fn taxonomy_show(g: &Global, group: &str) -> Result<()> {
    let t = taxonomy()?;
    let gt = t.group(parse_group(group)?)?;
    let mut text = String::new();
    let _ = writeln!(text, "{} (taxonomy {})", gt.group, t.version);
    for l in gt.labels() {
        let _ = writeln!(text, "  {:>2}  {}", l.index, l.name);
    }
    for m in &gt.maps {
        let _ = writeln!(text, "  map {} (fallback {:?})", m.dataset_id, m.fallback);
        for (raw, target) in &m.entries {
            let _ = writeln!(text, "    {raw:?} -> {target:?}");
        }
    }
    print!("{text}");
    if let Some(out) = &g.out {
        write_json(&out.join(format!("taxonomy_{}.json", gt.group)), gt)?;
        finish("taxonomy show", &TaxonomyConfig { out: g.out.clone() }, None, out)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct IngestConfig {
    manifest: PathBuf,
    group: String,
    out: PathBuf,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_test_fraction")]
    test_fraction: f64,
    #[serde(default)]
    max_per_speaker: Option<usize>,
}

fn default_test_fraction() -> f64 {
    voxlect_core::corpus::DEFAULT_TEST_FRACTION
}

fn ingest(g: &Global, a: IngestArgs) -> Result<()> {
    let mut s = Settings::load(g)?;
    s.overlay(&a);
    let c: IngestConfig = s.resolve()?;
    let t = taxonomy()?;
    let options = IngestOptions {
        group: parse_group(&c.group)?,
        seed: c.seed,
        test_fraction: c.test_fraction,
        max_per_speaker: c.max_per_speaker,
    };
    let ingested = pipeline::ingest_manifest(&c.manifest, &t, &options)?;
    pipeline::write_ingest(&ingested, &c.out)?;
    let sm = &ingested.summary;
    println!(
        "{} of {} records retained ({} below 3 s, {} excluded labels, {} over the speaker cap); {} train / {} test speakers",
        sm.retained,
        sm.input_records,
        sm.excluded_below_minimum,
        sm.excluded_label,
        sm.removed_by_speaker_cap,
        sm.train_speakers,
        sm.test_speakers
    );
    finish("corpus ingest", &c, Some(c.seed), &c.out)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainCommandConfig {
    #[serde(flatten)]
    settings: TrainSettings,
    out: PathBuf,
}

fn train(g: &Global, a: TrainArgs) -> Result<()> {
    let mut s = Settings::load(g)?;
    s.set("manifest", a.manifest.clone());
    s.set("language_group", a.group.as_deref().map(parse_group).transpose()?);
    s.set("epochs", a.epochs);
    s.set("batch_size", a.batch_size);
    s.set("learning_rate", a.learning_rate);
    if a.no_augment {
        s.set("augmentation", Some(AugmentationPolicy::disabled()));
    }
    if a.snr_low.is_some() || a.snr_high.is_some() {
        let mut policy: AugmentationPolicy = match s.0.get("augmentation") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Invalid(format!("augmentation: {e}")))?,
            None => AugmentationPolicy::default(),
        };
        policy.snr_range_db = [
            a.snr_low.unwrap_or(policy.snr_range_db[0]),
            a.snr_high.unwrap_or(policy.snr_range_db[1]),
        ];
        s.set("augmentation", Some(policy));
    }
    if let Some(rank) = a.lora_rank {
        let probe = s.0.entry("probe").or_insert_with(|| Value::Object(Map::new()));
        if let Value::Object(p) = probe {
            p.insert("lora_rank".into(), rank.into());
        }
    }
    let backbone: MockBackboneConfig = match s.0.get("backbone") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Invalid(format!("backbone: {e}")))?,
        None => MockBackboneConfig::default(),
    };
    s.or_insert("backbone", backbone.clone());
    s.or_insert("backbone_id", backbone.id());
    if !s.0.contains_key("out") {
        let out = s.0.get("output_dir").cloned().unwrap_or_else(|| "run".into());
        s.0.insert("out".into(), out);
    }
    let out = s.0["out"].clone();
    s.0.insert("output_dir".into(), out);
    let mut c: TrainCommandConfig = s.resolve()?;
    // Pin the schedule so the fingerprint states what actually ran.
    c.settings.run.epochs = Some(c.settings.run.effective_epochs());
    c.settings.run.batch_size = Some(c.settings.run.effective_batch_size());
    let fingerprint = Fingerprint::new("train", &c, Some(c.settings.run.seed))?;
    let t = taxonomy()?;
    let trained = pipeline::train_from_manifest(&c.settings, &t, &c.out, Some(fingerprint.config_sha256.clone()))?;
    write_json(&c.out.join("train_summary.json"), &trained.summary)?;
    println!(
        "trained {} epochs; best epoch {} (validation Macro-F1 {}); checkpoints in {}",
        trained.summary.epochs,
        trained.summary.best_epoch,
        trained.summary.best_val_macro_f1.map_or("n/a".into(), |f| format!("{f:.4}")),
        c.out.join("checkpoints").display()
    );
    fingerprint.write(&c.out)
}

fn parse_split(s: &str) -> Result<SplitSelection> {
    serde_json::from_value(Value::String(s.into()))
        .map_err(|_| Error::Invalid(format!("unknown split {s:?}; expected train, test or all")))
}

fn true_() -> bool {
    true
}

fn test_split() -> SplitSelection {
    SplitSelection::Test
}

#[derive(Debug, Serialize, Deserialize)]
struct EvaluateConfig {
    checkpoint: PathBuf,
    manifest: PathBuf,
    #[serde(default = "test_split")]
    split: SplitSelection,
    #[serde(default = "true_")]
    truncate: bool,
    out: PathBuf,
}

fn evaluate(g: &Global, a: EvaluateArgs) -> Result<()> {
    let mut s = Settings::load(g)?;
    s.set("checkpoint", a.checkpoint);
    s.set("manifest", a.manifest);
    s.set("split", a.split.as_deref().map(parse_split).transpose()?);
    if a.no_truncate {
        s.set("truncate", Some(false));
    }
    s.or_insert("out", "eval");
    let c: EvaluateConfig = s.resolve()?;
    let t = taxonomy()?;
    let (_, eval) = pipeline::evaluate_checkpoint(&c.checkpoint, &c.manifest, &t, c.split, c.truncate)?;
    write_eval_outputs(&eval, &c.out)?;
    for w in &eval.report.zero_support {
        eprintln!("warning: class {w} has no test utterances; its F1 counts as 0");
    }
    println!(
        "accuracy {:.4}  macro_f1 {:.4}  ({} utterances)",
        eval.report.accuracy, eval.report.macro_f1, eval.report.n_utterances
    );
    finish("evaluate", &c, None, &c.out)
}

fn default_snr() -> Vec<f64> {
    DEFAULT_SNR_LEVELS_DB.to_vec()
}

fn default_threshold() -> f64 {
    DEFAULT_LENGTH_THRESHOLD_S
}

fn default_resamples() -> usize {
    DEFAULT_BOOTSTRAP_RESAMPLES
}

#[derive(Debug, Serialize, Deserialize)]
struct RobustnessConfig {
    checkpoint: PathBuf,
    manifest: PathBuf,
    #[serde(default = "default_snr")]
    snr_db: Vec<f64>,
    #[serde(default = "default_threshold")]
    length_threshold_s: f64,
    #[serde(default = "test_split")]
    split: SplitSelection,
    #[serde(default = "true_")]
    truncate: bool,
    #[serde(default)]
    compare: Option<PathBuf>,
    #[serde(default = "default_resamples")]
    resamples: usize,
    #[serde(default)]
    seed: u64,
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct RobustnessSummary<'a> {
    conditions: Vec<ConditionRow>,
    length: &'a LengthStrata,
}

#[derive(Debug, Serialize)]
struct ConditionRow {
    condition: Condition,
    name: String,
    utterances: usize,
    accuracy: f64,
    macro_f1: f64,
    relative_change: Option<f64>,
}

fn write_conditions(results: &[ConditionResult], dir: &Path) -> Result<Vec<ConditionRow>> {
    let mut rows = Vec::new();
    for r in results {
        let eval = Evaluation {
            report: r.report.clone(),
            predictions: r.predictions.clone(),
        };
        write_eval_outputs(&eval, &dir.join("conditions").join(r.condition.name()))?;
        rows.push(ConditionRow {
            condition: r.condition,
            name: r.condition.name(),
            utterances: r.report.n_utterances,
            accuracy: r.report.accuracy,
            macro_f1: r.report.macro_f1,
            relative_change: r.relative_change,
        });
    }
    Ok(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.4}"))
}

fn robustness(g: &Global, a: RobustnessArgs) -> Result<()> {
    let mut s = Settings::load(g)?;
    s.set("checkpoint", a.checkpoint);
    s.set("manifest", a.manifest);
    s.set("snr_db", a.snr);
    s.set("length_threshold_s", a.length_threshold);
    s.set("split", a.split.as_deref().map(parse_split).transpose()?);
    s.set("compare", a.compare);
    s.set("resamples", a.resamples);
    s.or_insert("out", "robustness");
    let c: RobustnessConfig = s.resolve()?;
    let t = taxonomy()?;
    let (meta, model) = checkpoint::load(&c.checkpoint, &t)?;
    let group = meta.language_group;
    let examples = pipeline::manifest_examples(&c.manifest, &t, group, c.split, c.truncate)?;
    let sweep = noise_sweep(&model, group, &meta.class_names, &examples, &c.snr_db, c.seed)?;
    let strata = length_stratified(group, &meta.class_names, &sweep[0].predictions, c.length_threshold_s)?;
    let rows = write_conditions(&sweep, &c.out)?;

    let mut table = String::from("condition\tutterances\taccuracy\tmacro_f1\trelative_change\n");
    for r in &rows {
        let _ = writeln!(
            table,
            "{}\t{}\t{:.4}\t{:.4}\t{}",
            r.name,
            r.utterances,
            r.accuracy,
            r.macro_f1,
            fmt_opt(r.relative_change)
        );
    }
    for (name, op, st) in [("short", "<=", &strata.short), ("long", ">", &strata.long)] {
        match st {
            Some(st) => {
                let _ = writeln!(
                    table,
                    "{name}({op}{}s)\t{}\t{:.4}\t{:.4}\t-",
                    strata.threshold_s, st.report.n_utterances, st.report.accuracy, st.report.macro_f1
                );
            }
            None => {
                let _ = writeln!(table, "{name}\t0\t-\t-\t-");
            }
        }
    }
    atomic_write(&c.out.join("summary.tsv"), table.as_bytes())?;
    write_json(&c.out.join("length_strata.json"), &strata)?;
    write_json(
        &c.out.join("summary.json"),
        &RobustnessSummary {
            conditions: rows,
            length: &strata,
        },
    )?;
    print!("{table}");

    if let Some(other) = &c.compare {
        let (meta_b, model_b) = checkpoint::load(other, &t)?;
        if meta_b.language_group != group || meta_b.class_names != meta.class_names {
            return Err(Error::Invalid("compared checkpoints cover different label sets".into()));
        }
        let sweep_b = noise_sweep(&model_b, group, &meta.class_names, &examples, &c.snr_db, c.seed)?;
        write_conditions(&sweep_b, &c.out.join("model_b"))?;
        let dumps = |r: &[ConditionResult]| r.iter().map(ConditionDump::from).collect::<Vec<_>>();
        let cmp = compare_models(group, &meta.class_names, &dumps(&sweep), &dumps(&sweep_b), c.resamples, c.seed)?;
        let mut t2 = String::from("condition\tmacro_f1_a\tmacro_f1_b\trel_change_a\trel_change_b\taccuracy_diff\tp_value\tsignificant\n");
        for r in &cmp.rows {
            let _ = writeln!(
                t2,
                "{}\t{:.4}\t{:.4}\t{}\t{}\t{:+.4}\t{:.4}\t{}",
                r.condition.name(),
                r.macro_f1_a,
                r.macro_f1_b,
                fmt_opt(r.relative_change_a),
                fmt_opt(r.relative_change_b),
                r.accuracy_difference,
                r.p_value,
                r.significant
            );
        }
        atomic_write(&c.out.join("comparison.tsv"), t2.as_bytes())?;
        write_json(&c.out.join("comparison.json"), &cmp)?;
        print!("{t2}");
    }
    finish("robustness", &c, Some(c.seed), &c.out)
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportConfig {
    eval_dir: PathBuf,
    #[serde(default)]
    plots: bool,
    out: PathBuf,
}

fn render(g: &Global, a: ReportArgs) -> Result<()> {
    let mut s = Settings::load(g)?;
    s.overlay(&a);
    if let Some(Value::String(dir)) = s.0.get("eval_dir").cloned() {
        s.or_insert("out", Path::new(&dir).join("report"));
    }
    let c: ReportConfig = s.resolve()?;
    let files = report::render_report(&c.eval_dir, &c.out, c.plots)?;
    for f in &files {
        println!("{}", f.display());
    }
    finish("report", &c, None, &c.out)
}

fn default_gate() -> f64 {
    DEFAULT_GATE
}

#[derive(Debug, Serialize, Deserialize)]
struct AsrConfig {
    records: PathBuf,
    checkpoint: PathBuf,
    #[serde(default = "default_gate")]
    gate: f64,
    /// Filled from the language group when not given.
    #[serde(default)]
    tokenization: Option<Tokenization>,
    #[serde(default = "true_")]
    truncate: bool,
    out: PathBuf,
}

/// Character tokens for scripts written without spaces between words.
pub fn default_tokenization(group: LanguageGroup) -> Tokenization {
    match group {
        LanguageGroup::MandarinCantonese => Tokenization::Character,
        _ => Tokenization::Whitespace,
    }
}

fn predict_files(model: &Model, items: &[(String, PathBuf)], truncate: bool) -> Result<Vec<Prediction>> {
    let resampler = SincResampler::default();
    items
        .iter()
        .map(|(id, path)| {
            let wave = pipeline::load_waveform(id, path, truncate, &resampler)?;
            Ok(model.predict_proba(id, &wave)?)
        })
        .collect()
}

fn asr(g: &Global, a: AsrArgs) -> Result<()> {
    let mut s = Settings::load(g)?;
    s.set("records", a.records);
    s.set("checkpoint", a.checkpoint);
    s.set("gate", a.gate);
    if let Some(tok) = a.tokenization {
        let parsed: Tokenization = serde_json::from_value(Value::String(tok.clone()))
            .map_err(|_| Error::Invalid(format!("unknown tokenization {tok:?}; expected whitespace or character")))?;
        s.set("tokenization", Some(parsed));
    }
    s.or_insert("out", "app-asr");
    let mut c: AsrConfig = s.resolve()?;
    let t = taxonomy()?;
    let (meta, model) = checkpoint::load(&c.checkpoint, &t)?;
    let tokenization = *c.tokenization.get_or_insert(default_tokenization(meta.language_group));
    let records: Vec<AsrRecord> = read_jsonl(&c.records).map_err(|e| match e {
        Error::NotFound { path, .. } => Error::NotFound { what: "ASR records", path },
        other => other,
    })?;
    let base = c.records.parent().map(Path::to_path_buf).unwrap_or_default();
    let items: Vec<(String, PathBuf)> = records
        .iter()
        .map(|r| (r.utterance_id.clone(), base.join(&r.audio_path)))
        .collect();
    let predictions = predict_files(&model, &items, c.truncate)?;
    let table = dialect_stratified_wer(&records, &predictions, &meta.class_names, c.gate, tokenization)?;
    write_jsonl(&c.out.join("predictions.jsonl"), &predictions)?;
    write_json(&c.out.join("stratified_wer.json"), &table)?;
    let mut tsv = String::from("grouping\tdialect\tutterances\tutterance_mean_wer\tpooled_wer\tundefined\n");
    for (grouping, rows) in [("ground_truth", &table.ground_truth), ("predicted", &table.predicted)] {
        for r in rows {
            let _ = writeln!(
                tsv,
                "{grouping}\t{}\t{}\t{}\t{}\t{}",
                r.dialect,
                r.utterances,
                fmt_opt(r.utterance_mean_wer),
                fmt_opt(r.pooled_wer),
                r.undefined
            );
        }
    }
    atomic_write(&c.out.join("stratified_wer.tsv"), tsv.as_bytes())?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    print!("{tsv}");
    println!(
        "retained {} of {} utterances above the {} gate ({:?} tokens)",
        table.retained, table.total, table.gate, tokenization
    );
    finish("app asr", &c, None, &c.out)
}

#[derive(Debug, Serialize, Deserialize)]
struct TtsConfig {
    audio_dir: PathBuf,
    target: String,
    checkpoint: PathBuf,
    #[serde(default = "true_")]
    truncate: bool,
    out: PathBuf,
}

fn tts(g: &Global, a: TtsArgs) -> Result<()> {
    let mut s = Settings::load(g)?;
    s.overlay(&a);
    s.or_insert("out", "app-tts");
    let c: TtsConfig = s.resolve()?;
    let t = taxonomy()?;
    let (meta, model) = checkpoint::load(&c.checkpoint, &t)?;
    require(&c.audio_dir, "audio directory")?;
    let mut items = Vec::new();
    for entry in fs::read_dir(&c.audio_dir).map_err(io_at(&c.audio_dir))? {
        let path = entry.map_err(io_at(&c.audio_dir))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            items.push((id, path));
        }
    }
    items.sort();
    let predictions = predict_files(&model, &items, c.truncate)?;
    let score = tts_dialect_score(&predictions, &meta.class_names, &c.target)?;
    write_jsonl(&c.out.join("predictions.jsonl"), &predictions)?;
    write_json(&c.out.join("tts_score.json"), &score)?;
    println!(
        "{}: mean probability {:.4} ({:.2}%) over {} files",
        score.target, score.mean_probability, score.percent, score.utterances
    );
    finish("app tts", &c, None, &c.out)
}

#[derive(Debug, Serialize, Deserialize)]
struct SynthCommandConfig {
    #[serde(flatten)]
    synth: SynthConfig,
    #[serde(default = "thai")]
    group: String,
    out: PathBuf,
}

fn thai() -> String {
    LanguageGroup::Thai.as_str().into()
}

fn synthesize(g: &Global, a: SynthArgs) -> Result<()> {
    let mut s = Settings::load(g)?;
    s.overlay(&a);
    s.or_insert("out", "synth");
    let c: SynthCommandConfig = s.resolve()?;
    let names = taxonomy()?.class_names(parse_group(&c.group)?)?;
    let corpus = synth::generate(&c.synth, &names)?;
    let manifest = synth::write(&corpus, &c.out)?;
    println!("{} utterances -> {}", corpus.records.len(), manifest.display());
    finish("synth", &c, Some(c.synth.seed), &c.out)
}
