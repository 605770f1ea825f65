//! Acceptance criteria 1 to 9. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion; exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxlect::checkpoint::base_weight_hash;
use voxlect::frontend::{mock_backbone, MockBackboneConfig};
use voxlect::pipeline::{self, IngestOptions, Trained};
use voxlect::synth::{self, SynthConfig};
use voxlect::taxonomy_data::builtin;
use voxlect_core::apps::{gate_retained, retention_fraction, tts_dialect_score, wer, Tokenization};
use voxlect_core::augment::{add_gaussian_noise, polarity_invert, power, time_mask, time_stretch};
use voxlect_core::corpus::{
    filter_records, speaker_split, subsample_per_speaker, ExclusionReason, ManifestRecord, PreparedExample, Split,
};
use voxlect_core::dsp::SincResampler;
use voxlect_core::metrics::{confusion, EvalReport};
use voxlect_core::probe::{DialectModel, ParamGroup, Prediction, ProbeConfig};
use voxlect_core::robustness::{is_short, length_stratified, noise_sweep};
use voxlect_core::taxonomy::{LanguageGroup, Resolved, Taxonomy};
use voxlect_core::train::{evaluate, RunConfig};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

const TIME_LIMIT: Duration = Duration::from_secs(600);

struct Corpus {
    train: Vec<PreparedExample>,
    test: Vec<PreparedExample>,
    test_ids: BTreeSet<String>,
    names: Vec<String>,
    test_speaker_share: f64,
}

/// The criterion-1 corpus, written to disk and read back through the
/// ingest and prepare stages.
fn synthetic_corpus(t: &Taxonomy, dir: &Path) -> Corpus {
    let names = t.class_names(LanguageGroup::Thai).unwrap();
    let generated = synth::generate(&SynthConfig::default(), &names).unwrap();
    let manifest = synth::write(&generated, dir).unwrap();
    let ingested = pipeline::ingest_manifest(&manifest, t, &IngestOptions::new(LanguageGroup::Thai)).unwrap();
    let s = &ingested.summary;
    let (train_rows, test_rows): (Vec<_>, Vec<_>) =
        ingested.records.into_iter().partition(|r| r.record.split == Split::Train);
    let test = pipeline::prepare_examples(&test_rows, true).unwrap();
    Corpus {
        train: pipeline::prepare_examples(&train_rows, true).unwrap(),
        test_ids: test.iter().map(|e| e.utterance_id.clone()).collect(),
        test,
        names,
        test_speaker_share: s.test_speakers as f64 / (s.test_speakers + s.train_speakers) as f64,
    }
}

fn default_run() -> (RunConfig, MockBackboneConfig) {
    let backbone = MockBackboneConfig::default();
    (RunConfig::new(LanguageGroup::Thai, backbone.id()), backbone)
}

fn train_default(t: &Taxonomy, c: &Corpus) -> Trained {
    let (run, backbone) = default_run();
    pipeline::train_examples(&run, &backbone, t, &c.train, &c.test_ids, None, None).unwrap()
}

fn test_macro_f1(trained: &Trained, c: &Corpus) -> f64 {
    evaluate(&trained.model, LanguageGroup::Thai, &c.names, &c.test).unwrap().report.macro_f1
}

fn criterion_1(t: &Taxonomy, c: &Corpus, trained: &Trained, elapsed: Duration) -> Check {
    let n = c.train.len() + c.test.len();
    ensure(n == 500, format!("corpus has {n} utterances"))?;
    ensure(
        c.train.iter().chain(&c.test).all(|e| (3.0..=10.0).contains(&e.duration_s)),
        "durations outside 3-10 s",
    )?;
    ensure((c.test_speaker_share - 0.2).abs() < 1e-12, format!("test speaker share {}", c.test_speaker_share))?;
    let (run, _) = default_run();
    ensure(run.augmentation.noise_prob > 0.0, "augmentation off")?;
    ensure(trained.model.config.lora_rank == 64, "LoRA rank is not 64")?;
    ensure(trained.model.backbone.encoder.has_lora(), "no LoRA adapters attached")?;
    ensure(trained.summary.epochs == 5, format!("{} epochs", trained.summary.epochs))?;
    let f1 = test_macro_f1(trained, c);
    ensure(f1 >= 0.95, format!("test Macro-F1 {f1:.4} < 0.95"))?;
    ensure(elapsed < TIME_LIMIT, format!("took {elapsed:?}"))?;
    let _ = t;
    Ok(format!("test Macro-F1 {f1:.4} after 5 epochs in {:.1} s", elapsed.as_secs_f64()))
}

fn criterion_2() -> Check {
    let cfg = MockBackboneConfig {
        layers: 2,
        hidden_dim: 8,
        ffn_dim: 12,
        n_mels: 16,
        seed: 5,
    };
    let backbone = mock_backbone(&cfg).unwrap();
    let probe = ProbeConfig {
        conv_channels: vec![8, 6],
        head_hidden: vec![5],
        lora_rank: 3,
        seed: 2,
        ..ProbeConfig::new(3, 8, 3)
    };
    let mut model = DialectModel::new(probe, backbone).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for (group, p) in model.params_mut() {
        if matches!(group, ParamGroup::Lora | ParamGroup::LayerWeights) {
            p.iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
        }
    }
    let wave: Vec<f32> = (0..8000).map(|_| rng.random_range(-0.5..0.5)).collect();
    let label = 2;
    let (_, grads) = model.loss_and_grads(&wave, label).unwrap();
    let analytic: Vec<(ParamGroup, Vec<f64>)> = grads.params().into_iter().map(|(g, s)| (g, s.to_vec())).collect();
    let mut worst: f64 = 0.0;
    for group in [ParamGroup::LayerWeights, ParamGroup::Conv, ParamGroup::Head, ParamGroup::Lora] {
        let tensors: Vec<usize> = (0..analytic.len()).filter(|&i| analytic[i].0 == group).collect();
        ensure(!tensors.is_empty(), format!("no {group:?} tensors"))?;
        for _ in 0..10 {
            let ti = tensors[rng.random_range(0..tensors.len())];
            let j = rng.random_range(0..analytic[ti].1.len());
            let h = 1e-5;
            let loss_at = |delta: f64| {
                let mut m = model.clone();
                m.params_mut()[ti].1[j] += delta;
                m.loss_and_grads(&wave, label).unwrap().0
            };
            let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
            let an = analytic[ti].1[j];
            let scale = numeric.abs().max(an.abs());
            let rel = if scale < 1e-9 { 0.0 } else { (numeric - an).abs() / scale };
            worst = worst.max(rel);
            ensure(rel < 1e-3, format!("{group:?} tensor {ti}[{j}]: analytic {an:e} numeric {numeric:e}"))?;
        }
    }
    Ok(format!("40 probes, worst relative error {worst:.2e}"))
}

fn criterion_3(t: &Taxonomy, c: &Corpus) -> Check {
    let (mut run, backbone) = default_run();
    run.epochs = Some(1);
    let fresh = mock_backbone(&backbone).unwrap();
    let before = base_weight_hash(&fresh.encoder);
    let subset: Vec<PreparedExample> = c.train.iter().step_by(4).cloned().collect();
    let trained = pipeline::train_examples(&run, &backbone, t, &subset, &c.test_ids, None, None).unwrap();
    ensure(
        base_weight_hash(&trained.model.backbone.encoder) == before,
        "base weights changed during an epoch",
    )?;
    let lora_moved = trained
        .model
        .backbone
        .encoder
        .lora_state()
        .iter()
        .any(|n| n.adapter.b.iter().any(|&v| v != 0.0));
    ensure(lora_moved, "LoRA factors did not train")?;

    let mut adapted = mock_backbone(&backbone).unwrap();
    adapted
        .apply_lora(64, 64.0, None, &mut ChaCha8Rng::seed_from_u64(1))
        .unwrap();
    for e in c.test.iter().take(5) {
        let a = fresh.layer_stack(&e.waveform).unwrap();
        let b = adapted.layer_stack(&e.waveform).unwrap();
        ensure(a.layers == b.layers, "apply_lora changed forward outputs")?;
    }
    Ok("base hash stable over one epoch; zero-init LoRA bit-exact on 5 utterances".into())
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_snr: f64 = 0.0;
    for _ in 0..1000 {
        let len = rng.random_range(16_000..48_000);
        let clean: Vec<f32> = (0..len).map(|_| rng.random_range(-0.6..0.6)).collect();
        let target = rng.random_range(3.0..30.0);
        let mut noisy = clean.clone();
        add_gaussian_noise(&mut noisy, target, &mut rng).map_err(|e| e.to_string())?;
        let noise: Vec<f32> = noisy.iter().zip(&clean).map(|(n, c)| n - c).collect();
        let realized = 10.0 * (power(&clean) / power(&noise)).log10();
        worst_snr = worst_snr.max((realized - target).abs());
    }
    ensure(worst_snr <= 0.2, format!("SNR off by {worst_snr} dB"))?;

    for _ in 0..200 {
        let len = rng.random_range(1_000..50_000);
        let ratio = rng.random_range(0.01..0.99);
        let mut w: Vec<f32> = (0..len).map(|_| rng.random_range(0.1..1.0)).collect();
        let span = time_mask(&mut w, ratio, &mut rng).map_err(|e| e.to_string())?;
        let zeros: Vec<usize> = (0..len).filter(|&i| w[i] == 0.0).collect();
        let want = (ratio * len as f64).round() as usize;
        ensure(zeros.len() == want, format!("mask zeroed {} of {len}, want {want}", zeros.len()))?;
        ensure(
            zeros.first() == Some(&span.start) && zeros.last().map(|z| z + 1) == Some(span.end),
            "masked samples not contiguous",
        )?;
    }

    let resampler = SincResampler::default();
    for _ in 0..200 {
        let len = rng.random_range(100..40_000);
        let rate = rng.random_range(0.9..1.1);
        let w: Vec<f32> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = time_stretch(&w, rate, &resampler).map_err(|e| e.to_string())?;
        let want = (len as f64 / rate).round() as i64;
        ensure((out.len() as i64 - want).abs() <= 1, format!("stretch {len} by {rate}: {} vs {want}", out.len()))?;
    }

    let orig: Vec<f32> = (0..5000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut w = orig.clone();
    polarity_invert(&mut w);
    polarity_invert(&mut w);
    ensure(w == orig, "double polarity inversion is not the identity")?;
    Ok(format!("worst SNR error {worst_snr:.2e} dB over 1000 trials; mask, stretch, polarity exact"))
}

struct Oracle {
    counts: Vec<Vec<u64>>,
    accuracy: f64,
    macro_f1: f64,
}

/// Recounts everything straight from the pairs.
fn metric_oracle(labels: &[usize], preds: &[usize], k: usize) -> Oracle {
    let mut counts = vec![vec![0u64; k]; k];
    for (i, row) in counts.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = labels.iter().zip(preds).filter(|&(&l, &p)| l == i && p == j).count() as u64;
        }
    }
    let correct = labels.iter().zip(preds).filter(|(l, p)| l == p).count();
    let mut f1_sum = 0.0;
    for c in 0..k {
        let tp = labels.iter().zip(preds).filter(|&(&l, &p)| l == c && p == c).count();
        let fp = labels.iter().zip(preds).filter(|&(&l, &p)| l != c && p == c).count();
        let fneg = labels.iter().zip(preds).filter(|&(&l, &p)| l == c && p != c).count();
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
        f1_sum += if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
    }
    Oracle {
        counts,
        accuracy: correct as f64 / labels.len() as f64,
        macro_f1: f1_sum / k as f64,
    }
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..1000 {
        let k = rng.random_range(2..9);
        let n = rng.random_range(1..200);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let cm = confusion(&labels, &preds, k).map_err(|e| e.to_string())?;
        let o = metric_oracle(&labels, &preds, k);
        ensure(cm.counts == o.counts, format!("trial {trial}: confusion differs"))?;
        ensure(cm.accuracy().unwrap() == o.accuracy, format!("trial {trial}: accuracy differs"))?;
        ensure(cm.macro_f1().unwrap() == o.macro_f1, format!("trial {trial}: Macro-F1 differs"))?;
    }
    let names = vec!["A".to_string(), "B".to_string()];
    let hand = EvalReport::from_labels(LanguageGroup::Thai, &names, &[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
    let expected = (2.0 / 3.0 + 4.0 / 5.0) / 2.0;
    ensure((hand.macro_f1 - 0.7333333333).abs() < 1e-9, format!("hand example {}", hand.macro_f1))?;
    ensure((hand.macro_f1 - expected).abs() < 1e-12 && hand.accuracy == 0.75, "hand example accuracy")?;
    Ok(format!("1000 random sets match the oracle; hand example {:.10}", hand.macro_f1))
}

fn criterion_6(t: &Taxonomy) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let english = t.class_names(LanguageGroup::English).unwrap();
    let mut raw_labels: Vec<String> = english.clone();
    raw_labels.push("British".into());
    for trial in 0..50 {
        let n = rng.random_range(20..300);
        let records: Vec<ManifestRecord> = (0..n)
            .map(|i| {
                let duration_s = match rng.random_range(0..6) {
                    0 => 3.0,
                    1 => 2.999_999,
                    _ => rng.random_range(0.5..20.0),
                };
                ManifestRecord {
                    utterance_id: format!("t{trial}-u{i}"),
                    audio_path: format!("u{i}.wav"),
                    duration_s,
                    sample_rate_hz: 16_000,
                    speaker_id: format!("s{}", rng.random_range(0..40)),
                    raw_label: raw_labels[rng.random_range(0..raw_labels.len())].clone(),
                    dataset_id: "CommonVoice-en".into(),
                    split: Split::Unassigned,
                }
            })
            .collect();
        let should_drop: BTreeSet<String> = records
            .iter()
            .filter(|r| r.duration_s < 3.0 || r.raw_label == "British")
            .map(|r| r.utterance_id.clone())
            .collect();
        let out = filter_records(records.clone(), t, LanguageGroup::English).map_err(|e| e.to_string())?;
        let dropped: BTreeSet<String> = out.excluded.iter().map(|e| e.utterance_id.clone()).collect();
        ensure(dropped == should_drop, format!("trial {trial}: wrong records dropped"))?;
        for e in &out.excluded {
            let british = e.raw_label == "British";
            let want = if british { ExclusionReason::ExcludedLabel } else { ExclusionReason::BelowMinimumDuration };
            ensure(e.reason == want, format!("{}: reason {:?}", e.utterance_id, e.reason))?;
        }
        for r in &out.retained {
            let Resolved::Label(l) = t.resolve(LanguageGroup::English, &r.record.dataset_id, &r.record.raw_label).unwrap()
            else {
                return Err("retained record resolves to an exclusion".into());
            };
            ensure(l == r.label, "label not preserved")?;
        }

        let mut rows = out.retained;
        let speakers: BTreeSet<String> = rows.iter().map(|r| r.record.speaker_id.clone()).collect();
        if speakers.len() >= 2 {
            speaker_split(&mut rows, 0.2, trial).map_err(|e| e.to_string())?;
            let side = |s: Split| -> BTreeSet<&str> {
                rows.iter().filter(|r| r.record.split == s).map(|r| r.record.speaker_id.as_str()).collect()
            };
            let (train, test) = (side(Split::Train), side(Split::Test));
            ensure(train.is_disjoint(&test), "speaker on both sides")?;
            let want = ((0.2 * speakers.len() as f64).round() as usize).clamp(1, speakers.len() - 1);
            ensure(test.len() == want, format!("{} test speakers of {}, want {want}", test.len(), speakers.len()))?;
        }
    }

    for trial in 0..50u64 {
        let mut records = Vec::new();
        let mut per_speaker = BTreeMap::new();
        for s in 0..rng.random_range(1..12) {
            let n = rng.random_range(1..40);
            per_speaker.insert(format!("s{s}"), n);
            for u in 0..n {
                records.push(ManifestRecord {
                    utterance_id: format!("s{s}-{u}"),
                    audio_path: String::new(),
                    duration_s: 4.0,
                    sample_rate_hz: 16_000,
                    speaker_id: format!("s{s}"),
                    raw_label: "x".into(),
                    dataset_id: "IndicVoices".into(),
                    split: Split::Unassigned,
                });
            }
        }
        let kept = subsample_per_speaker(records, 10, trial);
        for (s, &n) in &per_speaker {
            let got = kept.iter().filter(|r| &r.speaker_id == s).count();
            ensure(got == n.min(10), format!("speaker {s}: {got} of {n} kept"))?;
        }
    }
    Ok("50 fuzzed manifests filtered exactly; splits disjoint at 20%; cap of 10 holds".into())
}

fn criterion_7(c: &Corpus, trained: &Trained) -> Check {
    let sweep = noise_sweep(&trained.model, LanguageGroup::Thai, &c.names, &c.test, &[25.0, 15.0, 5.0], 7)
        .map_err(|e| e.to_string())?;
    let f1 = |i: usize| sweep[i].report.macro_f1;
    ensure(
        f1(3) <= f1(1) + 0.02,
        format!("Macro-F1 at 5 dB {:.4} exceeds 25 dB {:.4} + 0.02", f1(3), f1(1)),
    )?;

    let preds = &sweep[0].predictions;
    let strata = length_stratified(LanguageGroup::Thai, &c.names, preds, 6.0).map_err(|e| e.to_string())?;
    let ids = |s: &Option<voxlect_core::robustness::Stratum>| -> BTreeSet<String> {
        s.as_ref().map(|s| s.utterance_ids.iter().cloned().collect()).unwrap_or_default()
    };
    let (short, long) = (ids(&strata.short), ids(&strata.long));
    ensure(short.is_disjoint(&long) && short.len() + long.len() == preds.len(), "strata do not partition")?;
    for p in preds {
        let want_short = p.duration_s <= 6.0;
        ensure(short.contains(&p.utterance_id) == want_short, format!("{} misplaced", p.utterance_id))?;
    }
    ensure(is_short(6.0, 6.0) && !is_short(6.0 + 1e-9, 6.0), "boundary at 6 s")?;
    Ok(format!(
        "Macro-F1 clean {:.4}, 25 dB {:.4}, 15 dB {:.4}, 5 dB {:.4}; {} short / {} long",
        f1(0),
        f1(1),
        f1(2),
        f1(3),
        short.len(),
        long.len()
    ))
}

/// Full-table Levenshtein distance.
fn levenshtein_oracle(a: &[&str], b: &[&str]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let vocab = ["a", "b", "c", "the", "dialect", "x"];
    for trial in 0..1000 {
        let mut sentence = |n: usize| (0..n).map(|_| vocab[rng.random_range(0..vocab.len())]).collect::<Vec<_>>();
        let r = sentence(1 + trial % 15);
        let h = sentence(trial % 13);
        let score = wer(&r.join(" "), &h.join("  "), Tokenization::Whitespace);
        let want = levenshtein_oracle(&r, &h);
        ensure(score.errors == want, format!("trial {trial}: {} vs {want}", score.errors))?;
        ensure(score.rate() == want as f64 / r.len() as f64, "rate is not errors / reference tokens")?;
    }
    let cer = wer("我们 去", "我去了", Tokenization::Character);
    ensure(cer.errors == 2 && cer.reference_tokens == 3, "character tokenization")?;

    ensure(gate_retained(&[0.7, 0.7000001, 0.69, 1.0], 0.7) == vec![1, 3], "gate is not strict")?;
    let probs: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut last = f64::INFINITY;
    for step in 0..=100 {
        let r = retention_fraction(&probs, step as f64 / 100.0);
        ensure(r <= last, "retention increased with the threshold")?;
        last = r;
    }

    let names: Vec<String> = ["Mandarin", "Cantonese", "Wu"].map(String::from).to_vec();
    let fixture = [[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.05, 0.9, 0.05], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]];
    let preds: Vec<Prediction> = fixture
        .iter()
        .enumerate()
        .map(|(i, p)| Prediction::from_logits(format!("f{i}"), &p.map(f64::ln)))
        .collect();
    let score = tts_dialect_score(&preds, &names, "Cantonese").map_err(|e| e.to_string())?;
    let manual = preds.iter().map(|p| p.probabilities[1]).sum::<f64>() / 4.0;
    let by_hand = (0.5 + 0.1 + 0.9 + 1.0 / 3.0) / 4.0;
    ensure((score.mean_probability - manual).abs() < 1e-9, "TTS score differs from the manual mean")?;
    ensure((score.mean_probability - by_hand).abs() < 1e-9, "TTS score differs from the fixture mean")?;
    Ok(format!("1000 WER pairs exact; gate strict; TTS mean {:.6}", score.mean_probability))
}

fn criterion_9(t: &Taxonomy, c: &Corpus, first: &Trained) -> Check {
    let (a, b) = std::thread::scope(|s| {
        let ha = s.spawn(|| train_default(t, c));
        let hb = s.spawn(|| train_default(t, c));
        (ha.join().unwrap(), hb.join().unwrap())
    });
    ensure(a.log == b.log, "training logs differ between concurrent runs")?;
    ensure(a.log == first.log, "training log differs from the first run")?;
    let (fa, fb, f0) = (test_macro_f1(&a, c), test_macro_f1(&b, c), test_macro_f1(first, c));
    ensure(fa == fb && fa == f0, format!("final Macro-F1 {f0} / {fa} / {fb}"))?;
    ensure(a.model.state() == first.model.state(), "final parameters differ")?;
    Ok(format!("3 runs, identical {}-epoch logs and Macro-F1 {f0:.4}", a.log.len()))
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let wanted = |n: usize| filter.as_deref().is_none_or(|f| f == n.to_string());
    let t = builtin().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let needs_corpus = [1, 3, 7, 9].iter().any(|&n| wanted(n));
    let corpus = needs_corpus.then(|| synthetic_corpus(&t, dir.path()));
    let first = corpus.as_ref().filter(|_| [1, 7, 9].iter().any(|&n| wanted(n))).map(|c| {
        let start = Instant::now();
        let trained = train_default(&t, c);
        (trained, start.elapsed())
    });

    let mut failures = 0;
    let mut run = |n: usize, name: &str, f: &dyn Fn() -> Check| {
        if !wanted(n) {
            return;
        }
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {n} ({name}): PASS - {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n} ({name}): FAIL - {detail}");
            }
        }
    };
    let c = corpus.as_ref();
    let tr = first.as_ref();
    run(1, "synthetic end-to-end", &|| criterion_1(&t, c.unwrap(), &tr.unwrap().0, tr.unwrap().1));
    run(2, "gradient correctness", &criterion_2);
    run(3, "freeze and zero-init", &|| criterion_3(&t, c.unwrap()));
    run(4, "augmentation fidelity", &criterion_4);
    run(5, "metric oracle equivalence", &criterion_5);
    run(6, "preprocessing contract", &|| criterion_6(&t));
    run(7, "robustness harness", &|| criterion_7(c.unwrap(), &tr.unwrap().0));
    run(8, "application contracts", &criterion_8);
    run(9, "reproducibility", &|| criterion_9(&t, c.unwrap(), &tr.unwrap().0));
    if failures > 0 {
        println!("acceptance: {failures} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all selected criteria passed");
}
