//! Generated four-class corpus with known answers, for end-to-end checks.
//!
//! Each speaker belongs to one class. A class is a pair of tones plus a
//! band of resonant noise, at frequencies well apart from the other
//! classes'; speakers shift their frequencies by up to ±5%.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use voxlect_core::corpus::{ManifestRecord, Split, TARGET_SAMPLE_RATE};

use crate::audio::write_wav;
use crate::error::{Error, Result};
use crate::io::write_jsonl;

/// Base tone, in Hz, of each class.
const TONES_HZ: [f64; 4] = [220.0, 520.0, 1200.0, 2800.0];
/// Centre, in Hz, of each class's noise band.
const BANDS_HZ: [f64; 4] = [380.0, 900.0, 2000.0, 5000.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub seed: u64,
    /// Written into every record; must have a label map for the class names used.
    pub dataset_id: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            speakers: 100,
            utterances_per_speaker: 5,
            min_duration_s: 3.0,
            max_duration_s: 10.0,
            seed: 0,
            dataset_id: "Thai-Dialect-Corpus".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub records: Vec<ManifestRecord>,
    /// Aligned with `records`; mono 16 kHz.
    pub waveforms: Vec<Vec<f32>>,
}

/// Two-pole band-pass (constant peak gain) run over `x`.
fn bandpass(x: &[f64], centre_hz: f64, q: f64) -> Vec<f64> {
    let w0 = 2.0 * PI * centre_hz / TARGET_SAMPLE_RATE as f64;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    x.iter()
        .map(|&x0| {
            let y0 = b0 * x0 + b2 * x2 - a1 * y1 - a2 * y2;
            (x2, x1, y2, y1) = (x1, x0, y1, y0);
            y0
        })
        .collect()
}

fn utterance(class: usize, shift: f64, tone_amp: f64, noise_amp: f64, samples: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let sr = TARGET_SAMPLE_RATE as f64;
    let f0 = TONES_HZ[class] * shift;
    let (p1, p2): (f64, f64) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
    let am_rate = rng.random_range(1.0..4.0);
    let white: Vec<f64> = (0..samples).map(|_| rng.random_range(-1.0..1.0)).collect();
    let band = bandpass(&white, BANDS_HZ[class] * shift, 4.0);
    let band_rms = (band.iter().map(|v| v * v).sum::<f64>() / samples as f64).sqrt().max(1e-12);
    let mut out: Vec<f64> = (0..samples)
        .map(|i| {
            let t = i as f64 / sr;
            let env = 0.7 + 0.3 * (2.0 * PI * am_rate * t).sin();
            let tones = (2.0 * PI * f0 * t + p1).sin() + 0.5 * (2.0 * PI * 2.0 * f0 * t + p2).sin();
            env * tone_amp * tones + noise_amp * band[i] / band_rms + 0.005 * white[i]
        })
        .collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.9 {
        out.iter_mut().for_each(|v| *v *= 0.9 / peak);
    }
    out.into_iter().map(|v| v as f32).collect()
}

/// Speaker `s` speaks class `s % class_names.len()`; at most four classes.
pub fn generate(config: &SynthConfig, class_names: &[String]) -> Result<SynthCorpus> {
    if class_names.is_empty() || class_names.len() > TONES_HZ.len() {
        return Err(Error::Invalid(format!(
            "synthetic corpus supports 1 to {} classes, got {}",
            TONES_HZ.len(),
            class_names.len()
        )));
    }
    if !(config.min_duration_s > 0.0 && config.min_duration_s <= config.max_duration_s) {
        return Err(Error::Invalid("synthetic durations must satisfy 0 < min <= max".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sr = TARGET_SAMPLE_RATE as f64;
    let (lo, hi) = (
        (config.min_duration_s * sr).ceil() as usize,
        (config.max_duration_s * sr).floor() as usize,
    );
    let mut records = Vec::new();
    let mut waveforms = Vec::new();
    for s in 0..config.speakers {
        let class = s % class_names.len();
        let shift = rng.random_range(0.95..1.05);
        let tone_amp = rng.random_range(0.15..0.3);
        let noise_amp = rng.random_range(0.05..0.15);
        for u in 0..config.utterances_per_speaker {
            let samples = rng.random_range(lo..=hi.max(lo));
            let wave = utterance(class, shift, tone_amp, noise_amp, samples, &mut rng);
            let id = format!("synth-{s:03}-{u:02}");
            records.push(ManifestRecord {
                audio_path: format!("audio/{id}.wav"),
                utterance_id: id,
                duration_s: samples as f64 / sr,
                sample_rate_hz: TARGET_SAMPLE_RATE,
                speaker_id: format!("spk{s:03}"),
                raw_label: class_names[class].clone(),
                dataset_id: config.dataset_id.clone(),
                split: Split::Unassigned,
            });
            waveforms.push(wave);
        }
    }
    Ok(SynthCorpus { records, waveforms })
}

/// Writes `audio/*.wav` and `manifest.jsonl` under `dir`; returns the manifest path.
pub fn write(corpus: &SynthCorpus, dir: &Path) -> Result<PathBuf> {
    for (r, w) in corpus.records.iter().zip(&corpus.waveforms) {
        write_wav(&dir.join(&r.audio_path), w, TARGET_SAMPLE_RATE)?;
    }
    let manifest = dir.join("manifest.jsonl");
    write_jsonl(&manifest, &corpus.records)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        ["Khummuang", "Korat", "Pattani", "Thai-central"].map(String::from).to_vec()
    }

    #[test]
    fn shape_and_determinism() {
        let cfg = SynthConfig {
            speakers: 8,
            utterances_per_speaker: 2,
            ..SynthConfig::default()
        };
        let a = generate(&cfg, &names()).unwrap();
        assert_eq!(a.records.len(), 16);
        for (r, w) in a.records.iter().zip(&a.waveforms) {
            assert!((3.0..=10.0).contains(&r.duration_s));
            assert_eq!(w.len() as f64 / 16_000.0, r.duration_s);
            assert!(w.iter().all(|s| s.abs() <= 0.9 + 1e-6));
        }
        let b = generate(&cfg, &names()).unwrap();
        assert_eq!(a.waveforms, b.waveforms);
        assert_eq!(a.records[2].raw_label, "Korat");
    }

    #[test]
    fn bandpass_passes_centre_and_rejects_far_bands() {
        let n = 16_000;
        let tone = |f: f64| (0..n).map(|i| (2.0 * PI * f * i as f64 / 16_000.0).sin()).collect::<Vec<_>>();
        let rms = |x: &[f64]| (x[n / 2..].iter().map(|v| v * v).sum::<f64>() / (n / 2) as f64).sqrt();
        let pass = rms(&bandpass(&tone(1000.0), 1000.0, 4.0));
        let stop = rms(&bandpass(&tone(4000.0), 1000.0, 4.0));
        assert!((pass - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.02, "{pass}");
        assert!(stop < 0.1 * pass);
    }
}
