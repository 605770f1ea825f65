//! Log-mel filterbank frontend and the seeded mock backbone built on it.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use voxlect_core::corpus::TARGET_SAMPLE_RATE;
use voxlect_core::probe::{Backbone, Encoder, EncoderConfig, Frontend, ProbeError};

pub const WINDOW: usize = 400;
pub const HOP: usize = 320;
pub const FFT_SIZE: usize = 512;
pub const DEFAULT_MELS: usize = 40;
/// Frames per second at 16 kHz.
pub const FRAME_RATE_HZ: f64 = TARGET_SAMPLE_RATE as f64 / HOP as f64;

const LOG_FLOOR: f64 = 1e-6;
const LOG_SHIFT: f64 = 4.0;
const LOG_SCALE: f64 = 6.0;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale between 0 Hz and Nyquist, as
/// `(first_bin, weights)` per filter.
fn mel_filters(n_mels: usize) -> Vec<(usize, Vec<f64>)> {
    let bins = FFT_SIZE / 2 + 1;
    let nyquist = TARGET_SAMPLE_RATE as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = |k: usize| k as f64 * TARGET_SAMPLE_RATE as f64 / FFT_SIZE as f64;
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let weights: Vec<(usize, f64)> = (0..bins)
                .filter_map(|k| {
                    let f = bin_hz(k);
                    let w = if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect();
            // Narrow low filters may fall between bins; give them the nearest one.
            if weights.is_empty() {
                let k = (mid / bin_hz(1)).round() as usize;
                (k.min(bins - 1), vec![1.0])
            } else {
                (weights[0].0, weights.iter().map(|w| w.1).collect())
            }
        })
        .collect()
}

/// 25 ms Hann windows every 20 ms, 512-point FFT, log mel energies.
///
/// A waveform of `n` samples yields `n / 320` frames (50 per second).
#[derive(Clone)]
pub struct LogMelFrontend {
    n_mels: usize,
    window: Vec<f64>,
    filters: Vec<(usize, Vec<f64>)>,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for LogMelFrontend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LogMelFrontend").field("n_mels", &self.n_mels).finish()
    }
}

impl LogMelFrontend {
    pub fn new(n_mels: usize) -> Self {
        let window = (0..WINDOW)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / WINDOW as f64).cos())
            .collect();
        LogMelFrontend {
            n_mels,
            window,
            filters: mel_filters(n_mels),
            fft: FftPlanner::new().plan_fft_forward(FFT_SIZE),
        }
    }

    pub fn frames(samples: usize) -> usize {
        samples / HOP
    }
}

impl Frontend for LogMelFrontend {
    fn feature_dim(&self) -> usize {
        self.n_mels
    }

    fn frame_rate_hz(&self) -> f64 {
        FRAME_RATE_HZ
    }

    fn min_samples(&self) -> usize {
        HOP
    }

    fn features(&self, waveform: &[f32]) -> Result<Array2<f64>, ProbeError> {
        let t = Self::frames(waveform.len());
        if t == 0 {
            return Err(ProbeError::TooShort {
                samples: waveform.len(),
                minimum: HOP,
            });
        }
        let mut buf = vec![Complex::new(0.0, 0.0); t * FFT_SIZE];
        for (i, frame) in buf.chunks_exact_mut(FFT_SIZE).enumerate() {
            let start = i * HOP;
            let end = (start + WINDOW).min(waveform.len());
            for (j, s) in waveform[start..end].iter().enumerate() {
                frame[j].re = *s as f64 * self.window[j];
            }
        }
        self.fft.process(&mut buf);
        let mut out = Array2::zeros((t, self.n_mels));
        for (i, spec) in buf.chunks_exact(FFT_SIZE).enumerate() {
            for (m, (first, weights)) in self.filters.iter().enumerate() {
                let energy: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * spec[first + k].norm_sqr())
                    .sum();
                out[[i, m]] = ((energy + LOG_FLOOR).ln() + LOG_SHIFT) / LOG_SCALE;
            }
        }
        Ok(out)
    }
}

/// Shape of the seeded stand-in backbone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockBackboneConfig {
    /// Transformer-like blocks `L`; the layer stack has `L + 1` entries.
    pub layers: usize,
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub n_mels: usize,
    pub seed: u64,
}

impl Default for MockBackboneConfig {
    fn default() -> Self {
        MockBackboneConfig {
            layers: 4,
            hidden_dim: 32,
            ffn_dim: 64,
            n_mels: DEFAULT_MELS,
            seed: 0,
        }
    }
}

impl MockBackboneConfig {
    pub fn id(&self) -> String {
        format!("mock-logmel-l{}-d{}-s{}", self.layers, self.hidden_dim, self.seed)
    }
}

pub type MockBackbone = Backbone<LogMelFrontend>;

/// Log-mel features pushed through a seeded stack of frozen residual blocks.
pub fn mock_backbone(config: &MockBackboneConfig) -> Result<MockBackbone, ProbeError> {
    let encoder = Encoder::seeded(&EncoderConfig {
        input_dim: config.n_mels,
        hidden_dim: config.hidden_dim,
        ffn_dim: config.ffn_dim,
        num_blocks: config.layers,
        seed: config.seed,
    });
    Backbone::new(config.id(), LogMelFrontend::new(config.n_mels), encoder)
}
