//! Training-time waveform augmentations.
//!
//! [`apply_policy`] runs, in order, additive Gaussian noise, time masking,
//! time stretching and polarity inversion, each gated by its probability.

use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::MAX_SAMPLES;
use crate::dsp::SincResampler;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("SNR undefined for zero-power signal")]
    SilentInput,
    #[error("SNR must be finite, got {0}")]
    NonFiniteSnr(f64),
    #[error("mask ratio {0} outside (0, 1)")]
    BadMaskRatio(f64),
    #[error("stretch rate {0} outside [0.5, 2.0]")]
    BadStretchRate(f64),
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(&'static str),
}

/// Probabilities and parameter ranges of the four augmentations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationPolicy {
    pub noise_prob: f64,
    pub snr_range_db: [f64; 2],
    pub mask_prob: f64,
    pub mask_ratio_range: [f64; 2],
    /// Number of masked spans; the drawn ratio is shared evenly between them.
    pub mask_spans: usize,
    pub stretch_prob: f64,
    pub stretch_range: [f64; 2],
    pub polarity_prob: f64,
    pub seed: u64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        AugmentationPolicy {
            noise_prob: 1.0,
            snr_range_db: [3.0, 30.0],
            mask_prob: 1.0,
            mask_ratio_range: [0.10, 0.15],
            mask_spans: 1,
            stretch_prob: 1.0,
            stretch_range: [0.9, 1.1],
            polarity_prob: 0.5,
            seed: 0,
        }
    }
}

impl AugmentationPolicy {
    /// A policy that never fires.
    pub fn disabled() -> Self {
        AugmentationPolicy {
            noise_prob: 0.0,
            mask_prob: 0.0,
            stretch_prob: 0.0,
            polarity_prob: 0.0,
            ..AugmentationPolicy::default()
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let probs = [self.noise_prob, self.mask_prob, self.stretch_prob, self.polarity_prob];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(AugmentError::InvalidPolicy("probabilities must lie in [0, 1]"));
        }
        let ranges = [self.snr_range_db, self.mask_ratio_range, self.stretch_range];
        if ranges.iter().any(|[lo, hi]| lo > hi || !lo.is_finite() || !hi.is_finite()) {
            return Err(AugmentError::InvalidPolicy("ranges must be finite with low <= high"));
        }
        let [mlo, mhi] = self.mask_ratio_range;
        if mlo <= 0.0 || mhi >= 1.0 {
            return Err(AugmentError::InvalidPolicy("mask ratios must lie in (0, 1)"));
        }
        let [slo, shi] = self.stretch_range;
        if slo < 0.5 || shi > 2.0 {
            return Err(AugmentError::InvalidPolicy("stretch rates must lie in [0.5, 2.0]"));
        }
        if self.mask_spans == 0 {
            return Err(AugmentError::InvalidPolicy("mask_spans must be at least 1"));
        }
        Ok(())
    }
}

/// Mean of squared samples.
pub fn power(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / samples.len() as f64
}

/// Adds white Gaussian noise scaled so the realized SNR is exactly `snr_db`.
///
/// The noise is drawn, its empirical power measured, and then rescaled; the
/// only deviation from the target comes from f32 rounding of the sum.
pub fn add_gaussian_noise<R: Rng + ?Sized>(wave: &mut [f32], snr_db: f64, rng: &mut R) -> Result<(), AugmentError> {
    if !snr_db.is_finite() {
        return Err(AugmentError::NonFiniteSnr(snr_db));
    }
    let signal = power(wave);
    if signal <= 0.0 {
        return Err(AugmentError::SilentInput);
    }
    let noise: Vec<f64> = (0..wave.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let raw = noise.iter().map(|n| n * n).sum::<f64>() / noise.len() as f64;
    let target = signal / libm::pow(10.0, snr_db / 10.0);
    let scale = libm::sqrt(target / raw);
    for (s, n) in wave.iter_mut().zip(noise) {
        *s = (*s as f64 + scale * n) as f32;
    }
    Ok(())
}

/// Zeroes one contiguous span of `round(ratio * len)` samples at a uniform
/// random position. Returns the span.
pub fn time_mask<R: Rng + ?Sized>(wave: &mut [f32], ratio: f64, rng: &mut R) -> Result<Range<usize>, AugmentError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(AugmentError::BadMaskRatio(ratio));
    }
    let width = mask_width(wave.len(), ratio);
    let start = rng.random_range(0..=wave.len() - width);
    wave[start..start + width].fill(0.0);
    Ok(start..start + width)
}

fn mask_width(len: usize, ratio: f64) -> usize {
    (libm::round(ratio * len as f64) as usize).min(len)
}

/// Tempo change by resampling: output length is `round(len / rate)`.
/// Pitch shifts along with tempo.
pub fn time_stretch(wave: &[f32], rate: f64, resampler: &SincResampler) -> Result<Vec<f32>, AugmentError> {
    if !(0.5..=2.0).contains(&rate) {
        return Err(AugmentError::BadStretchRate(rate));
    }
    let out_len = libm::round(wave.len() as f64 / rate) as usize;
    Ok(resampler.resample_to(wave, 1.0 / rate, out_len))
}

pub fn polarity_invert(wave: &mut [f32]) {
    for s in wave.iter_mut() {
        *s = -*s;
    }
}

/// Runs the policy over one waveform. Output is re-truncated to 15 s.
pub fn apply_policy<R: Rng + ?Sized>(
    mut wave: Vec<f32>,
    policy: &AugmentationPolicy,
    rng: &mut R,
    resampler: &SincResampler,
) -> Result<Vec<f32>, AugmentError> {
    policy.validate()?;
    if fires(rng, policy.noise_prob) {
        let snr = uniform(rng, policy.snr_range_db);
        add_gaussian_noise(&mut wave, snr, rng)?;
    }
    if fires(rng, policy.mask_prob) {
        let ratio = uniform(rng, policy.mask_ratio_range) / policy.mask_spans as f64;
        for _ in 0..policy.mask_spans {
            time_mask(&mut wave, ratio, rng)?;
        }
    }
    if fires(rng, policy.stretch_prob) {
        let rate = uniform(rng, policy.stretch_range);
        wave = time_stretch(&wave, rate, resampler)?;
    }
    if fires(rng, policy.polarity_prob) {
        polarity_invert(&mut wave);
    }
    wave.truncate(MAX_SAMPLES);
    Ok(wave)
}

fn fires<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}
