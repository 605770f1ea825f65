//! Band-limited resampling.
//!
//! Windowed-sinc interpolation with a precomputed, oversampled kernel table
//! (polyphase lookup with linear interpolation between phases). The same
//! routine backs sample-rate conversion and tempo stretching.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Kernel quality knobs. The defaults are what every pipeline stage uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResamplerQuality {
    /// Zero crossings of the sinc on each side of the centre tap.
    pub zero_crossings: usize,
    /// Table entries per unit of kernel argument.
    pub oversampling: usize,
}

impl Default for ResamplerQuality {
    fn default() -> Self {
        ResamplerQuality {
            zero_crossings: 16,
            oversampling: 512,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SincResampler {
    quality: ResamplerQuality,
    table: Vec<f64>,
}

impl Default for SincResampler {
    fn default() -> Self {
        SincResampler::new(ResamplerQuality::default())
    }
}

impl SincResampler {
    pub fn new(quality: ResamplerQuality) -> Self {
        let n = quality.zero_crossings * quality.oversampling;
        // Blackman window over [-Z, Z], stored for the non-negative half.
        let table = (0..=n + 1)
            .map(|j| {
                let x = j as f64 / quality.oversampling as f64;
                let frac = (x / quality.zero_crossings as f64).min(1.0);
                let window = 0.42 + 0.5 * libm::cos(PI * frac) + 0.08 * libm::cos(2.0 * PI * frac);
                sinc(x) * window
            })
            .collect();
        SincResampler { quality, table }
    }

    pub fn quality(&self) -> ResamplerQuality {
        self.quality
    }

    fn kernel(&self, x: f64) -> f64 {
        let x = libm::fabs(x);
        if x >= self.quality.zero_crossings as f64 {
            return 0.0;
        }
        let pos = x * self.quality.oversampling as f64;
        let i = pos as usize;
        let frac = pos - i as f64;
        self.table[i] + frac * (self.table[i + 1] - self.table[i])
    }

    /// Resamples `input` so that one input sample lasts `ratio` output samples.
    ///
    /// `ratio = out_rate / in_rate`. The output holds `round(len * ratio)`
    /// samples; positions outside the input read as zero.
    pub fn resample(&self, input: &[f32], ratio: f64) -> Vec<f32> {
        let out_len = libm::round(input.len() as f64 * ratio) as usize;
        self.resample_to(input, ratio, out_len)
    }

    /// As [`resample`](Self::resample) with an explicit output length.
    pub fn resample_to(&self, input: &[f32], ratio: f64, out_len: usize) -> Vec<f32> {
        assert!(ratio > 0.0 && ratio.is_finite(), "resampling ratio must be positive");
        if ratio == 1.0 {
            let mut out = vec![0.0f32; out_len];
            let n = out_len.min(input.len());
            out[..n].copy_from_slice(&input[..n]);
            return out;
        }
        // Lowpass at the lower of the two Nyquist rates.
        let cutoff = ratio.min(1.0);
        let reach = self.quality.zero_crossings as f64 / cutoff;
        let len = input.len() as isize;
        let mut out = Vec::with_capacity(out_len);
        for i in 0..out_len {
            let t = i as f64 / ratio;
            let lo = libm::ceil(t - reach) as isize;
            let hi = libm::floor(t + reach) as isize;
            let mut acc = 0.0f64;
            for k in lo.max(0)..=hi.min(len - 1) {
                acc += input[k as usize] as f64 * self.kernel((t - k as f64) * cutoff);
            }
            out.push((acc * cutoff) as f32);
        }
        out
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        libm::sin(PI * x) / (PI * x)
    }
}
