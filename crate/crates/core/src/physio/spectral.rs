//! Frequency-domain HRV: tachogram resampling and segment-averaged
//! periodograms.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::PhysioError;

pub const RESAMPLE_HZ: f64 = 4.0;
pub const SEGMENT_SECONDS: f64 = 64.0;
pub const MIN_SPAN_SECONDS: f64 = 120.0;
pub const MIN_FREQ_INTERVALS: usize = 10;

pub const VLF_BAND: (f64, f64) = (0.0033, 0.04);
pub const LF_BAND: (f64, f64) = (0.04, 0.15);
pub const HF_BAND: (f64, f64) = (0.15, 0.40);

/// Band powers in ms^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrvFrequencyFeatures {
    pub vlf: f64,
    pub lf: f64,
    pub hf: f64,
}

impl HrvFrequencyFeatures {
    pub fn lf_hf_ratio(&self) -> Result<f64, PhysioError> {
        if self.hf <= f64::EPSILON * (self.vlf + self.lf).max(1.0) {
            return Err(PhysioError::ZeroHfPower);
        }
        Ok(self.lf / self.hf)
    }

    pub fn total(&self) -> f64 {
        self.vlf + self.lf + self.hf
    }
}

/// One-sided power spectral density (units^2 / Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub resolution_hz: f64,
    pub density: Vec<f64>,
}

impl Psd {
    /// Rectangle-rule integral over bins with frequency in `[lo, hi)`.
    pub fn band_power(&self, (lo, hi): (f64, f64)) -> f64 {
        self.density
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = *k as f64 * self.resolution_hz;
                f >= lo && f < hi
            })
            .map(|(_, p)| p * self.resolution_hz)
            .sum()
    }
}

fn hann(len: usize) -> Vec<f64> {
    // Periodic Hann, as used for spectral estimation.
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
        .collect()
}

/// Welch estimate with a Hann taper and 50 % overlap. Each segment has its
/// mean removed before tapering.
pub fn welch(signal: &[f64], fs: f64, segment_len: usize) -> Psd {
    let seg = segment_len.min(signal.len()).max(2);
    let step = (seg / 2).max(1);
    let window = hann(seg);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);
    let n_bins = seg / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut segments = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    let mut start = 0;
    while start + seg <= signal.len() {
        let chunk = &signal[start..start + seg];
        let mean = chunk.iter().sum::<f64>() / seg as f64;
        for (b, (x, w)) in buf.iter_mut().zip(chunk.iter().zip(&window)) {
            *b = Complex::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (fs * window_power * segments.max(1) as f64);
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let one_sided = if k == 0 || (seg % 2 == 0 && k == n_bins - 1) {
                1.0
            } else {
                2.0
            };
            p * scale * one_sided
        })
        .collect();
    Psd {
        resolution_hz: fs / seg as f64,
        density,
    }
}

/// Linear interpolation of `(t, v)` points (t increasing) on a uniform grid
/// starting at the first point.
pub fn resample_linear(times: &[f64], values: &[f64], fs: f64) -> Vec<f64> {
    let (Some(&t0), Some(&t_end)) = (times.first(), times.last()) else {
        return Vec::new();
    };
    let n = ((t_end - t0) * fs).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let t = t0 + i as f64 / fs;
        while j + 2 < times.len() && times[j + 1] < t {
            j += 1;
        }
        let (ta, tb) = (times[j], times[(j + 1).min(times.len() - 1)]);
        let (va, vb) = (values[j], values[(j + 1).min(values.len() - 1)]);
        let v = if tb > ta {
            let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            va + w * (vb - va)
        } else {
            va
        };
        out.push(v);
    }
    out
}

/// Band powers of the NN tachogram. `beat_times_s` are the beat times of the
/// intervals (seconds, any origin) and `nn_ms` the intervals.
pub fn hrv_freq_features(
    beat_times_s: &[f64],
    nn_ms: &[f64],
) -> Result<HrvFrequencyFeatures, PhysioError> {
    if nn_ms.len() < MIN_FREQ_INTERVALS || beat_times_s.len() != nn_ms.len() {
        return Err(PhysioError::WindowTooShort);
    }
    let span = beat_times_s[beat_times_s.len() - 1] - beat_times_s[0];
    if span < MIN_SPAN_SECONDS {
        return Err(PhysioError::WindowTooShort);
    }
    // Relative times keep the grid independent of the absolute origin.
    let t0 = beat_times_s[0];
    let rel: Vec<f64> = beat_times_s.iter().map(|t| t - t0).collect();
    let mut tachogram = resample_linear(&rel, nn_ms, RESAMPLE_HZ);
    let mean = tachogram.iter().sum::<f64>() / tachogram.len() as f64;
    tachogram.iter_mut().for_each(|v| *v -= mean);
    let psd = welch(
        &tachogram,
        RESAMPLE_HZ,
        (SEGMENT_SECONDS * RESAMPLE_HZ) as usize,
    );
    Ok(HrvFrequencyFeatures {
        vlf: psd.band_power(VLF_BAND),
        lf: psd.band_power(LF_BAND),
        hf: psd.band_power(HF_BAND),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Beats following nn(t) = base + amp sin(2 pi f t) until `duration` s.
    fn tone_beats(freq: f64, amp: f64, duration: f64) -> (Vec<f64>, Vec<f64>) {
        let mut t = 0.0;
        let (mut times, mut nn) = (Vec::new(), Vec::new());
        while t < duration {
            let v = 900.0 + amp * (2.0 * PI * freq * t).sin();
            t += v / 1000.0;
            times.push(t);
            nn.push(v);
        }
        (times, nn)
    }

    #[test]
    fn low_frequency_tone() {
        let (t, nn) = tone_beats(0.1, 50.0, 300.0);
        let f = hrv_freq_features(&t, &nn).unwrap();
        assert!(f.lf / f.total() > 0.8, "{f:?}");
    }

    #[test]
    fn high_frequency_tone() {
        let (t, nn) = tone_beats(0.3, 50.0, 300.0);
        let f = hrv_freq_features(&t, &nn).unwrap();
        assert!(f.hf / f.total() > 0.8, "{f:?}");
    }

    #[test]
    fn constant_tachogram() {
        let t: Vec<f64> = (1..=300).map(|i| i as f64 * 0.9).collect();
        let nn = vec![900.0; t.len()];
        let f = hrv_freq_features(&t, &nn).unwrap();
        assert!(f.total() < 1e-12);
        assert!(matches!(f.lf_hf_ratio(), Err(PhysioError::ZeroHfPower)));
    }

    #[test]
    fn short_window() {
        let (t, nn) = tone_beats(0.1, 50.0, 60.0);
        assert!(matches!(
            hrv_freq_features(&t, &nn),
            Err(PhysioError::WindowTooShort)
        ));
    }

    #[test]
    fn parseval_for_white_noise_scale() {
        // Density integrates to the variance for a zero-mean sinusoid.
        let fs = 4.0;
        let x: Vec<f64> = (0..1024)
            .map(|i| (2.0 * PI * 0.25 * i as f64 / fs).sin())
            .collect();
        let psd = welch(&x, fs, 256);
        let total: f64 = psd.density.iter().map(|p| p * psd.resolution_hz).sum();
        assert!((total - 0.5).abs() < 0.02, "{total}");
    }

    #[test]
    fn resample_hits_knots() {
        let out = resample_linear(&[0.0, 1.0, 2.0], &[0.0, 4.0, 0.0], 2.0);
        assert_eq!(out, vec![0.0, 2.0, 4.0, 2.0, 0.0]);
    }
}
