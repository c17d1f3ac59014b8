use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::AudioSignal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyConfig {
    pub n_subframes: usize,
    pub frame_ms: f64,
    pub hop_ms: f64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        EntropyConfig {
            n_subframes: 10,
            frame_ms: 40.0,
            hop_ms: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            frame_ms: 40.0,
            hop_ms: 20.0,
        }
    }
}

/// Frame start offsets; a signal shorter than one frame becomes a single
/// frame covering all of it.
fn frames(len: usize, frame_len: usize, hop: usize) -> (usize, Vec<usize>) {
    if len < frame_len {
        return (len, vec![0]);
    }
    (frame_len, (0..=(len - frame_len) / hop).map(|i| i * hop).collect())
}

/// Entropy in bits of one frame's sub-frame energy distribution. An
/// all-zero frame has entropy 0.
pub(crate) fn frame_energy_entropy(frame: &[f64], n_subframes: usize) -> f64 {
    let sub_len = frame.len() / n_subframes;
    let energies: Vec<f64> = (0..n_subframes)
        .map(|j| frame[j * sub_len..(j + 1) * sub_len].iter().map(|x| x * x).sum())
        .collect();
    let total: f64 = energies.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    energies
        .iter()
        .map(|e| e / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum()
}

/// Mean over frames of the sub-frame energy entropy.
pub fn energy_entropy(signal: &AudioSignal, config: &EntropyConfig) -> Result<f64> {
    if config.n_subframes < 2 {
        return Err(Error::domain("energy entropy needs at least 2 sub-frames"));
    }
    let frame_len = signal.ms_to_samples(config.frame_ms);
    let hop = signal.ms_to_samples(config.hop_ms);
    let (len, starts) = frames(signal.len(), frame_len, hop);
    if len < config.n_subframes {
        return Err(Error::domain(format!(
            "signal of {} samples is too short for {} sub-frames",
            signal.len(),
            config.n_subframes
        )));
    }
    let xs = signal.samples();
    let total: f64 = starts
        .iter()
        .map(|&s| frame_energy_entropy(&xs[s..s + len], config.n_subframes))
        .sum();
    Ok(total / starts.len() as f64)
}

pub(crate) fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Energy-weighted mean over frames of the magnitude-spectrum centroid.
///
/// Frames are Hann-windowed and zero-padded to the next power of two; bin
/// `k` of an `N`-point transform sits at `k * sr / N`. Silence yields 0.
pub fn spectral_centroid(signal: &AudioSignal, config: &SpectralConfig) -> Result<f64> {
    if signal.is_empty() {
        return Err(Error::domain("empty signal"));
    }
    let frame_len = signal.ms_to_samples(config.frame_ms);
    let hop = signal.ms_to_samples(config.hop_ms);
    let (len, starts) = frames(signal.len(), frame_len, hop);
    let n_fft = len.next_power_of_two().max(2);
    let window = hann(len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let bin_hz = signal.sample_rate() as f64 / n_fft as f64;
    let xs = signal.samples();

    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut weighted = 0.0;
    let mut weight_sum = 0.0;
    for &s in &starts {
        let frame = &xs[s..s + len];
        let energy: f64 = frame.iter().map(|x| x * x).sum();
        if energy == 0.0 {
            continue;
        }
        for (slot, (x, w)) in buf.iter_mut().zip(frame.iter().zip(&window)) {
            *slot = Complex::new(x * w, 0.0);
        }
        buf[len..].iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        fft.process(&mut buf);
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, c) in buf.iter().take(n_fft / 2 + 1).enumerate() {
            let m = c.norm();
            num += k as f64 * bin_hz * m;
            den += m;
        }
        if den > 0.0 {
            weighted += energy * num / den;
            weight_sum += energy;
        }
    }
    Ok(if weight_sum > 0.0 { weighted / weight_sum } else { 0.0 })
}
