//! Acoustic probe targets computed directly from mono waveforms.
//!
//! These are textbook definitions, not a bit-exact port of any particular
//! toolkit: frame-wise normalized autocorrelation pitch, peak-to-peak period
//! jitter and shimmer, sub-frame energy entropy and a Hann-windowed spectral
//! centroid.

mod perturbation;
mod pitch;
mod spectral;
mod wav;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use perturbation::{extract_periods, jitter_local, jitter_regions, shimmer_local, shimmer_regions, PeriodSet};
pub use pitch::{mean_pitch, pitch_track, voiced_unvoiced_ratio, PitchConfig, PitchFrame, PitchTrack};
pub use spectral::{energy_entropy, spectral_centroid, EntropyConfig, SpectralConfig};
pub use wav::{read_wav, write_wav};

/// Mono samples in [-1, 1] at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::domain("sample rate must be positive"));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::domain(format!("sample {bad} is outside [-1, 1]")));
        }
        Ok(AudioSignal { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub(crate) fn ms_to_samples(&self, ms: f64) -> usize {
        ((ms * self.sample_rate as f64 / 1000.0).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticFeatures {
    pub duration_s: f64,
    pub zcr: f64,
    pub mean_pitch_hz: f64,
    pub jitter_local: f64,
    pub shimmer_local: f64,
    pub energy_entropy: f64,
    pub spectral_centroid_hz: f64,
    pub voiced_unvoiced_ratio: f64,
    /// Fewer than two pitch periods were found; jitter and shimmer are 0.
    pub perturbation_degenerate: bool,
}

impl AcousticFeatures {
    pub const COLUMNS: [&'static str; 8] = [
        "duration",
        "zero_crossing_rate",
        "mean_pitch",
        "jitter_local",
        "shimmer_local",
        "energy_entropy",
        "spectral_centroid",
        "voiced_unvoiced_ratio",
    ];

    /// Values in [`AcousticFeatures::COLUMNS`] order.
    pub fn values(&self) -> [f64; 8] {
        [
            self.duration_s,
            self.zcr,
            self.mean_pitch_hz,
            self.jitter_local,
            self.shimmer_local,
            self.energy_entropy,
            self.spectral_centroid_hz,
            self.voiced_unvoiced_ratio,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcousticConfig {
    pub pitch: PitchConfig,
    pub entropy: EntropyConfig,
    pub spectral: SpectralConfig,
}

pub fn duration(signal: &AudioSignal) -> Result<f64> {
    if signal.is_empty() {
        return Err(Error::domain("empty signal"));
    }
    Ok(signal.len() as f64 / signal.sample_rate as f64)
}

/// Strict sign changes between consecutive samples over N - 1. A zero
/// sample takes the sign of the last non-zero sample before it.
pub fn zero_crossing_rate(signal: &AudioSignal) -> Result<f64> {
    let xs = signal.samples();
    if xs.len() < 2 {
        return Err(Error::domain("zero crossing rate needs at least 2 samples"));
    }
    let mut prev_sign = 0i8;
    let mut crossings = 0usize;
    for &x in xs {
        let sign = if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            prev_sign
        };
        if prev_sign != 0 && sign != prev_sign {
            crossings += 1;
        }
        prev_sign = sign;
    }
    Ok(crossings as f64 / (xs.len() - 1) as f64)
}

pub fn extract_acoustic_features(signal: &AudioSignal, config: &AcousticConfig) -> Result<AcousticFeatures> {
    let track = pitch_track(signal, &config.pitch)?;
    let periods = extract_periods(signal, &track);
    let jitter = jitter_regions(&periods.periods);
    let shimmer = shimmer_regions(&periods.amplitudes);
    Ok(AcousticFeatures {
        duration_s: duration(signal)?,
        zcr: zero_crossing_rate(signal)?,
        mean_pitch_hz: mean_pitch(&track),
        jitter_local: jitter.unwrap_or(0.0),
        shimmer_local: shimmer.unwrap_or(0.0),
        energy_entropy: energy_entropy(signal, &config.entropy)?,
        spectral_centroid_hz: spectral_centroid(signal, &config.spectral)?,
        voiced_unvoiced_ratio: voiced_unvoiced_ratio(&track)?,
        perturbation_degenerate: jitter.is_none() || shimmer.is_none(),
    })
}

/// Reads and featurizes each file on a pool of `parallelism` threads.
/// Results come back in input order.
pub fn extract_batch(
    paths: &[PathBuf],
    config: &AcousticConfig,
    parallelism: usize,
) -> Vec<Result<AcousticFeatures>> {
    let work = |p: &PathBuf| -> Result<AcousticFeatures> {
        let signal = read_wav(p)?;
        extract_acoustic_features(&signal, config)
    };
    crate::par::map_ordered(paths, parallelism, work)
}

pub fn extract_file(path: &Path, config: &AcousticConfig) -> Result<AcousticFeatures> {
    extract_acoustic_features(&read_wav(path)?, config)
}
