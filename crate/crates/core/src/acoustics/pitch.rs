use serde::{Deserialize, Serialize};

use super::AudioSignal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PitchConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    pub voicing_threshold: f64,
    /// A candidate peak is accepted once it reaches this fraction of the best
    /// peak in the frame; the shortest such lag wins (guards against octave
    /// errors at multiples of the true period).
    pub octave_tolerance: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        PitchConfig {
            frame_ms: 40.0,
            hop_ms: 10.0,
            f0_min_hz: 60.0,
            f0_max_hz: 500.0,
            voicing_threshold: 0.45,
            octave_tolerance: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchFrame {
    /// First sample of the frame.
    pub start: usize,
    /// 0 for unvoiced frames.
    pub f0_hz: f64,
    pub voiced: bool,
    /// Normalized autocorrelation at the chosen lag.
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchTrack {
    pub frames: Vec<PitchFrame>,
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl PitchTrack {
    pub fn voiced_count(&self) -> usize {
        self.frames.iter().filter(|f| f.voiced).count()
    }
}

/// Frame-wise pitch by normalized autocorrelation.
///
/// Each frame is mean-removed; for lag τ the correlation
/// `Σ x[n]x[n+τ] / sqrt(Σ x[n]² · Σ x[n+τ]²)` is evaluated over the
/// overlapping part. Interior local maxima within the f0 range are
/// candidates; the shortest lag whose peak is within `octave_tolerance` of
/// the best candidate is refined by parabolic interpolation.
pub fn pitch_track(signal: &AudioSignal, config: &PitchConfig) -> Result<PitchTrack> {
    if signal.sample_rate() < 8000 {
        return Err(Error::domain(format!(
            "pitch analysis needs a sample rate of at least 8000 Hz, got {}",
            signal.sample_rate()
        )));
    }
    if !(config.f0_min_hz > 0.0 && config.f0_min_hz < config.f0_max_hz) {
        return Err(Error::domain("invalid f0 range"));
    }
    let frame_len = signal.ms_to_samples(config.frame_ms);
    let hop = signal.ms_to_samples(config.hop_ms);
    let xs = signal.samples();
    if xs.len() < frame_len {
        return Err(Error::domain(format!(
            "signal of {} samples is shorter than one {frame_len}-sample frame",
            xs.len()
        )));
    }
    let sr = signal.sample_rate() as f64;
    let min_lag = ((sr / config.f0_max_hz).floor() as usize).max(2);
    let max_lag = ((sr / config.f0_min_hz).ceil() as usize).min(frame_len.saturating_sub(2));
    if max_lag <= min_lag {
        return Err(Error::domain("frame too short for the requested f0 range"));
    }

    let n_frames = 1 + (xs.len() - frame_len) / hop;
    let mut frame = vec![0.0; frame_len];
    let mut corr = vec![0.0; max_lag + 2];
    let mut frames = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let start = i * hop;
        frame.copy_from_slice(&xs[start..start + frame_len]);
        let m = frame.iter().sum::<f64>() / frame_len as f64;
        frame.iter_mut().for_each(|x| *x -= m);
        let (lag, strength) = best_lag(&frame, min_lag, max_lag, config.octave_tolerance, &mut corr);
        let voiced = strength >= config.voicing_threshold && lag > 0.0;
        frames.push(PitchFrame {
            start,
            f0_hz: if voiced { sr / lag } else { 0.0 },
            voiced,
            strength,
        });
    }
    Ok(PitchTrack {
        frames,
        frame_len,
        hop,
        sample_rate: signal.sample_rate(),
    })
}

fn normalized_autocorr(frame: &[f64], lag: usize) -> f64 {
    let n = frame.len() - lag;
    let (a, b) = (&frame[..n], &frame[lag..]);
    let mut xy = 0.0;
    let mut xx = 0.0;
    let mut yy = 0.0;
    for (x, y) in a.iter().zip(b) {
        xy += x * y;
        xx += x * x;
        yy += y * y;
    }
    let denom = (xx * yy).sqrt();
    if denom > 0.0 {
        xy / denom
    } else {
        0.0
    }
}

/// Returns (fractional lag, peak strength); (0, 0) when no candidate exists.
fn best_lag(frame: &[f64], min_lag: usize, max_lag: usize, tolerance: f64, corr: &mut [f64]) -> (f64, f64) {
    if frame.iter().all(|&x| x == 0.0) {
        return (0.0, 0.0);
    }
    for lag in (min_lag - 1)..=(max_lag + 1) {
        corr[lag] = normalized_autocorr(frame, lag);
    }
    let peaks: Vec<usize> = (min_lag..=max_lag)
        .filter(|&l| corr[l] > 0.0 && corr[l] >= corr[l - 1] && corr[l] > corr[l + 1])
        .collect();
    let Some(best) = peaks.iter().map(|&l| corr[l]).reduce(f64::max) else {
        return (0.0, 0.0);
    };
    let lag = peaks
        .into_iter()
        .find(|&l| corr[l] >= tolerance * best)
        .expect("the best peak satisfies its own tolerance");
    let (y0, y1, y2) = (corr[lag - 1], corr[lag], corr[lag + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let delta = if denom != 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
    let delta = delta.clamp(-0.5, 0.5);
    let peak = y1 - 0.25 * (y0 - y2) * delta;
    (lag as f64 + delta, peak.min(1.0))
}

/// Mean f0 over voiced frames; 0 when nothing is voiced.
pub fn mean_pitch(track: &PitchTrack) -> f64 {
    let voiced: Vec<f64> = track.frames.iter().filter(|f| f.voiced).map(|f| f.f0_hz).collect();
    if voiced.is_empty() {
        0.0
    } else {
        voiced.iter().sum::<f64>() / voiced.len() as f64
    }
}

/// #voiced / #unvoiced, with the denominator clamped to 1 when every frame
/// is voiced.
pub fn voiced_unvoiced_ratio(track: &PitchTrack) -> Result<f64> {
    if track.frames.is_empty() {
        return Err(Error::domain("empty pitch track"));
    }
    let voiced = track.voiced_count();
    let unvoiced = track.frames.len() - voiced;
    Ok(voiced as f64 / unvoiced.max(1) as f64)
}
