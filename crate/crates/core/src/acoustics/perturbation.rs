use super::{AudioSignal, PitchTrack};
use crate::error::{Error, Result};

/// Glottal-cycle measurements grouped by contiguous voiced region.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PeriodSet {
    /// Consecutive peak-to-peak durations in seconds.
    pub periods: Vec<Vec<f64>>,
    /// Peak amplitude of each detected cycle.
    pub amplitudes: Vec<Vec<f64>>,
}

fn local_perturbation(values: &[f64], what: &str) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::domain(format!("local {what} needs at least 2 values")));
    }
    let diffs: f64 = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let mean_abs_diff = diffs / (values.len() - 1) as f64;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean == 0.0 {
        return Err(Error::domain(format!("local {what} of an all-zero sequence")));
    }
    Ok(mean_abs_diff / mean)
}

/// Mean absolute difference of consecutive periods over the mean period.
pub fn jitter_local(periods: &[f64]) -> Result<f64> {
    local_perturbation(periods, "jitter")
}

/// Amplitude analogue of [`jitter_local`].
pub fn shimmer_local(amplitudes: &[f64]) -> Result<f64> {
    local_perturbation(amplitudes, "shimmer")
}

/// Pools several regions: differences are only taken within a region, the
/// mean runs over every value. `None` when no region has two values.
fn pooled(regions: &[Vec<f64>]) -> Option<f64> {
    let mut diff_sum = 0.0;
    let mut diff_n = 0usize;
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in regions {
        sum += r.iter().sum::<f64>();
        n += r.len();
        for w in r.windows(2) {
            diff_sum += (w[1] - w[0]).abs();
            diff_n += 1;
        }
    }
    if diff_n == 0 || sum == 0.0 {
        return None;
    }
    Some((diff_sum / diff_n as f64) / (sum / n as f64))
}

pub fn jitter_regions(periods: &[Vec<f64>]) -> Option<f64> {
    pooled(periods)
}

pub fn shimmer_regions(amplitudes: &[Vec<f64>]) -> Option<f64> {
    pooled(amplitudes)
}

/// Parabolic refinement of a sample peak: (sub-sample offset, peak value).
fn refine_peak(xs: &[f64], i: usize) -> (f64, f64) {
    if i == 0 || i + 1 >= xs.len() {
        return (0.0, xs[i]);
    }
    let (y0, y1, y2) = (xs[i - 1], xs[i], xs[i + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    if denom >= 0.0 {
        return (0.0, y1);
    }
    let delta = (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5);
    (delta, y1 - 0.25 * (y0 - y2) * delta)
}

fn argmax(xs: &[f64], lo: usize, hi: usize) -> usize {
    (lo..hi)
        .max_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(b.cmp(&a)))
        .expect("non-empty search window")
}

/// Locates one waveform peak per glottal cycle inside each voiced region.
///
/// The first peak is the maximum within one local period of the region
/// start; each following peak is the maximum within ±20 % of the local
/// period around the predicted position. Local periods come from the
/// enclosing pitch frame.
pub fn extract_periods(signal: &AudioSignal, track: &PitchTrack) -> PeriodSet {
    let xs = signal.samples();
    let sr = signal.sample_rate() as f64;
    let mut out = PeriodSet::default();

    let mut i = 0;
    while i < track.frames.len() {
        if !track.frames[i].voiced {
            i += 1;
            continue;
        }
        let first = i;
        while i < track.frames.len() && track.frames[i].voiced {
            i += 1;
        }
        let region = &track.frames[first..i];
        let start = region[0].start;
        let end = (region[region.len() - 1].start + track.frame_len).min(xs.len());

        let period_at = |pos: usize| -> f64 {
            let k = ((pos.saturating_sub(start)) / track.hop).min(region.len() - 1);
            sr / region[k].f0_hz
        };

        let mut positions = Vec::new();
        let mut amps = Vec::new();
        let t0 = period_at(start).round() as usize;
        if start + t0 > end {
            continue;
        }
        let mut peak = argmax(xs, start, start + t0);
        loop {
            let (delta, amp) = refine_peak(xs, peak);
            positions.push(peak as f64 + delta);
            amps.push(amp);
            let period = period_at(peak);
            let radius = (0.2 * period).ceil() as usize;
            let predicted = peak + period.round() as usize;
            let lo = predicted.saturating_sub(radius).max(peak + 1);
            let hi = predicted + radius + 1;
            if hi > end {
                break;
            }
            peak = argmax(xs, lo, hi);
        }
        if positions.len() >= 2 {
            out.periods
                .push(positions.windows(2).map(|w| (w[1] - w[0]) / sr).collect());
        }
        if !amps.is_empty() {
            out.amplitudes.push(amps);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::testsig::*;
    use super::super::{pitch_track, PitchConfig};
    use super::*;

    #[test]
    fn jitter_examples() {
        assert_eq!(jitter_local(&[0.005; 10]).unwrap(), 0.0);
        let alt: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 100.0 } else { 110.0 }).collect();
        assert!((jitter_local(&alt).unwrap() - 10.0 / 105.0).abs() < 1e-12);
        assert!(jitter_local(&[0.005]).is_err());
    }

    #[test]
    fn shimmer_examples() {
        assert_eq!(shimmer_local(&[0.7; 8]).unwrap(), 0.0);
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.8 } else { 1.0 }).collect();
        assert!((shimmer_local(&alt).unwrap() - 0.2 / 0.9).abs() < 1e-12);
        assert!(shimmer_local(&[1.0]).is_err());
    }

    #[test]
    fn perturbation_is_scale_free() {
        let ps: Vec<f64> = (0..30).map(|i| 0.004 + 0.0003 * ((i * 7) % 5) as f64).collect();
        let scaled: Vec<f64> = ps.iter().map(|p| p * 17.0).collect();
        assert!((jitter_local(&ps).unwrap() - jitter_local(&scaled).unwrap()).abs() < 1e-12);
        assert!((shimmer_local(&ps).unwrap() - shimmer_local(&scaled).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn pooled_regions_skip_cross_region_pairs() {
        let regions = vec![vec![1.0, 1.0], vec![3.0, 3.0]];
        assert_eq!(jitter_regions(&regions), Some(0.0));
        assert_eq!(jitter_regions(&[vec![1.0]]), None);
    }

    #[test]
    fn sine_periods_are_regular() {
        let sig = sine(200.0, 0.5, 16000, 0.5);
        let track = pitch_track(&sig, &PitchConfig::default()).unwrap();
        let set = extract_periods(&sig, &track);
        let periods: Vec<f64> = set.periods.concat();
        assert!(periods.len() > 80, "{}", periods.len());
        for p in &periods {
            assert!((p - 0.005).abs() < 1e-6, "{p}");
        }
        let amps = set.amplitudes.concat();
        assert!(amps.iter().all(|a| (a - 0.5).abs() < 1e-3));
    }

    #[test]
    fn alternating_periods_give_expected_jitter() {
        // Sine cycles alternating between 80 and 88 samples. Peaks sit a quarter
        // cycle in, so peak-to-peak intervals alternate 3/4·80 + 1/4·88 = 82 and
        // 3/4·88 + 1/4·80 = 86: |ΔT| = 4 around a mean of 84.
        let mut xs = Vec::new();
        for k in 0..120 {
            let len = if k % 2 == 0 { 80 } else { 88 };
            for n in 0..len {
                xs.push(0.5 * (std::f64::consts::PI * 2.0 * n as f64 / len as f64).sin());
            }
        }
        let sig = AudioSignal::new(xs, 16000).unwrap();
        let track = pitch_track(&sig, &PitchConfig::default()).unwrap();
        let set = extract_periods(&sig, &track);
        let j = jitter_regions(&set.periods).unwrap();
        let expected = 4.0 / 84.0;
        assert!((j - expected).abs() < 0.002, "{j} vs {expected}");
    }
}
