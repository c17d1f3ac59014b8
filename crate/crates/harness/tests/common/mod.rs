#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use ser_probe_core::acoustics::{write_wav, AudioSignal};
use ser_probe_core::seed::stream_rng;
use ser_probe_core::{EmotionTriple, Split, Utterance};

pub const MOCK_BIN: &str = env!("CARGO_BIN_EXE_ser-probe-mock-adapter");

pub fn tone(path: &Path, freq: f64, secs: f64) {
    let sr = 16_000;
    let n = (secs * sr as f64) as usize;
    let s: Vec<f64> = (0..n).map(|i| 0.3 * (2.0 * PI * freq * i as f64 / sr as f64).sin()).collect();
    write_wav(path, &AudioSignal::new(s, sr).unwrap()).unwrap();
}

/// `n` labelled utterances with short tones under `dir/audio`.
pub fn corpus(dir: &Path, n: usize, seed: u64) -> Vec<Utterance> {
    let audio = dir.join("audio");
    std::fs::create_dir_all(&audio).unwrap();
    let mut rng = stream_rng(seed, "test-corpus", 0);
    (0..n)
        .map(|i| {
            let id = format!("utt{i:03}");
            let path: PathBuf = audio.join(format!("{id}.wav"));
            tone(&path, 120.0 + 5.0 * i as f64, 0.1);
            Utterance {
                id,
                audio_path: path,
                text: Some(format!("this is utterance number {i}")),
                split: Split::Test,
                labels: Some(EmotionTriple::new(rng.gen(), rng.gen(), rng.gen()).unwrap()),
                meta: BTreeMap::new(),
            }
        })
        .collect()
}
