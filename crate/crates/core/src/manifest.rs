//! Line-delimited JSON manifests.
//!
//! One object per line with the keys `id`, `audio`, `text` (optional),
//! `split`, and optional `arousal` / `valence` / `dominance`. Any other
//! string-valued key is preserved in [`Utterance::meta`]. Blank lines are
//! ignored.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{EmotionTriple, Split, Utterance};

/// How label values in a manifest are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelScale {
    /// Already in [0, 1].
    #[default]
    Unit,
    /// Raw 7-point Likert ratings, normalized at load time.
    Likert,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    audio: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    arousal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    valence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dominance: Option<f64>,
    #[serde(flatten)]
    meta: BTreeMap<String, String>,
}

/// Maps a 1..=7 Likert rating onto [0, 1] via (x - 1) / 6.
pub fn normalize_label(likert: f64) -> Result<f64> {
    if !(1.0..=7.0).contains(&likert) {
        return Err(Error::domain(format!("Likert rating {likert} is outside [1, 7]")));
    }
    Ok((likert - 1.0) / 6.0)
}

fn record_to_utterance(rec: Record, scale: LabelScale, line: usize) -> Result<Utterance> {
    let parse_err = |message: String| Error::Parse { line, message };
    if rec.id.is_empty() {
        return Err(parse_err("empty id".into()));
    }
    if rec.audio.as_os_str().is_empty() {
        return Err(parse_err(format!("utterance {} has an empty audio path", rec.id)));
    }
    let labels = match (rec.arousal, rec.valence, rec.dominance) {
        (None, None, None) => None,
        (Some(a), Some(v), Some(d)) => {
            let (a, v, d) = match scale {
                LabelScale::Unit => (a, v, d),
                LabelScale::Likert => (normalize_label(a)?, normalize_label(v)?, normalize_label(d)?),
            };
            Some(EmotionTriple::new(a, v, d).map_err(|e| parse_err(e.to_string()))?)
        }
        _ => {
            return Err(parse_err(format!(
                "utterance {} has a partial label triple; give all of arousal/valence/dominance or none",
                rec.id
            )))
        }
    };
    Ok(Utterance {
        id: rec.id,
        audio_path: rec.audio,
        text: rec.text,
        split: rec.split,
        labels,
        meta: rec.meta,
    })
}

pub fn parse_manifest<R: BufRead>(reader: R, scale: LabelScale) -> Result<Vec<Utterance>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let utt = record_to_utterance(rec, scale, line_no)?;
        if !seen.insert(utt.id.clone()) {
            return Err(Error::validation(format!(
                "duplicate utterance id {:?} at line {line_no}",
                utt.id
            )));
        }
        out.push(utt);
    }
    Ok(out)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    load_manifest_scaled(path, LabelScale::Unit)
}

pub fn load_manifest_scaled(path: impl AsRef<Path>, scale: LabelScale) -> Result<Vec<Utterance>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(BufReader::new(file), scale)
}

/// Serializes one utterance as a manifest line (no trailing newline).
pub fn manifest_line(utt: &Utterance) -> String {
    let rec = Record {
        id: utt.id.clone(),
        audio: utt.audio_path.clone(),
        text: utt.text.clone(),
        split: utt.split,
        arousal: utt.labels.map(|l| l.arousal),
        valence: utt.labels.map(|l| l.valence),
        dominance: utt.labels.map(|l| l.dominance),
        meta: utt.meta.clone(),
    };
    serde_json::to_string(&rec).expect("manifest records always serialize")
}

pub fn write_manifest_to<W: Write>(mut w: W, utterances: &[Utterance]) -> std::io::Result<()> {
    for utt in utterances {
        writeln!(w, "{}", manifest_line(utt))?;
    }
    w.flush()
}

pub fn write_manifest(path: impl AsRef<Path>, utterances: &[Utterance]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_manifest_to(BufWriter::new(file), utterances).map_err(|e| Error::io(path, e))
}

/// Resolves a manifest audio path against the manifest's directory.
pub fn resolve_audio(manifest_path: &Path, audio: &Path) -> PathBuf {
    if audio.is_absolute() {
        audio.to_path_buf()
    } else {
        manifest_path.parent().unwrap_or_else(|| Path::new("")).join(audio)
    }
}
