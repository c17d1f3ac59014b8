//! Deterministic stand-ins for the ASR, TTS, SER and embedding models. The
//! same logic backs the in-process transport and the
//! `ser-probe-mock-adapter` binary; responses are pure functions of the
//! request and the seed (plus the files a request points at).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use ser_probe_core::acoustics::{read_wav, write_wav, AudioSignal};
use ser_probe_core::probe::LayerEmbeddingArchive;
use ser_probe_core::seed::{stream_rng, unit_hash};
use ser_probe_core::{EmotionTriple, ModelVariant, Utterance};

use crate::protocol::{AdapterInfo, EmbedPayload, EndpointKind, Op, Request, Response};

pub const MOCK_VERSION: &str = "mock-1";
pub const SILENCE_SECS: f64 = 0.5;
pub const SILENCE_RATE: u32 = 16_000;

/// Meta key carrying the utterance (or test case) id on every request.
pub const META_UTTERANCE: &str = "utterance_id";
/// Meta key pointing at the original recording on synthesis requests.
pub const META_SOURCE_AUDIO: &str = "source_audio";

#[derive(Debug, Clone, PartialEq)]
pub enum TtsMode {
    /// 0.5 s of silence at 16 kHz.
    Silence,
    /// Copies `meta.source_audio` to the output path.
    CopySource,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SerMode {
    /// Returns the labels of `meta.utterance_id`.
    Truth(BTreeMap<String, EmotionTriple>),
    Constant(f64),
    /// Valence 0.2 / 0.5 / 0.8 for `meta.polarity` negative / neutral /
    /// positive (flipped for `meta.category = negation`), plus a per-id
    /// deterministic offset in ±`jitter`. Arousal and dominance are 0.5.
    Polarity { jitter: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockBehavior {
    /// Transcript per utterance id; unknown ids transcribe to "".
    Asr(BTreeMap<String, String>),
    Tts(TtsMode),
    Ser(SerMode),
    Embed { n_layers: usize, dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockAdapter {
    pub behavior: MockBehavior,
    pub seed: u64,
    pub max_inflight: usize,
    pub variant: Option<ModelVariant>,
    /// Utterance ids answered with an error, for exercising failure paths.
    pub fail_ids: BTreeSet<String>,
}

impl MockAdapter {
    pub fn new(behavior: MockBehavior) -> Self {
        MockAdapter {
            behavior,
            seed: 0,
            max_inflight: 1,
            variant: None,
            fail_ids: BTreeSet::new(),
        }
    }

    pub fn asr_from(utterances: &[Utterance]) -> Self {
        let map = utterances
            .iter()
            .filter_map(|u| u.text.clone().map(|t| (u.id.clone(), t)))
            .collect();
        MockAdapter::new(MockBehavior::Asr(map))
    }

    pub fn ser_truth(utterances: &[Utterance]) -> Self {
        let map = utterances
            .iter()
            .filter_map(|u| u.labels.map(|l| (u.id.clone(), l)))
            .collect();
        MockAdapter::new(MockBehavior::Ser(SerMode::Truth(map)))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_inflight(mut self, n: usize) -> Self {
        self.max_inflight = n.max(1);
        self
    }

    pub fn with_variant(mut self, v: ModelVariant) -> Self {
        self.variant = Some(v);
        self
    }

    pub fn failing(mut self, ids: impl IntoIterator<Item = String>) -> Self {
        self.fail_ids.extend(ids);
        self
    }

    pub fn kind(&self) -> EndpointKind {
        match self.behavior {
            MockBehavior::Asr(_) => EndpointKind::Asr,
            MockBehavior::Tts(_) => EndpointKind::Tts,
            MockBehavior::Ser(_) => EndpointKind::SerPredict,
            MockBehavior::Embed { .. } => EndpointKind::SerEmbed,
        }
    }

    pub fn info(&self) -> AdapterInfo {
        let kind = self.kind();
        let mode = match &self.behavior {
            MockBehavior::Asr(_) => "lookup",
            MockBehavior::Tts(TtsMode::Silence) => "silence",
            MockBehavior::Tts(TtsMode::CopySource) => "copy",
            MockBehavior::Ser(SerMode::Truth(_)) => "truth",
            MockBehavior::Ser(SerMode::Constant(_)) => "constant",
            MockBehavior::Ser(SerMode::Polarity { .. }) => "polarity",
            MockBehavior::Embed { .. } => "seeded",
        };
        AdapterInfo {
            kind,
            model: format!("mock-{}-{mode}", kind.as_str()),
            version: MOCK_VERSION.to_string(),
            capabilities: vec![Op::Hello, kind.op()],
            deterministic: true,
            max_inflight: self.max_inflight,
            variant: self.variant,
        }
    }

    pub fn handle(&self, req: &Request) -> Response {
        match self.try_handle(req) {
            Ok(r) => r,
            Err(msg) => Response::error(&req.id, msg),
        }
    }

    fn try_handle(&self, req: &Request) -> Result<Response, String> {
        if req.op == Op::Hello {
            return Ok(Response::ok(&req.id, serde_json::to_value(self.info()).expect("info serializes")));
        }
        if req.op != self.kind().op() {
            return Err(format!("unsupported op {}", req.op.as_str()));
        }
        let uid = utterance_id(req);
        if self.fail_ids.contains(&uid) {
            return Err(format!("injected failure for {uid}"));
        }
        match &self.behavior {
            MockBehavior::Asr(map) => {
                need_audio(req)?;
                Ok(Response::ok(
                    &req.id,
                    json!({ "text": map.get(&uid).cloned().unwrap_or_default() }),
                ))
            }
            MockBehavior::Tts(mode) => {
                req.text.as_deref().ok_or("synthesize needs `text`")?;
                let out = req.out.as_deref().ok_or("synthesize needs `out`")?;
                ensure_parent(out)?;
                match mode {
                    TtsMode::Silence => {
                        let n = (SILENCE_SECS * f64::from(SILENCE_RATE)) as usize;
                        let sig = AudioSignal::new(vec![0.0; n], SILENCE_RATE).map_err(|e| e.to_string())?;
                        write_wav(out, &sig).map_err(|e| e.to_string())?;
                    }
                    TtsMode::CopySource => {
                        let src = req
                            .meta
                            .get(META_SOURCE_AUDIO)
                            .ok_or("copy mode needs meta.source_audio")?;
                        fs::copy(src, out).map_err(|e| format!("{src}: {e}"))?;
                    }
                }
                Ok(Response::ok(&req.id, json!({ "audio": out })))
            }
            MockBehavior::Ser(mode) => {
                need_audio(req)?;
                let t = match mode {
                    SerMode::Truth(labels) => *labels.get(&uid).ok_or_else(|| format!("no label for {uid}"))?,
                    SerMode::Constant(c) => EmotionTriple::new(*c, *c, *c).map_err(|e| e.to_string())?,
                    SerMode::Polarity { jitter } => {
                        let v = polarity_valence(req)? + jitter * (2.0 * unit_hash(self.seed, &format!("jitter/{uid}")) - 1.0);
                        EmotionTriple::new(0.5, v.clamp(0.0, 1.0), 0.5).map_err(|e| e.to_string())?
                    }
                };
                Ok(Response::ok(
                    &req.id,
                    json!({ "arousal": t.arousal, "valence": t.valence, "dominance": t.dominance }),
                ))
            }
            MockBehavior::Embed { n_layers, dim } => {
                need_audio(req)?;
                let out = req.out.as_deref().ok_or("embed needs `out`")?;
                let layers = (0..*n_layers)
                    .map(|l| {
                        let mut rng = stream_rng(self.seed, &format!("embed/{uid}"), l as u64);
                        Array2::from_shape_fn((1, *dim), |_| rng.sample::<f32, _>(StandardNormal))
                    })
                    .collect();
                let archive = LayerEmbeddingArchive::new(self.variant.unwrap_or(ModelVariant::Mock), vec![uid], layers)
                    .map_err(|e| e.to_string())?;
                archive.save(out).map_err(|e| e.to_string())?;
                let payload = EmbedPayload {
                    archive: out.to_path_buf(),
                    n_layers: *n_layers,
                    dim: *dim,
                };
                Ok(Response::ok(&req.id, serde_json::to_value(payload).expect("payload serializes")))
            }
        }
    }
}

fn utterance_id(req: &Request) -> String {
    req.meta.get(META_UTTERANCE).cloned().unwrap_or_else(|| {
        req.audio
            .as_deref()
            .and_then(Path::file_stem)
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| req.id.clone())
    })
}

fn need_audio(req: &Request) -> Result<&Path, String> {
    let a = req
        .audio
        .as_deref()
        .ok_or_else(|| format!("{} needs `audio`", req.op.as_str()))?;
    if !a.is_file() {
        return Err(format!("cannot read audio {}", a.display()));
    }
    // decode so corrupt files fail here rather than downstream
    read_wav(a).map_err(|e| e.to_string())?;
    Ok(a)
}

fn ensure_parent(p: &Path) -> Result<(), String> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => fs::create_dir_all(d).map_err(|e| format!("{}: {e}", d.display())),
        _ => Ok(()),
    }
}

fn polarity_valence(req: &Request) -> Result<f64, String> {
    let pol = req.meta.get("polarity").ok_or("polarity mode needs meta.polarity")?;
    let negated = req.meta.get("category").is_some_and(|c| c == "negation");
    let v = match pol.as_str() {
        "negative" => 0.2,
        "neutral" => 0.5,
        "positive" => 0.8,
        other => return Err(format!("unknown polarity {other:?}")),
    };
    Ok(if negated { 1.0 - v } else { v })
}
