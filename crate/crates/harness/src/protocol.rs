//! Adapter wire format: one JSON object per line in each direction.
//!
//! ```text
//! → {"id":"r1","op":"synthesize","text":"hello","out":"synth/r1.wav"}
//! ← {"id":"r1","status":"ok","payload":{"audio":"synth/r1.wav"}}
//! ```
//!
//! Every session opens with `{"id":..,"op":"hello"}`, answered with an
//! [`AdapterInfo`] payload. Errors come back as `status: "error"` with
//! `payload: {"message": ..}`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use ser_probe_core::{EmotionTriple, ModelVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Hello,
    Transcribe,
    Synthesize,
    Predict,
    Embed,
}

impl Op {
    pub fn as_str(self) -> &'static str {
        match self {
            Op::Hello => "hello",
            Op::Transcribe => "transcribe",
            Op::Synthesize => "synthesize",
            Op::Predict => "predict",
            Op::Embed => "embed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub id: String,
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl Request {
    pub fn new(id: impl Into<String>, op: Op) -> Self {
        Request {
            id: id.into(),
            op,
            audio: None,
            text: None,
            out: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn hello() -> Self {
        Request::new("hello", Op::Hello)
    }

    pub fn with_audio(mut self, p: impl Into<PathBuf>) -> Self {
        self.audio = Some(p.into());
        self
    }

    pub fn with_text(mut self, t: impl Into<String>) -> Self {
        self.text = Some(t.into());
        self
    }

    pub fn with_out(mut self, p: impl Into<PathBuf>) -> Self {
        self.out = Some(p.into());
        self
    }

    pub fn with_meta(mut self, k: &str, v: impl Into<String>) -> Self {
        self.meta.insert(k.to_string(), v.into());
        self
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("requests always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Response {
    pub id: String,
    pub status: Status,
    #[serde(default)]
    pub payload: Value,
}

impl Response {
    pub fn ok(id: &str, payload: Value) -> Self {
        Response {
            id: id.to_string(),
            status: Status::Ok,
            payload,
        }
    }

    pub fn error(id: &str, message: impl Into<String>) -> Self {
        Response {
            id: id.to_string(),
            status: Status::Error,
            payload: serde_json::json!({ "message": message.into() }),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("responses always serialize")
    }

    pub fn error_message(&self) -> Option<&str> {
        match self.status {
            Status::Ok => None,
            Status::Error => Some(self.payload.get("message").and_then(Value::as_str).unwrap_or("unspecified error")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    Asr,
    Tts,
    SerPredict,
    SerEmbed,
}

impl EndpointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EndpointKind::Asr => "asr",
            EndpointKind::Tts => "tts",
            EndpointKind::SerPredict => "ser_predict",
            EndpointKind::SerEmbed => "ser_embed",
        }
    }

    pub fn op(self) -> Op {
        match self {
            EndpointKind::Asr => Op::Transcribe,
            EndpointKind::Tts => Op::Synthesize,
            EndpointKind::SerPredict => Op::Predict,
            EndpointKind::SerEmbed => Op::Embed,
        }
    }
}

/// Hello payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterInfo {
    pub kind: EndpointKind,
    pub model: String,
    pub version: String,
    pub capabilities: Vec<Op>,
    pub deterministic: bool,
    /// Requests the adapter accepts before answering; 1 if absent.
    #[serde(default = "one")]
    pub max_inflight: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<ModelVariant>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscribePayload {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesizePayload {
    pub audio: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictPayload {
    pub arousal: f64,
    pub valence: f64,
    pub dominance: f64,
}

impl PredictPayload {
    pub fn triple(&self) -> ser_probe_core::Result<EmotionTriple> {
        EmotionTriple::new(self.arousal, self.valence, self.dominance)
    }
}

/// Embedding responses point at a single-utterance archive directory in the
/// probe archive format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedPayload {
    pub archive: PathBuf,
    pub n_layers: usize,
    pub dim: usize,
}
