//! Line-protocol front end for the mock adapters: one JSON request per stdin
//! line, one JSON response per stdout line, exit on end of input. Backs the
//! `ser-probe-mock-adapter` binary and `ser-probe mock-adapter`.

use std::ffi::OsString;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use ser_probe_core::manifest::load_manifest;
use ser_probe_core::ModelVariant;
use crate::mock::{MockAdapter, MockBehavior, SerMode, TtsMode};
use crate::protocol::{Request, Response};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Asr,
    Tts,
    SerPredict,
    SerEmbed,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    /// tts: half a second of silence
    Silence,
    /// tts: copy meta.source_audio
    Copy,
    /// ser: labels from --manifest
    Truth,
    /// ser: every dimension = --constant
    Constant,
    /// ser: valence keyed on meta.polarity
    Polarity,
}

#[derive(Debug, Parser)]
#[command(name = "ser-probe-mock-adapter", about = "Deterministic mock adapter speaking the ser-probe line protocol")]
struct Args {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Manifest supplying transcripts (asr) or labels (ser truth).
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    max_inflight: usize,
    #[arg(long)]
    variant: Option<ModelVariant>,
    #[arg(long, default_value_t = 0.5)]
    constant: f64,
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 4)]
    n_layers: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Answer requests for this utterance id with an error.
    #[arg(long)]
    fail_id: Vec<String>,
    /// Exit with status 3, without answering, on a request with this id.
    #[arg(long)]
    die_on: Option<String>,
}

fn build(args: &Args) -> Result<MockAdapter, String> {
    let utts = || -> Result<_, String> {
        let path = args.manifest.as_ref().ok_or("this mode needs --manifest")?;
        load_manifest(path).map_err(|e| e.to_string())
    };
    let behavior = match (args.kind, args.mode) {
        (Kind::Asr, _) => return Ok(configure(MockAdapter::asr_from(&utts()?), args)),
        (Kind::Tts, None | Some(Mode::Silence)) => MockBehavior::Tts(TtsMode::Silence),
        (Kind::Tts, Some(Mode::Copy)) => MockBehavior::Tts(TtsMode::CopySource),
        (Kind::SerPredict, Some(Mode::Truth)) => return Ok(configure(MockAdapter::ser_truth(&utts()?), args)),
        (Kind::SerPredict, None | Some(Mode::Constant)) => MockBehavior::Ser(SerMode::Constant(args.constant)),
        (Kind::SerPredict, Some(Mode::Polarity)) => MockBehavior::Ser(SerMode::Polarity { jitter: args.jitter }),
        (Kind::SerEmbed, _) => MockBehavior::Embed {
            n_layers: args.n_layers,
            dim: args.dim,
        },
        (k, Some(m)) => return Err(format!("mode {m:?} does not apply to {k:?}")),
    };
    Ok(configure(MockAdapter::new(behavior), args))
}

fn configure(mut m: MockAdapter, args: &Args) -> MockAdapter {
    m = m.with_seed(args.seed).with_max_inflight(args.max_inflight.max(1)).failing(args.fail_id.clone());
    if let Some(v) = args.variant {
        m = m.with_variant(v);
    }
    m
}

/// Parses `args` (program name first) and serves stdin until it closes.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let adapter = match build(&args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("ser-probe-mock-adapter: {e}");
            return ExitCode::from(2);
        }
    };
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Request>(&line) {
            Ok(req) => {
                if args.die_on.as_deref() == Some(req.id.as_str()) {
                    log::error!("dying on request {}", req.id);
                    return ExitCode::from(3);
                }
                adapter.handle(&req)
            }
            Err(e) => Response::error("", format!("malformed request: {e}")),
        };
        if writeln!(out, "{}", resp.to_line()).and_then(|_| out.flush()).is_err() {
            break;
        }
    }
    ExitCode::SUCCESS
}
