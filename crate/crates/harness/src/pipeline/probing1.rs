use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use ser_probe_core::manifest::manifest_line;
use ser_probe_core::stats::{ccc, PairedSeries};
use ser_probe_core::{Dimension, EmotionTriple, ModelVariant, PredictionRecord, Utterance};

use super::{budget_error, flagged_tsv, parse_prediction, Flag, Flags, PipelineOptions, SerModel};
use crate::error::{HarnessError, Result};
use crate::mock::{META_SOURCE_AUDIO, META_UTTERANCE};
use crate::protocol::{Op, Request, SynthesizePayload, TranscribePayload};
use crate::run::{Counts, ProbeRunRecord, RunDir, RunStatus, STAGE_PROBING1};
use crate::transport::Endpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Original,
    Synthesised,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::Original, Condition::Synthesised];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Original => "original",
            Condition::Synthesised => "synthesised",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CccCell {
    pub condition: Condition,
    pub variant: ModelVariant,
    pub dimension: Dimension,
    pub ccc: f64,
    pub degenerate: bool,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct Probing1Report {
    pub cells: Vec<CccCell>,
    pub counts: Counts,
    pub flagged: Vec<Flag>,
    pub record: ProbeRunRecord,
}

impl Probing1Report {
    pub fn get(&self, c: Condition, v: ModelVariant, d: Dimension) -> Option<&CccCell> {
        self.cells
            .iter()
            .find(|x| x.condition == c && x.variant == v && x.dimension == d)
    }
}

pub fn predictions_file(variant: ModelVariant, condition: Condition) -> String {
    format!("predictions/{}_{}.jsonl", variant.as_str(), condition.as_str())
}

pub(crate) fn ccc_tsv(cells: &[CccCell]) -> String {
    let mut s = String::from("condition\tvariant\tdimension\tn\tccc\tdegenerate\n");
    for c in cells {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            c.condition.as_str(),
            c.variant,
            c.dimension,
            c.n,
            c.ccc,
            c.degenerate
        ));
    }
    s
}

/// Re-synthesis probing: transcribe each recording, synthesise the
/// transcript, and score both versions with every SER variant.
///
/// Utterance audio paths must already be resolved (absolute, or relative to
/// the adapters' working directory). An utterance failing at any step is
/// excluded from every cell so rows stay comparable.
pub fn run_probing1(
    mut run: RunDir,
    utterances: &[Utterance],
    asr: &Endpoint,
    tts: &Endpoint,
    ser: &[SerModel],
    opts: &PipelineOptions,
) -> Result<Probing1Report> {
    if utterances.is_empty() {
        return Err(HarnessError::Invalid("probing 1 needs at least one utterance".into()));
    }
    if ser.is_empty() {
        return Err(HarnessError::Invalid("probing 1 needs at least one SER endpoint".into()));
    }
    let labels: BTreeMap<&str, EmotionTriple> = utterances
        .iter()
        .map(|u| Ok((u.id.as_str(), u.require_labels()?)))
        .collect::<Result<_>>()?;
    let ids: Vec<String> = utterances.iter().map(|u| u.id.clone()).collect();
    let par = opts.run.parallelism;
    let total = utterances.len();
    run.set_stage(STAGE_PROBING1);
    run.add_adapter("asr", asr.info.clone());
    run.add_adapter("tts", tts.info.clone());
    for m in ser {
        run.add_adapter(&format!("ser_{}", m.variant), m.endpoint.info.clone());
    }
    run.set_text_normalization(&opts.normalizer.name);
    let mut manifest = String::new();
    for u in utterances {
        manifest.push_str(&manifest_line(u));
        manifest.push('\n');
    }
    run.write("manifest.jsonl", manifest)?;

    let mut flags = Flags::default();

    let reqs: Vec<Request> = utterances
        .iter()
        .map(|u| {
            Request::new(format!("asr/{}", u.id), Op::Transcribe)
                .with_audio(&u.audio_path)
                .with_meta(META_UTTERANCE, &u.id)
        })
        .collect();
    let asr_out = run.timed("asr", |_| Ok(asr.call_all(&reqs, par)))?;
    let mut transcripts: BTreeMap<String, (String, String)> = BTreeMap::new();
    for (u, r) in utterances.iter().zip(asr_out) {
        let text = r.and_then(|r| {
            serde_json::from_value::<TranscribePayload>(r.payload).map_err(|e| HarnessError::Protocol {
                endpoint: asr.name.clone(),
                message: format!("transcribe payload for {}: {e}", u.id),
            })
        });
        match text {
            Ok(t) => {
                let norm = opts.normalizer.apply(&t.text);
                transcripts.insert(u.id.clone(), (t.text, norm));
            }
            Err(e) => flags.add(&u.id, "asr", &e),
        }
    }

    let live: Vec<&Utterance> = utterances.iter().filter(|u| !flags.contains(&u.id)).collect();
    let reqs: Vec<Request> = live
        .iter()
        .map(|u| {
            Request::new(format!("tts/{}", u.id), Op::Synthesize)
                .with_text(&transcripts[&u.id].1)
                .with_out(run.path(format!("synth/{}.wav", u.id)))
                .with_meta(META_UTTERANCE, &u.id)
                .with_meta(META_SOURCE_AUDIO, u.audio_path.to_string_lossy())
        })
        .collect();
    let tts_out = run.timed("tts", |_| Ok(tts.call_all(&reqs, par)))?;
    let mut synth: BTreeMap<String, PathBuf> = BTreeMap::new();
    for (u, r) in live.iter().zip(tts_out) {
        let audio = r.and_then(|r| {
            serde_json::from_value::<SynthesizePayload>(r.payload).map_err(|e| HarnessError::Protocol {
                endpoint: tts.name.clone(),
                message: format!("synthesize payload for {}: {e}", u.id),
            })
        });
        match audio {
            Ok(p) => {
                synth.insert(u.id.clone(), p.audio);
            }
            Err(e) => flags.add(&u.id, "tts", &e),
        }
    }
    run.register("synth");

    let mut preds: BTreeMap<(ModelVariant, Condition), BTreeMap<String, EmotionTriple>> = BTreeMap::new();
    for m in ser {
        for cond in Condition::ALL {
            let live: Vec<&Utterance> = utterances.iter().filter(|u| !flags.contains(&u.id)).collect();
            let reqs: Vec<Request> = live
                .iter()
                .map(|u| {
                    let audio = match cond {
                        Condition::Original => u.audio_path.clone(),
                        Condition::Synthesised => synth[&u.id].clone(),
                    };
                    Request::new(format!("ser/{}/{}/{}", m.variant, cond.as_str(), u.id), Op::Predict)
                        .with_audio(audio)
                        .with_meta(META_UTTERANCE, &u.id)
                })
                .collect();
            let stage = format!("ser_{}_{}", m.variant, cond.as_str());
            let out = run.timed(&stage, |_| Ok(m.endpoint.call_all(&reqs, par)))?;
            let slot = preds.entry((m.variant, cond)).or_default();
            for (u, r) in live.iter().zip(out) {
                match r.and_then(|r| parse_prediction(&m.endpoint, &r)) {
                    Ok(t) => {
                        slot.insert(u.id.clone(), t);
                    }
                    Err(e) => flags.add(&u.id, &stage, &e),
                }
            }
        }
    }

    let flagged = flags.ordered(&ids);
    run.write("flagged.tsv", flagged_tsv(&flagged))?;
    let scored: Vec<&Utterance> = utterances.iter().filter(|u| !flags.contains(&u.id)).collect();
    let counts = Counts {
        input: total,
        scored: scored.len(),
        flagged: flagged.len(),
    };
    run.set_counts(counts);
    if flags.over_budget(total, opts.failure_budget_pct) {
        run.finish(RunStatus::Aborted)?;
        return Err(budget_error(&flags, total, opts.failure_budget_pct));
    }

    let mut tsv = String::from("id\ttranscript\ttts_text\n");
    for u in &scored {
        let (raw, norm) = &transcripts[&u.id];
        tsv.push_str(&format!("{}\t{}\t{}\n", u.id, super::clean_cell(raw), super::clean_cell(norm)));
    }
    run.write("transcripts.tsv", tsv)?;

    let mut cells = Vec::new();
    for m in ser {
        for cond in Condition::ALL {
            let p = &preds[&(m.variant, cond)];
            let records: Vec<PredictionRecord> = scored
                .iter()
                .map(|u| PredictionRecord {
                    utterance_id: u.id.clone(),
                    model_variant: m.variant,
                    prediction: p[&u.id],
                })
                .collect();
            run.write_jsonl(predictions_file(m.variant, cond), &records)?;
            if records.is_empty() {
                continue;
            }
            for dim in Dimension::ALL {
                let series = PairedSeries::new(
                    scored.iter().map(|u| labels[u.id.as_str()].get(dim)).collect(),
                    records.iter().map(|r| r.prediction.get(dim)).collect(),
                )?;
                let c = ccc(&series);
                cells.push(CccCell {
                    condition: cond,
                    variant: m.variant,
                    dimension: dim,
                    ccc: c.value,
                    degenerate: c.degenerate,
                    n: series.len(),
                });
            }
        }
    }
    cells.sort_by_key(|c| (c.condition, c.variant, c.dimension));
    run.write_json("ccc.json", &cells)?;
    run.write("ccc.tsv", ccc_tsv(&cells))?;
    let record = run.finish(RunStatus::Complete)?;
    Ok(Probing1Report {
        cells,
        counts,
        flagged,
        record,
    })
}
