use std::path::Path;

use ndarray::{concatenate, Array2, Axis};

use ser_probe_core::probe::LayerEmbeddingArchive;
use ser_probe_core::{ModelVariant, Utterance};

use super::{budget_error, Flag, Flags};
use crate::error::{HarnessError, Result};
use crate::mock::META_UTTERANCE;
use crate::protocol::{EmbedPayload, Op, Request};
use crate::transport::Endpoint;

#[derive(Debug)]
pub struct EmbeddingCollection {
    pub archive: LayerEmbeddingArchive,
    pub flagged: Vec<Flag>,
}

/// Asks the embedding endpoint for one archive per utterance (written under
/// `scratch/<id>`) and stacks them, in input order, into one archive.
pub fn collect_embeddings(
    ep: &Endpoint,
    utterances: &[Utterance],
    variant: ModelVariant,
    scratch: &Path,
    parallelism: usize,
    failure_budget_pct: f64,
) -> Result<EmbeddingCollection> {
    let reqs: Vec<Request> = utterances
        .iter()
        .map(|u| {
            Request::new(format!("embed/{variant}/{}", u.id), Op::Embed)
                .with_audio(&u.audio_path)
                .with_out(scratch.join(&u.id))
                .with_meta(META_UTTERANCE, &u.id)
        })
        .collect();
    let ids: Vec<String> = utterances.iter().map(|u| u.id.clone()).collect();
    let mut flags = Flags::default();
    let mut parts: Vec<(String, LayerEmbeddingArchive)> = Vec::new();
    for (u, r) in utterances.iter().zip(ep.call_all(&reqs, parallelism)) {
        let got = r.and_then(|r| {
            let p: EmbedPayload = serde_json::from_value(r.payload).map_err(|e| HarnessError::Protocol {
                endpoint: ep.name.clone(),
                message: format!("embed payload for {}: {e}", u.id),
            })?;
            let a = LayerEmbeddingArchive::load(&p.archive)?;
            if a.ids().len() != 1 || a.n_layers() != p.n_layers || a.dim() != p.dim {
                return Err(HarnessError::Protocol {
                    endpoint: ep.name.clone(),
                    message: format!("archive for {} does not hold one {}x{} row", u.id, p.n_layers, p.dim),
                });
            }
            Ok(a)
        });
        match got {
            Ok(a) => parts.push((u.id.clone(), a)),
            Err(e) => flags.add(&u.id, "embed", &e),
        }
    }
    if flags.over_budget(utterances.len(), failure_budget_pct) || parts.is_empty() {
        return Err(budget_error(&flags, utterances.len(), failure_budget_pct));
    }
    let (n_layers, dim) = (parts[0].1.n_layers(), parts[0].1.dim());
    if let Some((id, _)) = parts.iter().find(|(_, a)| a.n_layers() != n_layers || a.dim() != dim) {
        return Err(HarnessError::Protocol {
            endpoint: ep.name.clone(),
            message: format!("archive for {id} differs in shape from the first ({n_layers} layers x {dim})"),
        });
    }
    let layers = (0..n_layers)
        .map(|l| {
            let views = parts
                .iter()
                .map(|(_, a)| a.layer(l))
                .collect::<ser_probe_core::Result<Vec<_>>>()?;
            Ok(concatenate(Axis(0), &views).expect("shapes checked above"))
        })
        .collect::<Result<Vec<Array2<f32>>>>()?;
    let kept = parts.into_iter().map(|(id, _)| id).collect();
    Ok(EmbeddingCollection {
        archive: LayerEmbeddingArchive::new(variant, kept, layers)?,
        flagged: flags.ordered(&ids),
    })
}
