//! The three probing pipelines plus embedding collection and the negation
//! error analysis.
//!
//! Every pipeline follows the same shape: fan requests out to the adapters,
//! flag utterances whose requests fail, abort if more than the failure
//! budget is flagged, then reduce the persisted results deterministically.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use ser_probe_core::{EmotionTriple, ModelVariant, RunConfig};

use crate::error::{HarnessError, Result};
use crate::protocol::{PredictPayload, Response};
use crate::transport::Endpoint;

mod embeddings;
mod negations;
mod probing1;
mod probing2;
mod probing3;

pub use embeddings::{collect_embeddings, EmbeddingCollection};
pub use negations::{negation_error_analysis, NEGATION_COLUMN, DimensionPcc, NegationAnalysis};
pub use probing1::{predictions_file, run_probing1, CccCell, Condition, Probing1Report};
pub(crate) use probing2::{comparisons_tsv, groups_tsv};
pub use probing2::{comparison_plan, run_probing2, CasePrediction, Comparison, ComparisonStatus, Family, GroupKey, GroupSummary, Probing2Report};
pub use probing3::{align_features, run_probing3, Probing3Report, RatioArtifact};

/// Fraction of utterances (in percent) that may fail before a run aborts.
pub const DEFAULT_FAILURE_BUDGET_PCT: f64 = 5.0;

/// An SER endpoint and the model variant behind it.
pub struct SerModel {
    pub variant: ModelVariant,
    pub endpoint: Endpoint,
}

/// Text rewrite applied between ASR output and TTS input.
#[derive(Clone)]
pub struct Normalizer {
    pub name: String,
    apply: Arc<dyn Fn(&str) -> String + Send + Sync>,
}

impl Normalizer {
    pub fn verbatim() -> Self {
        Normalizer::custom("verbatim", str::to_string)
    }

    /// Lower-cases and collapses whitespace.
    pub fn lowercase() -> Self {
        Normalizer::custom("lowercase", |s| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
    }

    pub fn custom(name: &str, f: impl Fn(&str) -> String + Send + Sync + 'static) -> Self {
        Normalizer {
            name: name.to_string(),
            apply: Arc::new(f),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "verbatim" => Ok(Normalizer::verbatim()),
            "lowercase" => Ok(Normalizer::lowercase()),
            other => Err(HarnessError::Invalid(format!("unknown text normalization {other:?}"))),
        }
    }

    pub fn apply(&self, s: &str) -> String {
        (self.apply)(s)
    }
}

impl fmt::Debug for Normalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Normalizer({})", self.name)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub run: RunConfig,
    pub failure_budget_pct: f64,
    pub normalizer: Normalizer,
    /// Probing 2: pair negation / intensifier / reducer comparisons on the
    /// source word instead of running Welch tests.
    pub paired: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            run: RunConfig::default(),
            failure_budget_pct: DEFAULT_FAILURE_BUDGET_PCT,
            normalizer: Normalizer::verbatim(),
            paired: false,
        }
    }
}

/// An utterance excluded from scoring, with the first failure it hit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flag {
    pub id: String,
    pub stage: String,
    pub message: String,
}

/// First failure per utterance id.
#[derive(Debug, Default)]
pub(crate) struct Flags(BTreeMap<String, Flag>);

impl Flags {
    pub fn add(&mut self, id: &str, stage: &str, err: &HarnessError) {
        self.0.entry(id.to_string()).or_insert_with(|| {
            log::warn!("{stage}: flagging {id}: {err}");
            Flag {
                id: id.to_string(),
                stage: stage.to_string(),
                message: err.to_string(),
            }
        });
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Flags in the order of `ids`.
    pub fn ordered(&self, ids: &[String]) -> Vec<Flag> {
        ids.iter().filter_map(|i| self.0.get(i).cloned()).collect()
    }

    pub fn over_budget(&self, total: usize, budget_pct: f64) -> bool {
        total > 0 && 100.0 * self.len() as f64 / total as f64 > budget_pct
    }
}

pub(crate) fn flagged_tsv(flags: &[Flag]) -> String {
    let mut s = String::from("id\tstage\tmessage\n");
    for f in flags {
        s.push_str(&format!("{}\t{}\t{}\n", f.id, f.stage, clean_cell(&f.message)));
    }
    s
}

pub(crate) fn clean_cell(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

pub(crate) fn parse_prediction(ep: &Endpoint, resp: &Response) -> Result<EmotionTriple> {
    let p: PredictPayload = serde_json::from_value(resp.payload.clone()).map_err(|e| HarnessError::Protocol {
        endpoint: ep.name.clone(),
        message: format!("predict payload for {}: {e}", resp.id),
    })?;
    Ok(p.triple()?)
}

pub(crate) fn budget_error(flags: &Flags, total: usize, budget_pct: f64) -> HarnessError {
    HarnessError::FailureBudget {
        failed: flags.len(),
        total,
        budget_pct,
    }
}
