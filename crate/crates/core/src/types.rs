//! Domain types shared by every pipeline stage.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// Emotional dimensions in the order they're reported everywhere: A, V, D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Arousal,
    Valence,
    Dominance,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Arousal, Dimension::Valence, Dimension::Dominance];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Arousal => "arousal",
            Dimension::Valence => "valence",
            Dimension::Dominance => "dominance",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Arousal, valence and dominance, each in the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmotionTriple {
    pub arousal: f64,
    pub valence: f64,
    pub dominance: f64,
}

impl EmotionTriple {
    pub fn new(arousal: f64, valence: f64, dominance: f64) -> Result<Self> {
        let triple = EmotionTriple {
            arousal,
            valence,
            dominance,
        };
        triple.validate()?;
        Ok(triple)
    }

    pub fn validate(&self) -> Result<()> {
        for dim in Dimension::ALL {
            let v = self.get(dim);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{dim} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn get(&self, dim: Dimension) -> f64 {
        match dim {
            Dimension::Arousal => self.arousal,
            Dimension::Valence => self.valence,
            Dimension::Dominance => self.dominance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub audio_path: PathBuf,
    pub text: Option<String>,
    pub split: Split,
    pub labels: Option<EmotionTriple>,
    /// Extra string fields carried through the manifest untouched
    /// (suite cases keep their category and polarity here).
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Utterance {
    /// Labels, or a validation error naming the utterance. Stages that need
    /// ground truth call this instead of silently skipping.
    pub fn require_labels(&self) -> Result<EmotionTriple> {
        self.labels
            .ok_or_else(|| Error::validation(format!("utterance {} has no labels", self.id)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    Finetuned,
    Frozen,
    Mock,
}

impl ModelVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::Finetuned => "finetuned",
            ModelVariant::Frozen => "frozen",
            ModelVariant::Mock => "mock",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finetuned" | "ft" => Ok(ModelVariant::Finetuned),
            "frozen" | "frz" => Ok(ModelVariant::Frozen),
            "mock" => Ok(ModelVariant::Mock),
            other => Err(Error::validation(format!("unknown model variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub utterance_id: String,
    pub model_variant: ModelVariant,
    pub prediction: EmotionTriple,
}

/// Seeds, resampling counts and significance settings shared by all stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub bootstrap_resamples: usize,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub alpha: f64,
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            bootstrap_resamples: 1000,
            ci_lo: 5.0,
            ci_hi: 95.0,
            alpha: 0.05,
            parallelism: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bootstrap_resamples == 0 {
            return Err(Error::validation("bootstrap_resamples must be positive"));
        }
        if !(0.0 <= self.ci_lo && self.ci_lo < self.ci_hi && self.ci_hi <= 100.0) {
            return Err(Error::validation(format!(
                "CI percentiles must satisfy 0 <= lo < hi <= 100, got [{}, {}]",
                self.ci_lo, self.ci_hi
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::validation(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if self.parallelism == 0 {
            return Err(Error::validation("parallelism must be positive"));
        }
        Ok(())
    }
}
