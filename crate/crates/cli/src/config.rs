//! `--config` file: run settings, probe and feature settings, and the
//! adapter table.
//!
//! ```toml
//! text_normalization = "lowercase"
//!
//! [run]
//! seed = 7
//! bootstrap_resamples = 1000
//!
//! [adapters.asr]
//! kind = "asr"
//! command = ["python", "-m", "ser_adapters.asr"]
//! max_inflight = 4
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ser_probe_core::acoustics::AcousticConfig;
use ser_probe_core::lingfeats::ConjunctionMode;
use ser_probe_core::probe::ProbeConfig;
use ser_probe_core::{ModelVariant, RunConfig};
use ser_probe_harness::pipeline::{Normalizer, PipelineOptions, DEFAULT_FAILURE_BUDGET_PCT};
use ser_probe_harness::protocol::EndpointKind;
use ser_probe_harness::transport::{AdapterEndpoint, Endpoint};

pub const ASR: &str = "asr";
pub const TTS: &str = "tts";

/// Config table name of the prediction endpoint for a variant.
pub fn ser_adapter(v: ModelVariant) -> String {
    format!("ser_{v}")
}

pub fn embed_adapter(v: ModelVariant) -> String {
    format!("embed_{v}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub failure_budget_pct: f64,
    /// `verbatim` or `lowercase`; applied between ASR and TTS.
    pub text_normalization: String,
    /// Pair probing-2 comparisons on the source word instead of Welch.
    pub paired: bool,
    pub conjunctions: ConjunctionMode,
    pub run: RunConfig,
    /// `seed` here is ignored: probes are seeded from `run.seed`.
    pub probe: ProbeConfig,
    pub acoustic: AcousticConfig,
    pub adapters: BTreeMap<String, AdapterEndpoint>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            failure_budget_pct: DEFAULT_FAILURE_BUDGET_PCT,
            text_normalization: "verbatim".into(),
            paired: false,
            conjunctions: ConjunctionMode::default(),
            run: RunConfig::default(),
            probe: ProbeConfig::default(),
            acoustic: AcousticConfig::default(),
            adapters: BTreeMap::new(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path`; relative adapter `cwd`s are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Config::parse(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for ep in cfg.adapters.values_mut() {
            if let Some(cwd) = &ep.launch.cwd {
                if cwd.is_relative() {
                    ep.launch.cwd = Some(base.join(cwd));
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.failure_budget_pct) {
            bail!("failure_budget_pct must be within [0, 100]");
        }
        if self.run.parallelism == 0 {
            bail!("run.parallelism must be positive");
        }
        if self.run.bootstrap_resamples == 0 {
            bail!("run.bootstrap_resamples must be positive");
        }
        if !(0.0 <= self.run.ci_lo && self.run.ci_lo < self.run.ci_hi && self.run.ci_hi <= 100.0) {
            bail!("run.ci_lo / run.ci_hi must satisfy 0 <= lo < hi <= 100");
        }
        Normalizer::by_name(&self.text_normalization)?;
        self.probe.validate()?;
        for (name, ep) in &self.adapters {
            ep.validate().with_context(|| format!("adapters.{name}"))?;
        }
        Ok(())
    }

    /// Command-line `--seed` / `--parallelism` win over the file.
    pub fn with_overrides(mut self, seed: Option<u64>, parallelism: Option<usize>) -> Result<Self> {
        if let Some(s) = seed {
            self.run.seed = s;
        }
        if let Some(p) = parallelism {
            self.run.parallelism = p;
        }
        self.probe.seed = self.run.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn pipeline_options(&self) -> Result<PipelineOptions> {
        Ok(PipelineOptions {
            run: self.run.clone(),
            failure_budget_pct: self.failure_budget_pct,
            normalizer: Normalizer::by_name(&self.text_normalization)?,
            paired: self.paired,
        })
    }

    pub fn has_adapter(&self, name: &str) -> bool {
        self.adapters.contains_key(name)
    }

    /// Launches the adapter under `[adapters.<name>]` and checks its kind.
    pub fn connect(&self, name: &str, kind: EndpointKind) -> Result<Endpoint> {
        let ep = self
            .adapters
            .get(name)
            .with_context(|| format!("no [adapters.{name}] table in the config"))?;
        if ep.kind != kind {
            bail!("adapters.{name} has kind {}, expected {}", ep.kind.as_str(), kind.as_str());
        }
        Ok(ep.connect(name).with_context(|| format!("starting adapter {name}"))?)
    }
}
