use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use ser_probe_cli::config::{embed_adapter, ser_adapter, Config, ASR, TTS};
use ser_probe_core::acoustics;
use ser_probe_core::lingfeats::{self, fallback_annotate, load_annotations, LinguisticFeatures};
use ser_probe_core::manifest::{load_manifest_scaled, resolve_audio, write_manifest, LabelScale};
use ser_probe_core::probe::{train_grid, FeatureTable, LayerEmbeddingArchive, ProbeSplits};
use ser_probe_core::suitegen::{build_sentiment_suite, Category, Lexicon, SuiteOptions, TestSuite};
use ser_probe_core::{ModelVariant, PredictionRecord, Utterance};
use ser_probe_harness::pipeline::{
    collect_embeddings, negation_error_analysis, run_probing1, run_probing2, run_probing3, SerModel,
};
use ser_probe_harness::protocol::EndpointKind;
use ser_probe_harness::report::render_report;
use ser_probe_harness::run::{InputRecord, RunDir};

#[derive(Debug, Parser)]
#[command(name = "ser-probe", version, about = "Probing harness for speech emotion recognition models")]
struct Cli {
    /// Overrides run.seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides run.parallelism from the config.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// TOML run configuration (settings and the adapter table).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ManifestArgs {
    /// Utterance manifest (JSON lines); audio paths resolve against its directory.
    #[arg(long)]
    manifest: PathBuf,
    /// Labels are raw 1–7 ratings; normalize them to [0, 1] on load.
    #[arg(long)]
    likert: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expand a lexicon into the sentiment test suite (manifest lines).
    GenerateSuite {
        /// Lexicon TOML; the built-in airline lexicon when omitted.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "skip-category")]
        skip_category: Vec<Category>,
    },
    /// Acoustic features per utterance, as a feature table.
    ExtractAcoustic {
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Linguistic features from annotations, as a feature table.
    ExtractLinguistic {
        /// Annotation records (JSON lines: id, tokens, pos, parse, deps).
        #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
        annotations: Option<PathBuf>,
        /// Annotate manifest texts with the built-in rule-based annotator instead.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one probe per (layer, feature) on an embedding archive.
    TrainProbes {
        #[arg(long)]
        embeddings: PathBuf,
        /// Feature table(s); several are merged on utterance id.
        #[arg(long, required = true)]
        features: Vec<PathBuf>,
        /// Restrict to these columns (default: all).
        #[arg(long)]
        feature: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Transcribe, re-synthesise and score: CCC original vs synthesised.
    RunProbing1 {
        #[command(flatten)]
        input: ManifestArgs,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a synthesised sentiment suite and test group differences.
    RunProbing2 {
        /// Suite written by generate-suite.
        #[arg(long, conflicts_with = "lexicon")]
        suite: Option<PathBuf>,
        /// Generate the suite from this lexicon instead.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long = "skip-category")]
        skip_category: Vec<Category>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Layer-wise probes on fine-tuned vs frozen embeddings: RMSE ratios.
    RunProbing3 {
        /// Fine-tuned embedding archive.
        #[arg(long, requires = "frz")]
        ft: Option<PathBuf>,
        /// Frozen embedding archive.
        #[arg(long, requires = "ft")]
        frz: Option<PathBuf>,
        /// Collect both archives from the embed adapters for this manifest instead.
        #[arg(long, conflicts_with_all = ["ft", "frz"], required_unless_present = "ft")]
        manifest: Option<PathBuf>,
        #[arg(long, required = true)]
        features: Vec<PathBuf>,
        #[arg(long)]
        feature: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// PCC of negation counts with prediction error and with the labels.
    AnalyzeNegations {
        /// Prediction records (e.g. a probing-1 predictions file).
        #[arg(long)]
        predictions: PathBuf,
        #[command(flatten)]
        input: ManifestArgs,
        /// Feature table(s) providing n_negations.
        #[arg(long, required = true)]
        features: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render summary tables and figures for a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Serve a deterministic mock adapter on stdin/stdout.
    #[command(hide = true)]
    MockAdapter {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<OsString>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Command::MockAdapter { args } = cli.command {
        return ser_probe_harness::mock_cli::run(std::iter::once(OsString::from("ser-probe mock-adapter")).chain(args));
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    }
    .with_overrides(cli.seed, cli.parallelism)?;
    let par = cfg.run.parallelism;
    match cli.command {
        Command::GenerateSuite {
            lexicon,
            out,
            skip_category,
        } => {
            let suite = make_suite(lexicon.as_deref(), &skip_category)?;
            write_manifest(&out, &suite.to_utterances())?;
            println!("{} cases -> {}", suite.cases.len(), out.display());
        }
        Command::ExtractAcoustic { input, out } => {
            let utts = load_utterances(&input)?;
            let paths: Vec<PathBuf> = utts.iter().map(|u| u.audio_path.clone()).collect();
            let results = acoustics::extract_batch(&paths, &cfg.acoustic, par);
            let ids: Vec<String> = utts.iter().map(|u| u.id.clone()).collect();
            let rows = keep_ok(&ids, results, "acoustic")?;
            FeatureTable::from_acoustic(&rows)?.save(&out)?;
            println!("{} rows -> {}", rows.len(), out.display());
        }
        Command::ExtractLinguistic {
            annotations,
            manifest,
            out,
        } => {
            let rows = linguistic_rows(annotations.as_deref(), manifest.as_deref(), &cfg)?;
            FeatureTable::from_linguistic(&rows)?.save(&out)?;
            println!("{} rows -> {}", rows.len(), out.display());
        }
        Command::TrainProbes {
            embeddings,
            features,
            feature,
            out,
        } => train_probes(&cfg, &embeddings, &features, &feature, &out)?,
        Command::RunProbing1 { input, out } => {
            let utts = load_utterances(&input)?;
            let asr = cfg.connect(ASR, EndpointKind::Asr)?;
            let tts = cfg.connect(TTS, EndpointKind::Tts)?;
            let ser = ser_models(&cfg)?;
            let mut run = RunDir::create(&out, snapshot(&cfg, "run-probing1"))?;
            run.add_input("manifest", InputRecord::of(&input.manifest)?);
            let r = run_probing1(run, &utts, &asr, &tts, &ser, &cfg.pipeline_options()?)?;
            println!(
                "{} scored, {} flagged; {} CCC cells -> {}",
                r.counts.scored,
                r.counts.flagged,
                r.cells.len(),
                out.display()
            );
        }
        Command::RunProbing2 {
            suite,
            lexicon,
            skip_category,
            out,
        } => {
            let (suite, input) = match suite {
                Some(p) => {
                    let utts = load_manifest_scaled(&p, LabelScale::Unit)?;
                    (TestSuite::from_utterances(&utts)?, Some(("suite", p)))
                }
                None => (make_suite(lexicon.as_deref(), &skip_category)?, lexicon.map(|l| ("lexicon", l))),
            };
            let tts = cfg.connect(TTS, EndpointKind::Tts)?;
            let ser = ser_models(&cfg)?;
            let mut run = RunDir::create(&out, snapshot(&cfg, "run-probing2"))?;
            if let Some((name, p)) = input {
                run.add_input(name, InputRecord::of(&p)?);
            }
            let r = run_probing2(run, &suite, &tts, &ser, &cfg.pipeline_options()?)?;
            let significant = r
                .comparisons
                .iter()
                .filter(|c| c.outcome.is_some_and(|o| o.significant))
                .count();
            println!(
                "{} cases scored; {significant} of {} comparisons significant -> {}",
                r.counts.scored,
                r.comparisons.len(),
                out.display()
            );
        }
        Command::RunProbing3 {
            ft,
            frz,
            manifest,
            features,
            feature,
            out,
        } => probing3(&cfg, ft, frz, manifest, &features, &feature, &out)?,
        Command::AnalyzeNegations {
            predictions,
            input,
            features,
            out,
        } => {
            let preds: Vec<PredictionRecord> = read_jsonl(&predictions)?;
            let utts = load_manifest_scaled(&input.manifest, scale(&input))?;
            let table = load_tables(&features)?;
            let a = negation_error_analysis(&preds, &utts, &table)?;
            match out {
                Some(p) => {
                    fs::write(&p, a.to_tsv()).with_context(|| format!("writing {}", p.display()))?;
                    println!("n = {} -> {}", a.n, p.display());
                }
                None => print!("{}", a.to_tsv()),
            }
        }
        Command::Report { run } => {
            for f in render_report(&run)? {
                println!("{}", f.display());
            }
        }
        Command::MockAdapter { .. } => unreachable!("handled before config loading"),
    }
    Ok(())
}

fn snapshot(cfg: &Config, command: &str) -> Value {
    json!({ "command": command, "config": cfg })
}

fn scale(input: &ManifestArgs) -> LabelScale {
    if input.likert {
        LabelScale::Likert
    } else {
        LabelScale::Unit
    }
}

/// Manifest with audio paths made absolute, so adapters with their own
/// working directory see the same files.
fn load_utterances(input: &ManifestArgs) -> Result<Vec<Utterance>> {
    let mut utts = load_manifest_scaled(&input.manifest, scale(input))?;
    let cwd = std::env::current_dir()?;
    for u in &mut utts {
        u.audio_path = cwd.join(resolve_audio(&input.manifest, &u.audio_path));
    }
    Ok(utts)
}

fn make_suite(lexicon: Option<&Path>, skip: &[Category]) -> Result<TestSuite> {
    let lex = match lexicon {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::default(),
    };
    let options = SuiteOptions {
        skip: skip.iter().copied().collect::<BTreeSet<_>>(),
    };
    Ok(build_sentiment_suite(&lex, &options)?)
}

fn ser_models(cfg: &Config) -> Result<Vec<SerModel>> {
    let mut out = Vec::new();
    for v in [ModelVariant::Finetuned, ModelVariant::Frozen] {
        let name = ser_adapter(v);
        if cfg.has_adapter(&name) {
            out.push(SerModel {
                variant: v,
                endpoint: cfg.connect(&name, EndpointKind::SerPredict)?,
            });
        }
    }
    if out.is_empty() {
        bail!("the config defines neither [adapters.ser_finetuned] nor [adapters.ser_frozen]");
    }
    Ok(out)
}

/// Keeps successful rows; failures are logged and skipped.
fn keep_ok<T>(ids: &[String], results: Vec<ser_probe_core::Result<T>>, what: &str) -> Result<Vec<(String, T)>> {
    let mut rows = Vec::new();
    let mut failed = 0;
    for (id, r) in ids.iter().zip(results) {
        match r {
            Ok(f) => rows.push((id.clone(), f)),
            Err(e) => {
                failed += 1;
                log::warn!("{id}: {what} extraction failed: {e}");
            }
        }
    }
    if rows.is_empty() {
        bail!("{what} extraction failed for all {failed} utterances");
    }
    if failed > 0 {
        log::warn!("{failed} of {} utterances skipped", ids.len());
    }
    Ok(rows)
}

fn linguistic_rows(
    annotations: Option<&Path>,
    manifest: Option<&Path>,
    cfg: &Config,
) -> Result<Vec<(String, LinguisticFeatures)>> {
    let (ids, anns): (Vec<String>, Vec<_>) = match (annotations, manifest) {
        (Some(p), _) => load_annotations(p)?.into_iter().unzip(),
        (None, Some(m)) => {
            let mut rows = Vec::new();
            for u in load_manifest_scaled(m, LabelScale::Unit)? {
                let text = u.text.as_deref().with_context(|| format!("{}: manifest line has no text", u.id))?;
                rows.push((u.id.clone(), fallback_annotate(text)));
            }
            rows.into_iter().unzip()
        }
        (None, None) => bail!("one of --annotations or --manifest is required"),
    };
    let results = lingfeats::extract_batch(&anns, cfg.conjunctions, cfg.run.parallelism);
    keep_ok(&ids, results, "linguistic")
}

fn load_tables(paths: &[PathBuf]) -> Result<FeatureTable> {
    let mut table: Option<FeatureTable> = None;
    for p in paths {
        let t = FeatureTable::load(p)?;
        table = Some(match table {
            None => t,
            Some(acc) => acc.merge(&t).with_context(|| format!("merging {}", p.display()))?,
        });
    }
    table.context("no feature table given")
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn train_probes(cfg: &Config, embeddings: &Path, features: &[PathBuf], feature: &[String], out: &Path) -> Result<()> {
    let results_path = out.join("results.jsonl");
    if results_path.exists() {
        bail!("{} already exists; choose a new --out", results_path.display());
    }
    let archive = LayerEmbeddingArchive::load(embeddings)?;
    let table = load_tables(features)?;
    let columns = if feature.is_empty() { table.columns.clone() } else { feature.to_vec() };
    let splits = ProbeSplits::by_id_hash(archive.ids(), cfg.run.seed)?;
    let grid = train_grid(&archive, &table, &columns, &splits, &cfg.probe, cfg.run.parallelism)?;
    fs::create_dir_all(out)?;
    let mut jsonl = String::new();
    let mut tsv = String::from("variant\tlayer\tfeature\trmse_test\trmse_test_standardized\tbest_epoch\n");
    for r in &grid.results {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.model_variant, r.layer, r.feature, r.outcome.rmse_test, r.outcome.rmse_test_standardized, r.outcome.best_epoch
        ));
    }
    fs::write(&results_path, jsonl)?;
    fs::write(out.join("rmse.tsv"), tsv)?;
    if !grid.excluded.is_empty() {
        log::warn!("constant on the train split, not probed: {}", grid.excluded.join(", "));
    }
    println!("{} probes -> {}", grid.results.len(), out.display());
    Ok(())
}

fn probing3(
    cfg: &Config,
    ft: Option<PathBuf>,
    frz: Option<PathBuf>,
    manifest: Option<PathBuf>,
    features: &[PathBuf],
    feature: &[String],
    out: &Path,
) -> Result<()> {
    let table = load_tables(features)?;
    let mut run = RunDir::create(out, snapshot(cfg, "run-probing3"))?;
    for (i, p) in features.iter().enumerate() {
        run.add_input(&format!("features{i}"), InputRecord::of(p)?);
    }
    let (ft, frz) = match (ft, frz, manifest) {
        (Some(a), Some(b), _) => {
            run.add_input("ft", InputRecord::of(&a.join("meta.json"))?);
            run.add_input("frz", InputRecord::of(&b.join("meta.json"))?);
            (LayerEmbeddingArchive::load(&a)?, LayerEmbeddingArchive::load(&b)?)
        }
        (_, _, Some(m)) => {
            let utts = load_utterances(&ManifestArgs {
                manifest: m.clone(),
                likert: false,
            })?;
            run.add_input("manifest", InputRecord::of(&m)?);
            let scratch = tempfile::tempdir()?;
            let mut got = Vec::new();
            for v in [ModelVariant::Finetuned, ModelVariant::Frozen] {
                let name = embed_adapter(v);
                let ep = cfg.connect(&name, EndpointKind::SerEmbed)?;
                run.add_adapter(&name, ep.info.clone());
                let dir = scratch.path().join(v.as_str());
                fs::create_dir_all(&dir)?;
                let c = collect_embeddings(&ep, &utts, v, &dir, cfg.run.parallelism, cfg.failure_budget_pct)?;
                for f in &c.flagged {
                    log::warn!("{}: {} embedding failed: {}", f.id, v, f.message);
                }
                let rel = format!("embeddings/{v}");
                c.archive.save(&run.path(&rel))?;
                run.register(rel);
                got.push(c.archive);
            }
            let frz = got.pop().expect("two variants");
            (got.pop().expect("two variants"), frz)
        }
        _ => bail!("give --ft and --frz, or --manifest"),
    };
    let r = run_probing3(run, &ft, &frz, &table, feature, &cfg.probe, cfg.run.parallelism)?;
    if !r.excluded.is_empty() {
        log::warn!("constant on the train split, not probed: {}", r.excluded.join(", "));
    }
    println!("{} ratio cells -> {}", r.ratio.cells.len(), out.display());
    Ok(())
}
