use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use ser_probe_core::manifest::manifest_line;
use ser_probe_core::seed::fnv1a;
use ser_probe_core::stats::{bootstrap_ci_stream, mean, paired_t_test, t_test, StatSummary, TestOutcome};
use ser_probe_core::suitegen::{Category, Polarity, TestCase, TestSuite};
use ser_probe_core::{Dimension, EmotionTriple, ModelVariant};

use super::{budget_error, flagged_tsv, parse_prediction, Flag, Flags, PipelineOptions, SerModel};
use crate::error::{HarnessError, Result};
use crate::mock::META_UTTERANCE;
use crate::protocol::{Op, Request, SynthesizePayload};
use crate::run::{Counts, ProbeRunRecord, RunDir, RunStatus, STAGE_PROBING2};
use crate::transport::Endpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub category: Category,
    pub polarity: Polarity,
}

impl GroupKey {
    pub fn new(category: Category, polarity: Polarity) -> Self {
        GroupKey { category, polarity }
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.category, self.polarity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub variant: ModelVariant,
    pub category: Category,
    pub polarity: Polarity,
    pub dimension: Dimension,
    #[serde(flatten)]
    pub summary: StatSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Between polarities, within isolation or context.
    Polarity,
    /// Negated vs plain context, same polarity.
    Negation,
    Intensifier,
    Reducer,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Polarity => "polarity",
            Family::Negation => "negation",
            Family::Intensifier => "intensifier",
            Family::Reducer => "reducer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComparisonStatus {
    Tested,
    /// A group is empty, e.g. its category was skipped at generation.
    Absent,
    /// Both groups exist but one has fewer than two scored cases.
    Insufficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub variant: ModelVariant,
    pub dimension: Dimension,
    pub family: Family,
    pub a: GroupKey,
    pub b: GroupKey,
    pub n_a: usize,
    pub n_b: usize,
    pub status: ComparisonStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<TestOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePrediction {
    pub id: String,
    pub variant: ModelVariant,
    pub category: Category,
    pub polarity: Polarity,
    pub source_word: String,
    pub prediction: EmotionTriple,
}

#[derive(Debug, Clone)]
pub struct Probing2Report {
    pub groups: Vec<GroupSummary>,
    pub comparisons: Vec<Comparison>,
    pub counts: Counts,
    pub flagged: Vec<Flag>,
    pub record: ProbeRunRecord,
}

impl Probing2Report {
    pub fn comparison(&self, v: ModelVariant, d: Dimension, a: GroupKey, b: GroupKey) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.variant == v && c.dimension == d && c.a == a && c.b == b)
    }
}

/// The fixed comparison set, as (family, a, b).
pub fn comparison_plan() -> Vec<(Family, GroupKey, GroupKey)> {
    use Category::*;
    use Polarity::*;
    let g = GroupKey::new;
    let mut plan = Vec::new();
    for cat in [WordIsolated, WordInContext] {
        plan.push((Family::Polarity, g(cat, Negative), g(cat, Neutral)));
        plan.push((Family::Polarity, g(cat, Neutral), g(cat, Positive)));
        plan.push((Family::Polarity, g(cat, Negative), g(cat, Positive)));
    }
    for pol in Polarity::ALL {
        plan.push((Family::Negation, g(Negation, pol), g(WordInContext, pol)));
    }
    for (fam, cat) in [(Family::Intensifier, Intensifier), (Family::Reducer, Reducer)] {
        for pol in [Negative, Positive] {
            plan.push((fam, g(cat, pol), g(WordInContext, pol)));
        }
    }
    plan
}

fn bootstrap_stream(v: ModelVariant, k: GroupKey, d: Dimension) -> u64 {
    fnv1a(format!("probing2/{v}/{}/{d}", k.label()).as_bytes())
}

type Scored<'a> = Vec<(&'a TestCase, EmotionTriple)>;

fn compare(
    family: Family,
    a: &[(&TestCase, EmotionTriple)],
    b: &[(&TestCase, EmotionTriple)],
    dim: Dimension,
    alpha: f64,
    paired: bool,
) -> Result<(ComparisonStatus, Option<TestOutcome>)> {
    if a.is_empty() || b.is_empty() {
        return Ok((ComparisonStatus::Absent, None));
    }
    // polarity groups never share source words, so they cannot be paired
    if paired && family != Family::Polarity {
        // pair on the source word: mean prediction per word in each group
        let (wa, wb) = (per_word(a, dim), per_word(b, dim));
        let common: Vec<&str> = wa.keys().filter(|w| wb.contains_key(*w)).copied().collect();
        if common.len() >= 2 {
            let xa: Vec<f64> = common.iter().map(|w| mean(&wa[w])).collect();
            let xb: Vec<f64> = common.iter().map(|w| mean(&wb[w])).collect();
            return Ok((ComparisonStatus::Tested, Some(paired_t_test(&xa, &xb, alpha)?)));
        }
    }
    if a.len() < 2 || b.len() < 2 {
        return Ok((ComparisonStatus::Insufficient, None));
    }
    let xa: Vec<f64> = a.iter().map(|(_, t)| t.get(dim)).collect();
    let xb: Vec<f64> = b.iter().map(|(_, t)| t.get(dim)).collect();
    Ok((ComparisonStatus::Tested, Some(t_test(&xa, &xb, alpha)?)))
}

fn per_word<'a>(g: &[(&'a TestCase, EmotionTriple)], dim: Dimension) -> BTreeMap<&'a str, Vec<f64>> {
    let mut m: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (c, t) in g {
        m.entry(c.source_word.as_str()).or_default().push(t.get(dim));
    }
    m
}

pub(crate) fn groups_tsv(groups: &[GroupSummary]) -> String {
    let mut s = String::from("variant\tcategory\tpolarity\tdimension\tn\tmean\tci_lo\tci_hi\n");
    for g in groups {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            g.variant, g.category, g.polarity, g.dimension, g.summary.n, g.summary.mean, g.summary.ci_lo, g.summary.ci_hi
        ));
    }
    s
}

pub(crate) fn comparisons_tsv(cs: &[Comparison]) -> String {
    let mut s = String::from("variant\tdimension\tfamily\ta\tb\tn_a\tn_b\tstatus\tmethod\tt\tdf\tp\tsignificant\tdegenerate\n");
    for c in cs {
        let status = match c.status {
            ComparisonStatus::Tested => "tested",
            ComparisonStatus::Absent => "absent",
            ComparisonStatus::Insufficient => "insufficient",
        };
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{status}",
            c.variant,
            c.dimension,
            c.family.as_str(),
            c.a.label(),
            c.b.label(),
            c.n_a,
            c.n_b
        ));
        match &c.outcome {
            Some(o) => s.push_str(&format!(
                "\t{}\t{}\t{}\t{}\t{}\t{}\n",
                serde_json::to_value(o.method).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
                o.t_statistic,
                o.df,
                o.p_value,
                o.significant,
                o.degenerate
            )),
            None => s.push_str("\tNA\tNA\tNA\tNA\tNA\tNA\n"),
        }
    }
    s
}

/// Template-suite probing: synthesise every case, predict with every
/// variant, summarise per (variant, category, polarity, dimension) and run
/// the comparison set.
pub fn run_probing2(
    mut run: RunDir,
    suite: &TestSuite,
    tts: &Endpoint,
    ser: &[SerModel],
    opts: &PipelineOptions,
) -> Result<Probing2Report> {
    if suite.cases.is_empty() {
        return Err(HarnessError::Invalid("probing 2 needs a non-empty suite".into()));
    }
    if ser.is_empty() {
        return Err(HarnessError::Invalid("probing 2 needs at least one SER endpoint".into()));
    }
    opts.run.validate()?;
    let par = opts.run.parallelism;
    let total = suite.cases.len();
    let ids: Vec<String> = suite.cases.iter().map(|c| c.id.clone()).collect();
    if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
        return Err(HarnessError::Invalid("suite case ids are not unique".into()));
    }
    run.set_stage(STAGE_PROBING2);
    run.add_adapter("tts", tts.info.clone());
    for m in ser {
        run.add_adapter(&format!("ser_{}", m.variant), m.endpoint.info.clone());
    }
    let mut suite_lines = String::new();
    for u in suite.to_utterances() {
        suite_lines.push_str(&manifest_line(&u));
        suite_lines.push('\n');
    }
    run.write("suite.jsonl", suite_lines)?;

    let mut flags = Flags::default();
    let reqs: Vec<Request> = suite
        .cases
        .iter()
        .map(|c| {
            Request::new(format!("tts/{}", c.id), Op::Synthesize)
                .with_text(&c.text)
                .with_out(run.path(format!("synth/{}.wav", c.id)))
                .with_meta(META_UTTERANCE, &c.id)
        })
        .collect();
    let out = run.timed("tts", |_| Ok(tts.call_all(&reqs, par)))?;
    let mut synth = BTreeMap::new();
    for (c, r) in suite.cases.iter().zip(out) {
        let p = r.and_then(|r| {
            serde_json::from_value::<SynthesizePayload>(r.payload).map_err(|e| HarnessError::Protocol {
                endpoint: tts.name.clone(),
                message: format!("synthesize payload for {}: {e}", c.id),
            })
        });
        match p {
            Ok(p) => {
                synth.insert(c.id.clone(), p.audio);
            }
            Err(e) => flags.add(&c.id, "tts", &e),
        }
    }
    run.register("synth");

    let mut preds: BTreeMap<ModelVariant, BTreeMap<String, EmotionTriple>> = BTreeMap::new();
    for m in ser {
        let live: Vec<&TestCase> = suite.cases.iter().filter(|c| !flags.contains(&c.id)).collect();
        let reqs: Vec<Request> = live
            .iter()
            .map(|c| {
                let mut r = Request::new(format!("ser/{}/{}", m.variant, c.id), Op::Predict)
                    .with_audio(&synth[&c.id])
                    .with_meta(META_UTTERANCE, &c.id);
                for (k, v) in c.to_utterance().meta {
                    r = r.with_meta(&k, v);
                }
                r
            })
            .collect();
        let stage = format!("ser_{}", m.variant);
        let out = run.timed(&stage, |_| Ok(m.endpoint.call_all(&reqs, par)))?;
        let slot = preds.entry(m.variant).or_default();
        for (c, r) in live.iter().zip(out) {
            match r.and_then(|r| parse_prediction(&m.endpoint, &r)) {
                Ok(t) => {
                    slot.insert(c.id.clone(), t);
                }
                Err(e) => flags.add(&c.id, &stage, &e),
            }
        }
    }

    let flagged = flags.ordered(&ids);
    run.write("flagged.tsv", flagged_tsv(&flagged))?;
    let scored: Vec<&TestCase> = suite.cases.iter().filter(|c| !flags.contains(&c.id)).collect();
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

    let mut case_rows = Vec::new();
    let mut groups = Vec::new();
    let mut comparisons = Vec::new();
    for m in ser {
        let p = &preds[&m.variant];
        let mut by_group: BTreeMap<GroupKey, Scored> = BTreeMap::new();
        for c in &scored {
            let t = p[&c.id];
            case_rows.push(CasePrediction {
                id: c.id.clone(),
                variant: m.variant,
                category: c.category,
                polarity: c.polarity,
                source_word: c.source_word.clone(),
                prediction: t,
            });
            by_group.entry(GroupKey::new(c.category, c.polarity)).or_default().push((c, t));
        }
        for dim in Dimension::ALL {
            for (k, rows) in &by_group {
                let xs: Vec<f64> = rows.iter().map(|(_, t)| t.get(dim)).collect();
                groups.push(GroupSummary {
                    variant: m.variant,
                    category: k.category,
                    polarity: k.polarity,
                    dimension: dim,
                    summary: bootstrap_ci_stream(&xs, &opts.run, bootstrap_stream(m.variant, *k, dim))?,
                });
            }
            for (family, a, b) in comparison_plan() {
                let ga = by_group.get(&a).map(Vec::as_slice).unwrap_or(&[]);
                let gb = by_group.get(&b).map(Vec::as_slice).unwrap_or(&[]);
                let (status, outcome) = compare(family, ga, gb, dim, opts.run.alpha, opts.paired)?;
                comparisons.push(Comparison {
                    variant: m.variant,
                    dimension: dim,
                    family,
                    a,
                    b,
                    n_a: ga.len(),
                    n_b: gb.len(),
                    status,
                    outcome,
                });
            }
        }
    }
    groups.sort_by_key(|g| (g.variant, g.category, g.polarity, g.dimension));

    run.write_jsonl("case_predictions.jsonl", &case_rows)?;
    run.write_json("groups.json", &groups)?;
    run.write("groups.tsv", groups_tsv(&groups))?;
    run.write_json("comparisons.json", &comparisons)?;
    run.write("comparisons.tsv", comparisons_tsv(&comparisons))?;
    let record = run.finish(RunStatus::Complete)?;
    Ok(Probing2Report {
        groups,
        comparisons,
        counts,
        flagged,
        record,
    })
}
