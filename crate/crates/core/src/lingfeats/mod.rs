//! Linguistic probe targets derived from externally produced annotations
//! (tokens, Penn Treebank tags, a bracketed parse and dependency triples).
//!
//! Tag classes:
//!
//! | feature          | tags                                      |
//! |------------------|-------------------------------------------|
//! | adjectives       | `JJ JJR JJS`                              |
//! | adverbs          | `RB RBR RBS`                              |
//! | nouns            | `NN NNS NNP NNPS`                         |
//! | verbs            | `VB VBD VBG VBN VBP VBZ`                  |
//! | pronouns         | `PRP PRP$ WP WP$`                         |
//! | conjunctions     | `CC`, plus `IN` tokens attached by `mark` |
//!
//! Dependency heads and dependents are 1-based token indices; head 0 is the
//! root.

mod annotate;
mod tree;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use annotate::fallback_annotate;
pub use tree::{parse_constituency, tree_depth, ParseTree};

pub const NEGATION_WORDS: [&str; 10] = [
    "not", "n't", "never", "no", "none", "nothing", "nobody", "neither", "nor", "nowhere",
];

const PUNCT_TAGS: [&str; 12] = [".", ",", ":", "``", "''", "-LRB-", "-RRB-", "#", "$", "HYPH", "NFP", "SYM"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependency {
    pub relation: String,
    pub head: usize,
    pub dependent: usize,
}

impl Dependency {
    pub fn new(relation: &str, head: usize, dependent: usize) -> Self {
        Dependency {
            relation: relation.to_string(),
            head,
            dependent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinguisticAnnotation {
    pub tokens: Vec<String>,
    pub pos_tags: Vec<String>,
    pub constituency: String,
    pub dependencies: Vec<Dependency>,
}

impl LinguisticAnnotation {
    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.pos_tags.len() {
            return Err(Error::validation(format!(
                "{} tokens but {} POS tags",
                self.tokens.len(),
                self.pos_tags.len()
            )));
        }
        let n = self.tokens.len();
        for d in &self.dependencies {
            if d.dependent == 0 || d.dependent > n || d.head > n {
                return Err(Error::validation(format!(
                    "dependency {}({}, {}) is out of range for {n} tokens",
                    d.relation, d.head, d.dependent
                )));
            }
        }
        Ok(())
    }
}

/// How `n_conjunctions` is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjunctionMode {
    #[default]
    CoordinatingAndSubordinating,
    CoordinatingOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PosCounts {
    pub adjectives: usize,
    pub adverbs: usize,
    pub nouns: usize,
    pub verbs: usize,
    pub pronouns: usize,
    pub coordinating: usize,
    pub subordinating: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DependencyCounts {
    pub subjects: usize,
    pub direct_objects: usize,
    pub negations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinguisticFeatures {
    pub n_unique_words: usize,
    pub n_adjectives: usize,
    pub n_adverbs: usize,
    pub n_nouns: usize,
    pub n_verbs: usize,
    pub n_pronouns: usize,
    pub n_conjunctions: usize,
    pub n_subjects: usize,
    pub n_direct_objects: usize,
    pub word_complexity: f64,
    pub syntax_depth: usize,
    pub n_negations: usize,
    /// Both conjunction counts, whatever `n_conjunctions` was built from.
    pub n_conj_coordinating: usize,
    pub n_conj_subordinating: usize,
}

impl LinguisticFeatures {
    pub const COLUMNS: [&'static str; 12] = [
        "n_unique_words",
        "n_adjectives",
        "n_adverbs",
        "n_nouns",
        "n_verbs",
        "n_pronouns",
        "n_conjunctions",
        "n_subjects",
        "n_direct_objects",
        "word_complexity",
        "syntax_depth",
        "n_negations",
    ];

    pub fn values(&self) -> [f64; 12] {
        [
            self.n_unique_words as f64,
            self.n_adjectives as f64,
            self.n_adverbs as f64,
            self.n_nouns as f64,
            self.n_verbs as f64,
            self.n_pronouns as f64,
            self.n_conjunctions as f64,
            self.n_subjects as f64,
            self.n_direct_objects as f64,
            self.word_complexity,
            self.syntax_depth as f64,
            self.n_negations as f64,
        ]
    }
}

fn is_word(token: &str, tag: Option<&str>) -> bool {
    if tag.is_some_and(|t| PUNCT_TAGS.contains(&t)) {
        return false;
    }
    token.chars().any(char::is_alphanumeric)
}

pub fn count_pos(annotation: &LinguisticAnnotation) -> Result<PosCounts> {
    annotation.validate()?;
    let marked: BTreeSet<usize> = annotation
        .dependencies
        .iter()
        .filter(|d| d.relation == "mark")
        .map(|d| d.dependent - 1)
        .collect();
    let mut c = PosCounts::default();
    for (i, tag) in annotation.pos_tags.iter().enumerate() {
        match tag.as_str() {
            "JJ" | "JJR" | "JJS" => c.adjectives += 1,
            "RB" | "RBR" | "RBS" => c.adverbs += 1,
            "NN" | "NNS" | "NNP" | "NNPS" => c.nouns += 1,
            "VB" | "VBD" | "VBG" | "VBN" | "VBP" | "VBZ" => c.verbs += 1,
            "PRP" | "PRP$" | "WP" | "WP$" => c.pronouns += 1,
            "CC" => c.coordinating += 1,
            "IN" if marked.contains(&i) => c.subordinating += 1,
            _ => {}
        }
    }
    Ok(c)
}

/// Subjects (`nsubj`, `nsubj:pass`), direct objects (`obj`, `dobj`) and
/// negations: dependents of `neg` united with negation-word tokens, counted
/// once per token index.
pub fn count_dependencies(annotation: &LinguisticAnnotation) -> Result<DependencyCounts> {
    annotation.validate()?;
    let mut c = DependencyCounts::default();
    let mut negated: BTreeSet<usize> = BTreeSet::new();
    for d in &annotation.dependencies {
        match d.relation.as_str() {
            "nsubj" | "nsubj:pass" => c.subjects += 1,
            "obj" | "dobj" => c.direct_objects += 1,
            "neg" => {
                negated.insert(d.dependent - 1);
            }
            _ => {}
        }
    }
    for (i, tok) in annotation.tokens.iter().enumerate() {
        if NEGATION_WORDS.contains(&tok.to_lowercase().as_str()) {
            negated.insert(i);
        }
    }
    c.negations = negated.len();
    Ok(c)
}

fn unique_and_total<'a>(words: impl Iterator<Item = &'a str>) -> (usize, usize) {
    let mut seen = BTreeSet::new();
    let mut total = 0;
    for w in words {
        seen.insert(w.to_lowercase());
        total += 1;
    }
    (seen.len(), total)
}

/// Distinct lowercased words over word count; punctuation is ignored.
pub fn type_token_ratio<S: AsRef<str>>(tokens: &[S]) -> Result<f64> {
    let (unique, total) = unique_and_total(tokens.iter().map(AsRef::as_ref).filter(|t| is_word(t, None)));
    if total == 0 {
        return Err(Error::domain("type/token ratio of an empty token list"));
    }
    Ok(unique as f64 / total as f64)
}

pub fn extract_linguistic_features(
    annotation: &LinguisticAnnotation,
    mode: ConjunctionMode,
) -> Result<LinguisticFeatures> {
    annotation.validate()?;
    let pos = count_pos(annotation)?;
    let deps = count_dependencies(annotation)?;
    let words = annotation
        .tokens
        .iter()
        .zip(&annotation.pos_tags)
        .filter(|(t, g)| is_word(t, Some(g)))
        .map(|(t, _)| t.as_str());
    let (unique, total) = unique_and_total(words);
    if total == 0 {
        return Err(Error::domain("annotation contains no words"));
    }
    let tree = parse_constituency(&annotation.constituency)?;
    Ok(LinguisticFeatures {
        n_unique_words: unique,
        n_adjectives: pos.adjectives,
        n_adverbs: pos.adverbs,
        n_nouns: pos.nouns,
        n_verbs: pos.verbs,
        n_pronouns: pos.pronouns,
        n_conjunctions: match mode {
            ConjunctionMode::CoordinatingAndSubordinating => pos.coordinating + pos.subordinating,
            ConjunctionMode::CoordinatingOnly => pos.coordinating,
        },
        n_subjects: deps.subjects,
        n_direct_objects: deps.direct_objects,
        word_complexity: unique as f64 / total as f64,
        syntax_depth: tree_depth(&tree),
        n_negations: deps.negations,
        n_conj_coordinating: pos.coordinating,
        n_conj_subordinating: pos.subordinating,
    })
}

/// Per-utterance features on `parallelism` workers, in input order.
pub fn extract_batch(
    annotations: &[LinguisticAnnotation],
    mode: ConjunctionMode,
    parallelism: usize,
) -> Vec<Result<LinguisticFeatures>> {
    crate::par::map_ordered(annotations, parallelism, |a| extract_linguistic_features(a, mode))
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationRecord {
    id: String,
    tokens: Vec<String>,
    pos: Vec<String>,
    parse: String,
    #[serde(default)]
    deps: Vec<(String, usize, usize)>,
}

/// One JSON object per line:
/// `{"id", "tokens": [..], "pos": [..], "parse": "(ROOT ..)", "deps": [[rel, head, dep], ..]}`.
pub fn annotation_line(id: &str, a: &LinguisticAnnotation) -> String {
    let rec = AnnotationRecord {
        id: id.to_string(),
        tokens: a.tokens.clone(),
        pos: a.pos_tags.clone(),
        parse: a.constituency.clone(),
        deps: a
            .dependencies
            .iter()
            .map(|d| (d.relation.clone(), d.head, d.dependent))
            .collect(),
    };
    serde_json::to_string(&rec).expect("annotation records always serialize")
}

pub fn parse_annotations<R: BufRead>(reader: R) -> Result<Vec<(String, LinguisticAnnotation)>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let ann = LinguisticAnnotation {
            tokens: rec.tokens,
            pos_tags: rec.pos,
            constituency: rec.parse,
            dependencies: rec
                .deps
                .into_iter()
                .map(|(relation, head, dependent)| Dependency {
                    relation,
                    head,
                    dependent,
                })
                .collect(),
        };
        ann.validate().map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::validation(format!("duplicate annotation id {:?}", rec.id)));
        }
        out.push((rec.id, ann));
    }
    Ok(out)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<(String, LinguisticAnnotation)>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(BufReader::new(f))
}
