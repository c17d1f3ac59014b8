//! Template expansion for sentiment probing suites.
//!
//! Templates contain placeholders `{name}` or `{a:name}` where `name` refers
//! to a word list. The `a:` form prefixes the filled value with "a" or "an"
//! by the vowel-initial rule. `{{` and `}}` are literal braces. A name used
//! more than once in a template binds to the same value everywhere.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{Split, Utterance};

pub const GENERATOR_VERSION: &str = "suitegen-1";

/// Name the polarity word is bound to inside context and negation templates.
pub const SLOT_ADJ: &str = "adj";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    WordIsolated,
    WordInContext,
    Negation,
    Intensifier,
    Reducer,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::WordIsolated,
        Category::WordInContext,
        Category::Negation,
        Category::Intensifier,
        Category::Reducer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::WordIsolated => "word_isolated",
            Category::WordInContext => "word_in_context",
            Category::Negation => "negation",
            Category::Intensifier => "intensifier",
            Category::Reducer => "reducer",
        }
    }

    /// Intensifiers and reducers only apply to polar words.
    pub fn allows(self, polarity: Polarity) -> bool {
        !(matches!(self, Category::Intensifier | Category::Reducer) && polarity == Polarity::Neutral)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative,
    Neutral,
    Positive,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Negative, Polarity::Neutral, Polarity::Positive];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
            Polarity::Positive => "positive",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Polarity::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown polarity {s:?}")))
    }
}

/// Word lists and templates for suite construction.
///
/// `lists` holds any additional named lists the templates refer to (the
/// default negation template uses `noun`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub negative: Vec<String>,
    pub neutral: Vec<String>,
    pub positive: Vec<String>,
    #[serde(default)]
    pub intensifiers: Vec<String>,
    #[serde(default)]
    pub reducers: Vec<String>,
    pub context_templates: Vec<String>,
    #[serde(default = "default_negation_templates")]
    pub negation_templates: Vec<String>,
    #[serde(default)]
    pub lists: BTreeMap<String, Vec<String>>,
}

fn default_negation_templates() -> Vec<String> {
    vec!["That was not {a:adj} {noun}.".to_string()]
}

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|w| w.to_string()).collect()
}

impl Default for Lexicon {
    /// Airline-domain lexicon ("That was a wonderful aircraft.").
    fn default() -> Self {
        Lexicon {
            negative: words(&[
                "dreadful", "awful", "terrible", "horrible", "bad", "poor", "unpleasant", "disappointing",
                "frustrating", "annoying",
            ]),
            neutral: words(&[
                "commercial", "international", "domestic", "private", "scheduled", "standard", "daily",
                "direct",
            ]),
            positive: words(&[
                "excellent", "wonderful", "great", "amazing", "fantastic", "pleasant", "good", "nice",
                "lovely", "incredible",
            ]),
            intensifiers: words(&["really", "very", "extremely", "incredibly"]),
            reducers: words(&["somewhat", "slightly", "fairly", "rather"]),
            context_templates: words(&[
                "That was {a:adj} flight.",
                "This is {a:adj} airline.",
                "It was {a:adj} aircraft.",
            ]),
            negation_templates: default_negation_templates(),
            lists: BTreeMap::from([("noun".to_string(), words(&["flight"]))]),
        }
    }
}

impl Lexicon {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse {
            line: e.span().map(|sp| line_of(s, sp.start)).unwrap_or(0),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("lexicon always serializes")
    }

    pub fn polarity_words(&self, polarity: Polarity) -> &[String] {
        match polarity {
            Polarity::Negative => &self.negative,
            Polarity::Neutral => &self.neutral,
            Polarity::Positive => &self.positive,
        }
    }

    /// All named lists visible to templates.
    pub fn word_lists(&self) -> WordLists {
        let mut map = self.lists.clone();
        for p in Polarity::ALL {
            map.insert(p.as_str().to_string(), self.polarity_words(p).to_vec());
        }
        map.insert("intensifiers".into(), self.intensifiers.clone());
        map.insert("reducers".into(), self.reducers.clone());
        WordLists(map)
    }

    /// SHA-256 over the canonical JSON serialization, hex encoded.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("lexicon always serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self, skip: &BTreeSet<Category>) -> Result<()> {
        let mut owner: BTreeMap<String, Polarity> = BTreeMap::new();
        for p in Polarity::ALL {
            let ws = self.polarity_words(p);
            if ws.is_empty() {
                return Err(Error::validation(format!("{p} word list is empty")));
            }
            for w in ws {
                check_single_token(w)?;
                if let Some(prev) = owner.insert(w.to_lowercase(), p) {
                    if prev != p {
                        return Err(Error::validation(format!("{w:?} is listed as both {prev} and {p}")));
                    }
                }
            }
        }
        let need = |cat: Category, name: &str, list: &[String], what: &str| -> Result<()> {
            if !skip.contains(&cat) && list.is_empty() {
                return Err(Error::validation(format!(
                    "{name} list is empty but the {what} category is not skipped"
                )));
            }
            Ok(())
        };
        need(Category::Intensifier, "intensifiers", &self.intensifiers, "intensifier")?;
        need(Category::Reducer, "reducers", &self.reducers, "reducer")?;
        let needs_context = [Category::WordInContext, Category::Intensifier, Category::Reducer]
            .iter()
            .any(|c| !skip.contains(c));
        if needs_context && self.context_templates.is_empty() {
            return Err(Error::validation("no context templates"));
        }
        if !skip.contains(&Category::Negation) && self.negation_templates.is_empty() {
            return Err(Error::validation("no negation templates"));
        }
        for w in self.intensifiers.iter().chain(&self.reducers) {
            check_single_token(w)?;
        }
        Ok(())
    }
}

fn line_of(s: &str, offset: usize) -> usize {
    s[..offset.min(s.len())].matches('\n').count() + 1
}

fn check_single_token(w: &str) -> Result<()> {
    if w.is_empty() || w.chars().any(char::is_whitespace) {
        return Err(Error::validation(format!("{w:?} is not a single token")));
    }
    Ok(())
}

/// Named word lists a template can draw from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordLists(pub BTreeMap<String, Vec<String>>);

impl WordLists {
    pub fn get(&self, name: &str) -> Option<&[String]> {
        self.0.get(name).map(Vec::as_slice)
    }

    pub fn with(mut self, name: &str, values: Vec<String>) -> Self {
        self.0.insert(name.to_string(), values);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Slot { name: String, article: bool, at_start: bool },
}

/// A parsed template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    source: String,
    pieces: Vec<Piece>,
    /// Distinct slot names in order of first appearance, with the byte offset
    /// of that first appearance.
    slots: Vec<(String, usize)>,
}

impl Template {
    pub fn parse(source: &str) -> Result<Self> {
        let mut pieces = Vec::new();
        let mut slots: Vec<(String, usize)> = Vec::new();
        let mut lit = String::new();
        let mut chars = source.char_indices().peekable();
        while let Some((pos, c)) = chars.next() {
            match c {
                '{' if chars.peek().map(|&(_, n)| n) == Some('{') => {
                    chars.next();
                    lit.push('{');
                }
                '}' if chars.peek().map(|&(_, n)| n) == Some('}') => {
                    chars.next();
                    lit.push('}');
                }
                '}' => {
                    return Err(Error::Template {
                        position: pos,
                        message: "unmatched '}'".into(),
                    })
                }
                '{' => {
                    let mut body = String::new();
                    let mut closed = false;
                    for (_, c) in chars.by_ref() {
                        if c == '}' {
                            closed = true;
                            break;
                        }
                        body.push(c);
                    }
                    if !closed {
                        return Err(Error::Template {
                            position: pos,
                            message: "unterminated placeholder".into(),
                        });
                    }
                    let (article, name) = match body.strip_prefix("a:") {
                        Some(rest) => (true, rest.trim()),
                        None => (false, body.trim()),
                    };
                    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
                        return Err(Error::Template {
                            position: pos,
                            message: format!("invalid placeholder {{{body}}}"),
                        });
                    }
                    let at_start = pieces.is_empty() && lit.trim().is_empty();
                    if !lit.is_empty() {
                        pieces.push(Piece::Literal(std::mem::take(&mut lit)));
                    }
                    if !slots.iter().any(|(n, _)| n == name) {
                        slots.push((name.to_string(), pos));
                    }
                    pieces.push(Piece::Slot {
                        name: name.to_string(),
                        article,
                        at_start,
                    });
                }
                _ => lit.push(c),
            }
        }
        if !lit.is_empty() {
            pieces.push(Piece::Literal(lit));
        }
        Ok(Template {
            source: source.to_string(),
            pieces,
            slots,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Distinct placeholder names, left to right.
    pub fn slot_names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|(n, _)| n.as_str())
    }

    fn render(&self, binding: &BTreeMap<&str, &str>) -> String {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot { name, article, at_start } => {
                    let value = binding[name.as_str()];
                    if *article {
                        let art = indefinite_article(value);
                        if *at_start {
                            out.push_str(if art == "an" { "An" } else { "A" });
                        } else {
                            out.push_str(art);
                        }
                        out.push(' ');
                    }
                    out.push_str(value);
                }
            }
        }
        out
    }
}

/// "an" before a vowel-initial word, "a" otherwise.
pub fn indefinite_article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// One filled-in template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expansion {
    pub text: String,
    /// (placeholder, value) in left-to-right placeholder order.
    pub bindings: Vec<(String, String)>,
}

impl Expansion {
    pub fn value(&self, name: &str) -> Option<&str> {
        self.bindings.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
    }
}

/// Cartesian expansion of a template over the named lists. The first
/// placeholder varies slowest; values follow list order.
pub fn expand_template(template: &Template, lists: &WordLists) -> Result<Vec<Expansion>> {
    let mut domains: Vec<(&str, &[String])> = Vec::with_capacity(template.slots.len());
    for (name, pos) in &template.slots {
        let values = lists.get(name).ok_or_else(|| Error::Template {
            position: *pos,
            message: format!("unknown placeholder {name:?}"),
        })?;
        if values.is_empty() {
            return Err(Error::validation(format!("word list {name:?} is empty")));
        }
        domains.push((name.as_str(), values));
    }
    let total: usize = domains.iter().map(|(_, v)| v.len()).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; domains.len()];
    for _ in 0..total {
        let binding: BTreeMap<&str, &str> = domains
            .iter()
            .zip(&idx)
            .map(|((n, vals), &i)| (*n, vals[i].as_str()))
            .collect();
        out.push(Expansion {
            text: template.render(&binding),
            bindings: domains
                .iter()
                .zip(&idx)
                .map(|((n, vals), &i)| (n.to_string(), vals[i].clone()))
                .collect(),
        });
        // odometer, rightmost fastest
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < domains[k].1.len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub text: String,
    pub category: Category,
    pub polarity: Polarity,
    pub source_word: String,
    pub template_id: String,
    /// Intensifier or reducer adverb, when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modifier: Option<String>,
}

impl TestCase {
    /// Manifest record for this case; audio points at the planned synthesis
    /// output `synth/<id>.wav`.
    pub fn to_utterance(&self) -> Utterance {
        let mut meta = BTreeMap::new();
        meta.insert("category".into(), self.category.as_str().into());
        meta.insert("polarity".into(), self.polarity.as_str().into());
        meta.insert("source_word".into(), self.source_word.clone());
        meta.insert("template_id".into(), self.template_id.clone());
        if let Some(m) = &self.modifier {
            meta.insert("modifier".into(), m.clone());
        }
        Utterance {
            id: self.id.clone(),
            audio_path: format!("synth/{}.wav", self.id).into(),
            text: Some(self.text.clone()),
            split: Split::Test,
            labels: None,
            meta,
        }
    }

    pub fn from_utterance(utt: &Utterance) -> Result<Self> {
        let field = |k: &str| {
            utt.meta
                .get(k)
                .cloned()
                .ok_or_else(|| Error::validation(format!("suite record {} lacks {k:?}", utt.id)))
        };
        let case = TestCase {
            id: utt.id.clone(),
            text: utt
                .text
                .clone()
                .ok_or_else(|| Error::validation(format!("suite record {} has no text", utt.id)))?,
            category: field("category")?.parse()?,
            polarity: field("polarity")?.parse()?,
            source_word: field("source_word")?,
            template_id: field("template_id")?,
            modifier: utt.meta.get("modifier").cloned(),
        };
        if case.text.is_empty() {
            return Err(Error::validation(format!("suite record {} has empty text", utt.id)));
        }
        if !case.category.allows(case.polarity) {
            return Err(Error::validation(format!(
                "suite record {} has forbidden combination {}/{}",
                utt.id, case.category, case.polarity
            )));
        }
        Ok(case)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestSuite {
    pub cases: Vec<TestCase>,
    pub lexicon_fingerprint: String,
    pub generator_version: String,
}

impl TestSuite {
    pub fn to_utterances(&self) -> Vec<Utterance> {
        self.cases.iter().map(TestCase::to_utterance).collect()
    }

    pub fn from_utterances(utts: &[Utterance]) -> Result<Self> {
        Ok(TestSuite {
            cases: utts.iter().map(TestCase::from_utterance).collect::<Result<_>>()?,
            lexicon_fingerprint: String::new(),
            generator_version: GENERATOR_VERSION.to_string(),
        })
    }

    pub fn count(&self, category: Category, polarity: Polarity) -> usize {
        self.cases
            .iter()
            .filter(|c| c.category == category && c.polarity == polarity)
            .count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuiteOptions {
    pub skip: BTreeSet<Category>,
}

/// Builds the isolation / context / negation / intensifier / reducer suite.
///
/// Case order: for each category (in [`Category::ALL`] order), for each
/// polarity, for each word, then template and expansion order. Ids are
/// `<category>-<polarity>-<nnnn>` numbered within each group.
pub fn build_sentiment_suite(lexicon: &Lexicon, options: &SuiteOptions) -> Result<TestSuite> {
    lexicon.validate(&options.skip)?;
    let base = lexicon.word_lists();
    let contexts: Vec<Template> = lexicon
        .context_templates
        .iter()
        .map(|t| Template::parse(t))
        .collect::<Result<_>>()?;
    let negations: Vec<Template> = lexicon
        .negation_templates
        .iter()
        .map(|t| Template::parse(t))
        .collect::<Result<_>>()?;

    let mut cases = Vec::new();
    for category in Category::ALL {
        if options.skip.contains(&category) {
            continue;
        }
        for polarity in Polarity::ALL {
            if !category.allows(polarity) {
                continue;
            }
            let mut group: Vec<(String, String, String, Option<String>)> = Vec::new();
            for word in lexicon.polarity_words(polarity) {
                match category {
                    Category::WordIsolated => {
                        group.push((word.clone(), word.clone(), "isolated".into(), None));
                    }
                    Category::WordInContext => {
                        fill(&contexts, "ctx", &base, word, word, None, &mut group)?;
                    }
                    Category::Negation => {
                        fill(&negations, "neg", &base, word, word, None, &mut group)?;
                    }
                    Category::Intensifier | Category::Reducer => {
                        let adverbs = if category == Category::Intensifier {
                            &lexicon.intensifiers
                        } else {
                            &lexicon.reducers
                        };
                        for adverb in adverbs {
                            let phrase = format!("{adverb} {word}");
                            fill(&contexts, "ctx", &base, &phrase, word, Some(adverb), &mut group)?;
                        }
                    }
                }
            }
            for (i, (text, source_word, template_id, modifier)) in group.into_iter().enumerate() {
                cases.push(TestCase {
                    id: format!("{}-{}-{:04}", category.as_str(), polarity.as_str(), i),
                    text,
                    category,
                    polarity,
                    source_word,
                    template_id,
                    modifier,
                });
            }
        }
    }
    Ok(TestSuite {
        cases,
        lexicon_fingerprint: lexicon.fingerprint(),
        generator_version: GENERATOR_VERSION.to_string(),
    })
}

fn fill(
    templates: &[Template],
    prefix: &str,
    base: &WordLists,
    slot_value: &str,
    source_word: &str,
    modifier: Option<&String>,
    out: &mut Vec<(String, String, String, Option<String>)>,
) -> Result<()> {
    let lists = base.clone().with(SLOT_ADJ, vec![slot_value.to_string()]);
    for (t_idx, template) in templates.iter().enumerate() {
        for exp in expand_template(template, &lists)? {
            out.push((
                exp.text,
                source_word.to_string(),
                format!("{prefix}{t_idx}"),
                modifier.cloned(),
            ));
        }
    }
    Ok(())
}
