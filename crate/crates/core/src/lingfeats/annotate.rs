//! Offline fallback annotator: closed-class lexicon plus suffix guesses.
//! Much lower fidelity than a real tagger/parser; it exists so the demo
//! pipeline runs without an NLP toolkit. Produces a flat `(ROOT (S ..))`
//! parse and a naive subject/object/negation dependency layer.

use super::{Dependency, LinguisticAnnotation};

const PRONOUNS: [&str; 24] = [
    "i", "me", "you", "he", "him", "she", "her", "it", "we", "us", "they", "them", "myself",
    "yourself", "himself", "herself", "itself", "ourselves", "themselves", "this", "that", "these",
    "those", "one",
];
const POSSESSIVE: [&str; 6] = ["my", "your", "his", "its", "our", "their"];
const WH: [&str; 4] = ["who", "whom", "what", "which"];
const DETERMINERS: [&str; 8] = ["the", "a", "an", "some", "any", "every", "each", "all"];
const COORD: [&str; 7] = ["and", "or", "but", "nor", "yet", "so", "neither"];
const SUBORD: [&str; 10] = ["because", "although", "though", "if", "while", "unless", "since", "whereas", "until", "whether"];
const PREPS: [&str; 14] = ["in", "on", "at", "of", "to", "for", "with", "by", "from", "about", "into", "over", "after", "before"];
const ADVERBS: [&str; 14] = [
    "not", "n't", "never", "very", "too", "so", "quite", "rather", "really", "always", "often", "just",
    "also", "slightly",
];
const AUX: [&str; 22] = [
    "is", "am", "are", "was", "were", "be", "been", "being", "do", "does", "did", "have", "has", "had",
    "will", "would", "can", "could", "should", "may", "might", "must",
];
const NEG_DET: [&str; 6] = ["no", "none", "nothing", "nobody", "nowhere", "neither"];

/// Splits on whitespace, peels leading/trailing punctuation into separate
/// tokens and splits the `n't` clitic.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let mut word = raw;
        let mut lead = Vec::new();
        while let Some(c) = word.chars().next().filter(|c| !c.is_alphanumeric()) {
            lead.push(c.to_string());
            word = &word[c.len_utf8()..];
        }
        let mut trail = Vec::new();
        while let Some(c) = word.chars().last().filter(|c| !c.is_alphanumeric()) {
            trail.push(c.to_string());
            word = &word[..word.len() - c.len_utf8()];
        }
        out.extend(lead);
        if !word.is_empty() {
            let lower = word.to_lowercase();
            if lower.ends_with("n't") && word.len() > 3 {
                let cut = word.len() - 3;
                let stem = if lower == "can't" { "ca" } else { &word[..cut] };
                out.push(stem.to_string());
                out.push(word[cut..].to_string());
            } else {
                out.push(word.to_string());
            }
        }
        out.extend(trail.into_iter().rev());
    }
    out
}

fn guess_tag(lower: &str, prev: Option<&str>) -> &'static str {
    if !lower.chars().any(char::is_alphanumeric) {
        return match lower {
            "." | "!" | "?" => ".",
            "," => ",",
            _ => ":",
        };
    }
    if lower.chars().all(|c| c.is_ascii_digit()) {
        return "CD";
    }
    let w = lower;
    if PRONOUNS.contains(&w) {
        "PRP"
    } else if POSSESSIVE.contains(&w) {
        "PRP$"
    } else if w == "whose" {
        "WP$"
    } else if WH.contains(&w) {
        "WP"
    } else if DETERMINERS.contains(&w) || NEG_DET[..1].contains(&w) {
        "DT"
    } else if COORD.contains(&w) {
        "CC"
    } else if SUBORD.contains(&w) || PREPS.contains(&w) {
        "IN"
    } else if ADVERBS.contains(&w) {
        "RB"
    } else if matches!(w, "none" | "nothing" | "nobody") {
        "NN"
    } else if w == "nowhere" {
        "RB"
    } else if AUX.contains(&w) {
        match w {
            "is" | "has" | "does" => "VBZ",
            "was" | "were" | "did" | "had" => "VBD",
            "am" | "are" | "do" | "have" => "VBP",
            "been" => "VBN",
            "being" => "VBG",
            "be" => "VB",
            _ => "MD",
        }
    } else if w.ends_with("ly") && w.len() > 4 {
        "RB"
    } else if ["ful", "ous", "ive", "able", "ible", "ant", "ic", "less", "al", "ish"]
        .iter()
        .any(|s| w.ends_with(s) && w.len() > s.len() + 2)
        || w.ends_with("est") && w.len() > 5
    {
        "JJ"
    } else if w.ends_with("ing") && w.len() > 4 {
        "VBG"
    } else if w.ends_with("ed") && w.len() > 3 {
        "VBD"
    } else if matches!(prev, Some("PRP") | Some("MD")) {
        "VBP"
    } else if w.ends_with('s') && w.len() > 3 && !w.ends_with("ss") {
        "NNS"
    } else {
        "NN"
    }
}

pub fn fallback_annotate(text: &str) -> LinguisticAnnotation {
    let tokens = tokenize(text);
    let mut tags: Vec<&'static str> = Vec::with_capacity(tokens.len());
    for t in &tokens {
        let tag = guess_tag(&t.to_lowercase(), tags.last().copied());
        tags.push(tag);
    }
    let n = tokens.len();
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut deps = Vec::new();
    let verb = tags.iter().position(|t| t.starts_with("VB") && !matches!(t, &"MD"));
    if let Some(v) = verb {
        let head = v + 1;
        deps.push(Dependency::new("root", 0, head));
        if let Some(s) = (0..v).rev().find(|&i| tags[i] == "PRP" || tags[i].starts_with("NN")) {
            deps.push(Dependency::new("nsubj", head, s + 1));
        }
        let is_copula = AUX.contains(&lower[v].as_str());
        if !is_copula {
            if let Some(o) = (v + 1..n).find(|&i| tags[i] == "PRP" || tags[i].starts_with("NN")) {
                deps.push(Dependency::new("obj", head, o + 1));
            }
        }
        for (i, l) in lower.iter().enumerate() {
            if l == "not" || l == "n't" || l == "never" {
                deps.push(Dependency::new("neg", head, i + 1));
            }
        }
    }
    for i in 0..n {
        if tags[i] == "IN" && SUBORD.contains(&lower[i].as_str()) {
            let target = (i + 1..n).find(|&j| tags[j].starts_with("VB")).unwrap_or(i);
            deps.push(Dependency::new("mark", target + 1, i + 1));
        }
    }
    let leaves: Vec<String> = tokens
        .iter()
        .zip(&tags)
        .map(|(t, g)| format!("({g} {})", t.replace('(', "-LRB-").replace(')', "-RRB-")))
        .collect();
    let constituency = if leaves.is_empty() {
        "(ROOT (S (X -NONE-)))".to_string()
    } else {
        format!("(ROOT (S {}))", leaves.join(" "))
    };
    LinguisticAnnotation {
        tokens,
        pos_tags: tags.into_iter().map(String::from).collect(),
        constituency,
        dependencies: deps,
    }
}
