//! Bracketed constituency trees, e.g. `(ROOT (S (NP (PRP I)) (VP (VBP eat))))`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    pub label: String,
    /// Empty for token leaves.
    pub children: Vec<ParseTree>,
}

impl ParseTree {
    pub fn leaf(token: &str) -> Self {
        ParseTree {
            label: token.to_string(),
            children: Vec::new(),
        }
    }

    pub fn node(label: &str, children: Vec<ParseTree>) -> Self {
        ParseTree {
            label: label.to_string(),
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Token leaves, left to right.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            if t.is_leaf() {
                out.push(t.label.as_str());
            } else {
                stack.extend(t.children.iter().rev());
            }
        }
        out
    }

    /// Renders back to bracketed form.
    pub fn to_bracketed(&self) -> String {
        if self.is_leaf() {
            return self.label.clone();
        }
        let inner: Vec<String> = self.children.iter().map(ParseTree::to_bracketed).collect();
        format!("({} {})", self.label, inner.join(" "))
    }
}

#[derive(Debug, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn lex(s: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in s.char_indices() {
        let delim = c == '(' || c == ')' || c.is_whitespace();
        if delim {
            if let Some(st) = start.take() {
                out.push((st, Tok::Atom(&s[st..i])));
            }
            match c {
                '(' => out.push((i, Tok::Open)),
                ')' => out.push((i, Tok::Close)),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(st) = start {
        out.push((st, Tok::Atom(&s[st..])));
    }
    out
}

/// Parses exactly one bracketed tree. Errors carry the byte offset where
/// parsing failed; an unterminated tree fails at the end of the input.
pub fn parse_constituency(bracketed: &str) -> Result<ParseTree> {
    let err = |offset: usize, message: &str| Error::Syntax {
        offset,
        message: message.to_string(),
    };
    let toks = lex(bracketed);
    if toks.is_empty() {
        return Err(err(0, "empty parse string"));
    }
    let mut stack: Vec<ParseTree> = Vec::new();
    let mut done: Option<ParseTree> = None;
    let mut i = 0;
    while i < toks.len() {
        let (pos, ref tok) = toks[i];
        if done.is_some() {
            return Err(err(pos, "trailing input after the tree"));
        }
        match tok {
            Tok::Open => match toks.get(i + 1) {
                Some((_, Tok::Atom(label))) => {
                    stack.push(ParseTree::node(label, Vec::new()));
                    i += 1;
                }
                Some((p, _)) => return Err(err(*p, "constituent without a label")),
                None => return Err(err(bracketed.len(), "unexpected end of input")),
            },
            Tok::Close => {
                let node = stack.pop().ok_or_else(|| err(pos, "unmatched ')'"))?;
                if node.children.is_empty() {
                    return Err(err(pos, "empty constituent"));
                }
                match stack.last_mut() {
                    Some(parent) => parent.children.push(node),
                    None => done = Some(node),
                }
            }
            Tok::Atom(a) => match stack.last_mut() {
                Some(parent) => parent.children.push(ParseTree::leaf(a)),
                None => return Err(err(pos, "token outside of any constituent")),
            },
        }
        i += 1;
    }
    done.ok_or_else(|| err(bracketed.len(), "unexpected end of input"))
}

/// Number of labeled nonterminals on the longest root-to-preterminal path;
/// token leaves are not counted.
pub fn tree_depth(tree: &ParseTree) -> usize {
    let mut best = 0;
    let mut stack = vec![(tree, 0usize)];
    while let Some((t, d)) = stack.pop() {
        if t.is_leaf() {
            best = best.max(d);
        } else {
            for c in &t.children {
                stack.push((c, d + 1));
            }
        }
    }
    best
}
