//! Token segmentation and vocabulary.
//!
//! Prose splits on whitespace, with punctuation and CJK characters as tokens
//! of their own, and is lowercased. Formulas split into letter runs, digit
//! runs, `\commands` and single symbols, case preserved.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::normalizer::CanonicalText;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3000..=0x303F | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0xFF00..=0xFFEF)
}

fn segment_prose(s: &str, out: &mut Vec<String>) {
    for word in s.split_whitespace() {
        let mut cur = String::new();
        for c in word.chars() {
            if c.is_alphanumeric() && !is_cjk(c) {
                cur.extend(c.to_lowercase());
            } else {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                if c != '$' {
                    out.push(c.to_string());
                }
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
}

fn segment_formula(s: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '\\' {
            i += 1;
            while i < chars.len() && chars[i].is_alphabetic() {
                i += 1;
            }
            if i == start + 1 && i < chars.len() {
                i += 1;
            }
        } else if c.is_ascii_digit() {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
        } else if c.is_alphabetic() && !is_cjk(c) {
            while i < chars.len() && chars[i].is_alphabetic() && !is_cjk(chars[i]) {
                i += 1;
            }
        } else {
            i += 1;
        }
        out.push(chars[start..i].iter().collect());
    }
}

/// Splits canonical text into model tokens.
pub fn segment(text: &CanonicalText) -> Vec<String> {
    let s = text.text();
    let mut out = Vec::new();
    let mut pos = 0;
    for span in text.math_spans() {
        segment_prose(&s[pos..span.offset], &mut out);
        segment_formula(&s[span.offset..span.end()], &mut out);
        pos = span.end();
    }
    segment_prose(&s[pos..], &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Tokens seen at least `min_freq` times, most frequent first, ties by
    /// token order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a CanonicalText>, min_freq: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            for tok in segment(t) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens: Vec<String> = [PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]
            .into_iter()
            .chain(kept.into_iter().map(|(t, _)| t).filter(|t| t != PAD_TOKEN && t != UNK_TOKEN))
            .collect();
        Vocab::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &CanonicalText) -> Vec<u32> {
        segment(text).iter().map(|t| self.id(t)).collect()
    }
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}
