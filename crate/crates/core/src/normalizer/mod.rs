//! Exercise normalization.
//!
//! Presentation variants of the same exercise (LaTeX font wrappers, text-mode
//! operators, HTML markup, locale spellings of technical terms) are rewritten
//! into one canonical surface form so identical content compares byte-equal.
//!
//! Formulas keep their `$` delimiters and their interior is replaced by a
//! prefix-function serialization:
//!
//! ```
//! use fse::normalizer::{normalize_exercise, TermTable};
//!
//! let out = normalize_exercise(r"If $\sqrt[3x\text{-}10]{2\mathrm{x}+y-5}$ holds", &TermTable::default()).unwrap();
//! assert_eq!(out.text(), "If $root(2x+y-5,3x-10)$ holds");
//! ```

mod ast;
mod lexer;
mod markup;
mod parser;
mod rewrite;
mod terms;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{serialize_canonical, MathAst, NodeKind, CANONICAL_FUNCTIONS, PRESENTATION_COMMANDS};
pub use lexer::{lex, tokenize_math, Token, TokenKind};
pub use markup::{normalize_spacing, segments, strip_tags, Segment};
pub use parser::parse_math;
pub use rewrite::{rewrite_ast, rewrite_with_passes};
pub use terms::TermTable;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at token {index}: expected {expected}")]
pub struct ParseError {
    pub index: usize,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MathError {
    #[error("unbalanced '{delimiter}' at byte {offset}")]
    UnbalancedDelimiter { offset: usize, delimiter: char },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot normalize formula at bytes {offset}..{}: {source}", offset + len)]
pub struct NormalizationError {
    /// Byte span of the formula (with delimiters) in the raw text.
    pub offset: usize,
    pub len: usize,
    pub source: MathError,
}

#[derive(Debug, Error)]
pub enum TermTableError {
    #[error("term table line {line}: expected two tab-separated columns")]
    Malformed { line: usize },
    #[error("term table contains an empty surface term")]
    EmptyTerm,
    #[error("canonical term {0:?} contains markup characters")]
    MarkupInCanonical(String),
    #[error("canonical term {term:?} is rewritten again to {rewritten:?}")]
    NotIdempotent { term: String, rewritten: String },
    #[error("reading term table {0}: {1}")]
    Io(String, #[source] std::io::Error),
}

/// Byte range `offset..offset + len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub offset: usize,
    pub len: usize,
}

impl Span {
    pub fn end(&self) -> usize {
        self.offset + self.len
    }
}

/// Normalized exercise text. Serializes as a plain string; `math_spans` are
/// recovered from the `$` delimiters on deserialization.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct CanonicalText {
    text: String,
    math_spans: Vec<Span>,
}

impl CanonicalText {
    /// Wraps text that is already canonical (or deliberately raw), locating its
    /// formulas without rewriting anything.
    pub fn from_canonical(text: impl Into<String>) -> Self {
        let text = text.into();
        let math_spans = segments(&text)
            .into_iter()
            .filter_map(|s| match s {
                Segment::Math { src, offset, .. } => Some(Span {
                    offset,
                    len: src.len(),
                }),
                Segment::Prose(_) => None,
            })
            .collect();
        CanonicalText { text, math_spans }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn math_spans(&self) -> &[Span] {
        &self.math_spans
    }

    pub fn formulas(&self) -> impl Iterator<Item = &str> {
        self.math_spans.iter().map(|s| &self.text[s.offset..s.end()])
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    /// Joins texts with `sep`, shifting formula spans accordingly.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a CanonicalText>, sep: &str) -> Self {
        let mut out = CanonicalText::default();
        for part in parts {
            if part.is_empty() {
                continue;
            }
            if !out.text.is_empty() {
                out.text.push_str(sep);
            }
            let base = out.text.len();
            out.text.push_str(&part.text);
            out.math_spans.extend(part.math_spans.iter().map(|s| Span {
                offset: s.offset + base,
                len: s.len,
            }));
        }
        out
    }
}

impl From<String> for CanonicalText {
    fn from(s: String) -> Self {
        CanonicalText::from_canonical(s)
    }
}

impl From<CanonicalText> for String {
    fn from(c: CanonicalText) -> Self {
        c.text
    }
}

impl std::fmt::Display for CanonicalText {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.text)
    }
}

/// A formula kept verbatim in lenient mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MathFallback {
    /// Span of the verbatim formula (with delimiters) in the canonical text.
    pub span: Span,
    pub error: MathError,
}

/// Tokenizes, parses, rewrites and serializes one formula interior.
pub fn canonical_formula(src: &str) -> Result<String, MathError> {
    let tokens = tokenize_math(src)?;
    let ast = parse_math(&tokens)?;
    Ok(serialize_canonical(&rewrite_ast(ast)))
}

/// Normalizes with the default (strict) settings.
pub fn normalize_exercise(raw: &str, terms: &TermTable) -> Result<CanonicalText, NormalizationError> {
    Normalizer::new(terms.clone()).normalize(raw)
}

#[derive(Debug, Clone, Default)]
pub struct Normalizer {
    terms: TermTable,
    lenient: bool,
}

enum Piece {
    Prose(String),
    Math(String),
    Verbatim(String, MathError),
}

impl Normalizer {
    pub fn new(terms: TermTable) -> Self {
        Normalizer {
            terms,
            lenient: false,
        }
    }

    /// Keep unparseable formulas verbatim instead of failing.
    pub fn lenient(mut self, lenient: bool) -> Self {
        self.lenient = lenient;
        self
    }

    pub fn terms(&self) -> &TermTable {
        &self.terms
    }

    pub fn normalize(&self, raw: &str) -> Result<CanonicalText, NormalizationError> {
        self.normalize_with_report(raw).map(|(text, _)| text)
    }

    pub fn normalize_with_report(
        &self,
        raw: &str,
    ) -> Result<(CanonicalText, Vec<MathFallback>), NormalizationError> {
        let mut pieces: Vec<Piece> = Vec::new();
        for seg in segments(raw) {
            match seg {
                Segment::Prose(p) => push_prose(&mut pieces, strip_tags(p)),
                Segment::Math { src, raw: whole, .. } => match canonical_formula(src) {
                    Ok(canon) if canon.is_empty() => {}
                    Ok(canon) => pieces.push(Piece::Math(canon)),
                    Err(error) if self.lenient => pieces.push(Piece::Verbatim(whole.to_string(), error)),
                    Err(source) => {
                        let offset = whole.as_ptr() as usize - raw.as_ptr() as usize;
                        return Err(NormalizationError {
                            offset,
                            len: whole.len(),
                            source,
                        });
                    }
                },
            }
        }

        let mut out = CanonicalText::default();
        let mut fallbacks = Vec::new();
        let last = pieces.len().saturating_sub(1);
        for (i, piece) in pieces.into_iter().enumerate() {
            match piece {
                Piece::Prose(p) => {
                    let p = normalize_spacing(&p, i == 0, i == last);
                    let p = self.terms.apply(&p);
                    out.text.push_str(&normalize_spacing(&p, i == 0, i == last));
                }
                Piece::Math(m) => {
                    out.text.push('$');
                    out.math_spans.push(Span {
                        offset: out.text.len(),
                        len: m.len(),
                    });
                    out.text.push_str(&m);
                    out.text.push('$');
                }
                Piece::Verbatim(v, error) => {
                    let start = out.text.len();
                    out.text.push_str(&v);
                    // the verbatim formula is still a formula span
                    if let Some(Segment::Math { src, offset, .. }) = segments(&v).into_iter().next() {
                        out.math_spans.push(Span {
                            offset: start + offset,
                            len: src.len(),
                        });
                    }
                    fallbacks.push(MathFallback {
                        span: Span {
                            offset: start,
                            len: v.len(),
                        },
                        error,
                    });
                }
            }
        }
        Ok((out, fallbacks))
    }
}

fn push_prose(pieces: &mut Vec<Piece>, p: String) {
    if let Some(Piece::Prose(prev)) = pieces.last_mut() {
        prev.push_str(&p);
    } else {
        pieces.push(Piece::Prose(p));
    }
}
