//! Presentation rewrites applied bottom-up until nothing changes.
//!
//! Rules:
//! - `\mathrm{X}` and the other math-font wrappers become `X`.
//! - `\text{s}` and the other text-mode wrappers become `s` re-lexed as math. A
//!   text-mode operator next to the same operator is dropped (`-\text{-}10` is a
//!   doubled rendering of one minus sign).
//! - sizing and spacing commands (`\left`, `\,`, `\quad`, ...) are removed.
//! - plain groups nested in a sequence are spliced into it, and a one-element
//!   plain group is replaced by its element.
//! - adjacent number literals are joined.

use super::ast::{MathAst, NodeKind};
use super::lexer::tokenize_math;
use super::parser::parse_math;

const TEXT_COMMANDS: &[&str] = &[
    "text", "textrm", "textit", "textbf", "textsf", "texttt", "textnormal", "mbox",
];
const MATH_WRAPPERS: &[&str] = &[
    "mathrm", "mathit", "mathbf", "mathsf", "mathtt", "mathnormal", "boldsymbol", "bm",
];
const REMOVED: &[&str] = &[
    "left", "right", ",", ";", ":", "!", " ", "quad", "qquad", "displaystyle", "textstyle",
    "scriptstyle", "big", "Big", "bigg", "Bigg", "bigl", "bigr", "Bigl", "Bigr",
];

/// Characters kept when text-mode content cannot be parsed as math.
const SAFE_FALLBACK: &str = "+-*/=<>!(),.|'";

/// Rewrites to the fixed point.
pub fn rewrite_ast(ast: MathAst) -> MathAst {
    rewrite_with_passes(ast).0
}

/// Rewrites to the fixed point and reports how many passes changed the tree.
pub fn rewrite_with_passes(ast: MathAst) -> (MathAst, usize) {
    let mut current = ast;
    let mut passes = 0;
    loop {
        let next = rewrite_pass(current.clone());
        if next == current {
            return (current, passes);
        }
        passes += 1;
        current = next;
    }
}

fn rewrite_pass(ast: MathAst) -> MathAst {
    // rewrite the root as the only element of a sequence so it can be spliced
    let mut items = rewrite_children(vec![ast], true);
    match items.len() {
        1 => items.pop().unwrap(),
        _ => MathAst::group("", items),
    }
}

/// What a node turns into once its own wrapper is removed.
enum Replacement {
    Keep(MathAst),
    Splice(Vec<MathAst>),
    /// Content of a text-mode wrapper.
    Text(Vec<MathAst>),
    Remove,
}

fn rewrite_node(node: MathAst) -> Replacement {
    let MathAst {
        kind,
        payload,
        children,
    } = node;
    match kind {
        NodeKind::Function if REMOVED.contains(&payload.as_str()) && children.is_empty() => {
            Replacement::Remove
        }
        NodeKind::Function if MATH_WRAPPERS.contains(&payload.as_str()) => {
            let inner = rewrite_children(children, true);
            Replacement::Splice(inner)
        }
        NodeKind::Function if TEXT_COMMANDS.contains(&payload.as_str()) => {
            let raw: String = children.iter().map(|c| c.payload.as_str()).collect();
            Replacement::Text(text_as_math(&raw))
        }
        NodeKind::Function => {
            let args = children
                .into_iter()
                .map(|c| {
                    let mut items = rewrite_children(vec![c], true);
                    if items.len() == 1 {
                        items.pop().unwrap()
                    } else {
                        MathAst::group("", items)
                    }
                })
                .collect();
            Replacement::Keep(MathAst::function(payload, args))
        }
        NodeKind::Group if payload.is_empty() => Replacement::Splice(rewrite_children(children, true)),
        NodeKind::Group => Replacement::Keep(MathAst::group(&payload, rewrite_children(children, true))),
        _ => Replacement::Keep(MathAst {
            kind,
            payload,
            children,
        }),
    }
}

fn text_as_math(raw: &str) -> Vec<MathAst> {
    let parsed = tokenize_math(raw)
        .ok()
        .and_then(|toks| parse_math(&toks).ok());
    let ast = match parsed {
        Some(ast) => ast,
        None => {
            let safe: String = raw
                .chars()
                .filter(|c| c.is_alphanumeric() || SAFE_FALLBACK.contains(*c))
                .collect();
            return if safe.is_empty() {
                Vec::new()
            } else {
                vec![MathAst::symbol(safe)]
            };
        }
    };
    let mut items = rewrite_children(vec![ast], true);
    // a lone group of content collapses into its items
    if items.len() == 1 && items[0].is_plain_group() {
        return items.pop().unwrap().children;
    }
    items.retain(|n| !(n.is_plain_group() && n.children.is_empty()));
    items
}

/// Rewrites a sequence of siblings. `splice` allows plain groups to dissolve.
fn rewrite_children(children: Vec<MathAst>, splice: bool) -> Vec<MathAst> {
    let mut rewritten: Vec<Replacement> = children.into_iter().map(rewrite_node).collect();
    let mut out: Vec<MathAst> = Vec::new();
    let mut i = 0;
    while i < rewritten.len() {
        match std::mem::replace(&mut rewritten[i], Replacement::Remove) {
            Replacement::Keep(n) => out.push(n),
            Replacement::Remove => {}
            Replacement::Splice(items) => {
                if splice {
                    out.extend(items);
                } else {
                    out.push(MathAst::group("", items));
                }
            }
            Replacement::Text(items) => {
                if let [single] = items.as_slice() {
                    if single.kind == NodeKind::Operator {
                        let prev_same = out.last().is_some_and(|p| p.is_operator(&single.payload));
                        let next_same = matches!(
                            rewritten.get(i + 1),
                            Some(Replacement::Keep(n)) if n.is_operator(&single.payload)
                        );
                        if prev_same || next_same {
                            i += 1;
                            continue;
                        }
                    }
                }
                out.extend(items);
            }
        }
        i += 1;
    }
    merge_numbers(out)
}

fn merge_numbers(items: Vec<MathAst>) -> Vec<MathAst> {
    let mut out: Vec<MathAst> = Vec::with_capacity(items.len());
    for n in items {
        if n.kind == NodeKind::Number {
            if let Some(prev) = out.last_mut() {
                if prev.kind == NodeKind::Number && !(prev.payload.contains('.') && n.payload.contains('.')) {
                    prev.payload.push_str(&n.payload);
                    continue;
                }
            }
        }
        out.push(n);
    }
    out
}
