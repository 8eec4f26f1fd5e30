//! Recursive-descent parser from math tokens to [`MathAst`].
//!
//! Grammar, whitespace ignored:
//!
//! ```text
//! sequence := item*
//! item     := atom script*
//! script   := ('^' | '_') argument
//! atom     := number | letter | operator | '{' sequence '}' | '[' sequence ']'
//!           | '(' sequence ')' | command
//! argument := '{' sequence '}' | single token atom
//! ```
//!
//! Infix operators stay in the sequence as operator nodes; no precedence tree is
//! built because nothing downstream reorders terms. An unmatched parenthesis is
//! kept as a plain operator so parentheses never make parsing fail.

use super::ast::MathAst;
use super::lexer::{Token, TokenKind};
use super::ParseError;

const TEXT_COMMANDS: &[&str] = &[
    "text", "textrm", "textit", "textbf", "textsf", "texttt", "textnormal", "mbox",
];
const MATH_WRAPPERS: &[&str] = &[
    "mathrm", "mathit", "mathbf", "mathsf", "mathtt", "mathnormal", "boldsymbol", "bm",
];
const SPACING: &[&str] = &[
    ",", ";", ":", "!", " ", "quad", "qquad", "displaystyle", "textstyle", "scriptstyle",
    "big", "Big", "bigg", "Bigg", "bigl", "bigr", "Bigl", "Bigr",
];

fn operator_alias(name: &str) -> Option<&'static str> {
    Some(match name {
        "cdot" | "times" | "ast" => "*",
        "div" => "/",
        "le" | "leq" | "leqslant" => "<=",
        "ge" | "geq" | "geqslant" => ">=",
        "ne" | "neq" => "!=",
        _ => return None,
    })
}

/// Parses a token list produced by [`tokenize_math`](super::tokenize_math).
pub fn parse_math(tokens: &[Token]) -> Result<MathAst, ParseError> {
    let mut p = Parser {
        tokens,
        pos: 0,
        paren_match: match_parens(tokens),
    };
    let items = p.sequence(Stop::End)?;
    Ok(MathAst::sequence(items))
}

#[derive(Clone, Copy, PartialEq)]
enum Stop {
    End,
    Brace,
    Bracket,
    Paren,
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    /// For each `(` token, whether a `)` closes it within the same brace scope.
    paren_match: Vec<bool>,
}

fn match_parens(tokens: &[Token]) -> Vec<bool> {
    let mut matched = vec![false; tokens.len()];
    // one stack of open-paren positions per brace/bracket scope
    let mut scopes: Vec<Vec<usize>> = vec![Vec::new()];
    for (i, t) in tokens.iter().enumerate() {
        match t.kind {
            TokenKind::OpenBrace | TokenKind::OpenBracket => scopes.push(Vec::new()),
            TokenKind::CloseBrace | TokenKind::CloseBracket => {
                if scopes.len() > 1 {
                    scopes.pop();
                }
            }
            TokenKind::Operator if t.lexeme == "(" => scopes.last_mut().unwrap().push(i),
            TokenKind::Operator if t.lexeme == ")" => {
                if let Some(open) = scopes.last_mut().unwrap().pop() {
                    matched[open] = true;
                    matched[i] = true;
                }
            }
            _ => {}
        }
    }
    matched
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self
            .tokens
            .get(self.pos)
            .is_some_and(|t| t.kind == TokenKind::Whitespace)
        {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<&'a Token> {
        self.skip_ws();
        self.tokens.get(self.pos)
    }

    fn error(&self, expected: &str) -> ParseError {
        ParseError {
            index: self.pos.min(self.tokens.len()),
            expected: expected.to_string(),
        }
    }

    fn at_stop(&mut self, stop: Stop) -> bool {
        match (self.peek(), stop) {
            (None, _) => true,
            (Some(t), Stop::Brace) => t.kind == TokenKind::CloseBrace,
            (Some(t), Stop::Bracket) => t.kind == TokenKind::CloseBracket,
            (Some(t), Stop::Paren) => t.kind == TokenKind::Operator && t.lexeme == ")",
            (Some(t), Stop::End) => {
                // unreachable for balanced input, but keeps the parser total
                t.kind == TokenKind::CloseBrace || t.kind == TokenKind::CloseBracket
            }
        }
    }

    fn sequence(&mut self, stop: Stop) -> Result<Vec<MathAst>, ParseError> {
        let mut items: Vec<MathAst> = Vec::new();
        loop {
            if self.at_stop(stop) {
                if stop == Stop::End {
                    if let Some(t) = self.peek() {
                        // stray closer
                        items.push(MathAst::operator(t.lexeme.clone()));
                        self.pos += 1;
                        continue;
                    }
                }
                return Ok(items);
            }
            let tok = self.peek().expect("checked by at_stop");
            if tok.kind == TokenKind::Operator && (tok.lexeme == "^" || tok.lexeme == "_") {
                let base = items.pop().ok_or_else(|| self.error("an operand before a script"))?;
                let scripted = self.scripts(base)?;
                items.push(scripted);
                continue;
            }
            if tok.kind == TokenKind::Operator && tok.lexeme == "(" && self.paren_match[self.pos] {
                self.pos += 1;
                let inner = self.sequence(Stop::Paren)?;
                self.pos += 1;
                items.push(MathAst::group("(", inner));
                continue;
            }
            if let Some(node) = self.atom()? {
                items.push(node);
            }
        }
    }

    /// Parses one atom. Returns `None` for tokens that produce no node.
    fn atom(&mut self) -> Result<Option<MathAst>, ParseError> {
        let Some(tok) = self.peek() else {
            return Err(self.error("an atom"));
        };
        self.pos += 1;
        let node = match tok.kind {
            TokenKind::Digit => {
                let mut s = tok.lexeme.clone();
                loop {
                    match self.tokens.get(self.pos) {
                        Some(t) if t.kind == TokenKind::Digit => {
                            s.push_str(&t.lexeme);
                            self.pos += 1;
                        }
                        Some(t)
                            if t.lexeme == "."
                                && !s.contains('.')
                                && self
                                    .tokens
                                    .get(self.pos + 1)
                                    .is_some_and(|n| n.kind == TokenKind::Digit) =>
                        {
                            s.push('.');
                            self.pos += 1;
                        }
                        _ => break,
                    }
                }
                MathAst::number(s)
            }
            TokenKind::Letter | TokenKind::Other => MathAst::symbol(tok.lexeme.clone()),
            TokenKind::Operator => MathAst::operator(tok.lexeme.clone()),
            TokenKind::OpenBrace => {
                let inner = self.sequence(Stop::Brace)?;
                self.expect(TokenKind::CloseBrace, "'}'")?;
                MathAst::group("", inner)
            }
            TokenKind::OpenBracket => {
                let inner = self.sequence(Stop::Bracket)?;
                self.expect(TokenKind::CloseBracket, "']'")?;
                MathAst::group("[", inner)
            }
            TokenKind::CloseBrace | TokenKind::CloseBracket => {
                return Err(ParseError {
                    index: self.pos - 1,
                    expected: "an atom".into(),
                })
            }
            TokenKind::Whitespace => return Ok(None),
            TokenKind::Command => return self.command(tok),
        };
        Ok(Some(node))
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(t) if t.kind == kind => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error(what)),
        }
    }

    /// A command argument: a braced sequence or a single-token atom.
    fn argument(&mut self) -> Result<MathAst, ParseError> {
        match self.peek() {
            None => Err(self.error("an argument")),
            Some(t) if matches!(t.kind, TokenKind::CloseBrace | TokenKind::CloseBracket) => {
                Err(self.error("an argument"))
            }
            Some(t) if t.kind == TokenKind::OpenBrace => {
                self.pos += 1;
                let inner = self.sequence(Stop::Brace)?;
                self.expect(TokenKind::CloseBrace, "'}'")?;
                Ok(MathAst::sequence(inner))
            }
            Some(t) if t.kind == TokenKind::Digit => {
                self.pos += 1;
                Ok(MathAst::number(t.lexeme.clone()))
            }
            Some(_) => match self.atom()? {
                Some(node) => Ok(node),
                None => Err(self.error("an argument")),
            },
        }
    }

    fn scripts(&mut self, base: MathAst) -> Result<MathAst, ParseError> {
        let mut base = base;
        let mut sup: Option<MathAst> = None;
        let mut sub: Option<MathAst> = None;
        while let Some(t) = self.peek() {
            if t.kind != TokenKind::Operator || (t.lexeme != "^" && t.lexeme != "_") {
                break;
            }
            let is_sup = t.lexeme == "^";
            if (is_sup && sup.is_some()) || (!is_sup && sub.is_some()) {
                base = attach(base, sub.take(), sup.take());
            }
            self.pos += 1;
            let arg = self.argument().map_err(|mut e| {
                e.expected = "a script argument".into();
                e
            })?;
            if is_sup {
                sup = Some(arg);
            } else {
                sub = Some(arg);
            }
        }
        Ok(attach(base, sub, sup))
    }

    fn command(&mut self, tok: &'a Token) -> Result<Option<MathAst>, ParseError> {
        let name = tok.command_name().unwrap_or("");
        if name.is_empty() {
            return Ok(Some(MathAst::symbol("\\")));
        }
        if let Some(op) = operator_alias(name) {
            return Ok(Some(MathAst::operator(op)));
        }
        let letters = name.chars().all(|c| c.is_ascii_alphabetic());
        match name {
            "sqrt" => {
                let index = match self.peek() {
                    Some(t) if t.kind == TokenKind::OpenBracket => {
                        self.pos += 1;
                        let inner = self.sequence(Stop::Bracket)?;
                        self.expect(TokenKind::CloseBracket, "']'")?;
                        Some(MathAst::sequence(inner))
                    }
                    _ => None,
                };
                let radicand = self.argument()?;
                let index = index.unwrap_or_else(|| MathAst::number("2"));
                Ok(Some(MathAst::function("root", vec![radicand, index])))
            }
            "frac" | "dfrac" | "tfrac" | "cfrac" => {
                let num = self.argument()?;
                let den = self.argument()?;
                Ok(Some(MathAst::function("frac", vec![num, den])))
            }
            n if TEXT_COMMANDS.contains(&n) => {
                let raw = self.raw_argument()?;
                Ok(Some(MathAst::function(n, vec![MathAst::symbol(raw)])))
            }
            n if MATH_WRAPPERS.contains(&n) => {
                let arg = self.argument()?;
                Ok(Some(MathAst::function(n, vec![arg])))
            }
            "left" | "right" => {
                // `\left.` is an invisible delimiter
                if self
                    .tokens
                    .get(self.pos)
                    .is_some_and(|t| t.lexeme == ".")
                {
                    self.pos += 1;
                }
                Ok(Some(MathAst::function(name, vec![])))
            }
            n if SPACING.contains(&n) => Ok(Some(MathAst::function(n, vec![]))),
            n if letters => {
                let mut args = Vec::new();
                while let Some(t) = self.peek() {
                    if t.kind != TokenKind::OpenBrace {
                        break;
                    }
                    args.push(self.argument()?);
                }
                Ok(Some(MathAst::function(n, args)))
            }
            _ => Ok(Some(MathAst::symbol(tok.lexeme.clone()))),
        }
    }

    /// Verbatim source of a text-mode argument (braces stripped).
    fn raw_argument(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::OpenBrace => {
                self.pos += 1;
                let mut depth = 1usize;
                let mut raw = String::new();
                while let Some(t) = self.tokens.get(self.pos) {
                    self.pos += 1;
                    match t.kind {
                        TokenKind::OpenBrace => depth += 1,
                        TokenKind::CloseBrace => {
                            depth -= 1;
                            if depth == 0 {
                                return Ok(raw);
                            }
                        }
                        _ => {}
                    }
                    raw.push_str(&t.lexeme);
                }
                Err(self.error("'}'"))
            }
            Some(t) if !matches!(t.kind, TokenKind::CloseBrace | TokenKind::CloseBracket) => {
                self.pos += 1;
                Ok(t.lexeme.clone())
            }
            _ => Err(self.error("a text argument")),
        }
    }
}

fn attach(base: MathAst, sub: Option<MathAst>, sup: Option<MathAst>) -> MathAst {
    let base = match sub {
        Some(s) => MathAst::function("sub", vec![base, s]),
        None => base,
    };
    match sup {
        Some(e) => MathAst::function("pow", vec![base, e]),
        None => base,
    }
}
