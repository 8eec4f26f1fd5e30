//! Lossless lexer for the interior of a `$...$` math segment.

use super::MathError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// `\name` (letters) or `\c` (a single non-letter character).
    Command,
    OpenBrace,
    CloseBrace,
    OpenBracket,
    CloseBracket,
    Digit,
    Letter,
    Operator,
    Whitespace,
    /// Anything else: non-ASCII symbols, stray punctuation.
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    /// Byte offset into the lexed source.
    pub offset: usize,
}

impl Token {
    /// Command name without the leading backslash.
    pub fn command_name(&self) -> Option<&str> {
        match self.kind {
            TokenKind::Command => Some(&self.lexeme[1..]),
            _ => None,
        }
    }
}

const MULTI_CHAR_OPERATORS: [&str; 3] = ["<=", ">=", "!="];
const OPERATOR_CHARS: &str = "+-*/=<>!^_()|,.;:'?&%~@#\"`";

/// Splits `src` into tokens. Never fails; the concatenated lexemes equal `src`.
pub fn lex(src: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some((offset, c)) = chars.next() {
        let token = |kind, end: usize| Token {
            kind,
            lexeme: src[offset..end].to_string(),
            offset,
        };
        let next_end = |chars: &mut std::iter::Peekable<std::str::CharIndices>| {
            chars.peek().map(|&(i, _)| i).unwrap_or(src.len())
        };
        match c {
            '\\' => {
                let mut end = next_end(&mut chars);
                match chars.peek().copied() {
                    Some((_, n)) if n.is_ascii_alphabetic() => {
                        while let Some(&(_, n)) = chars.peek() {
                            if !n.is_ascii_alphabetic() {
                                break;
                            }
                            chars.next();
                        }
                        end = next_end(&mut chars);
                    }
                    Some((_, _)) => {
                        chars.next();
                        end = next_end(&mut chars);
                    }
                    None => {}
                }
                tokens.push(token(TokenKind::Command, end));
            }
            '{' => tokens.push(token(TokenKind::OpenBrace, offset + 1)),
            '}' => tokens.push(token(TokenKind::CloseBrace, offset + 1)),
            '[' => tokens.push(token(TokenKind::OpenBracket, offset + 1)),
            ']' => tokens.push(token(TokenKind::CloseBracket, offset + 1)),
            c if c.is_ascii_digit() => tokens.push(token(TokenKind::Digit, offset + 1)),
            c if c.is_alphabetic() => {
                tokens.push(token(TokenKind::Letter, offset + c.len_utf8()))
            }
            c if c.is_whitespace() => {
                while let Some(&(_, n)) = chars.peek() {
                    if !n.is_whitespace() {
                        break;
                    }
                    chars.next();
                }
                let end = next_end(&mut chars);
                tokens.push(token(TokenKind::Whitespace, end));
            }
            c if OPERATOR_CHARS.contains(c) => {
                let rest = &src[offset..];
                if let Some(op) = MULTI_CHAR_OPERATORS.iter().find(|op| rest.starts_with(**op)) {
                    chars.next();
                    tokens.push(token(TokenKind::Operator, offset + op.len()));
                } else {
                    tokens.push(token(TokenKind::Operator, offset + 1));
                }
            }
            c => tokens.push(token(TokenKind::Other, offset + c.len_utf8())),
        }
    }
    tokens
}

/// Lexes `src` and checks that `{}` and `[]` are balanced and properly nested.
pub fn tokenize_math(src: &str) -> Result<Vec<Token>, MathError> {
    let tokens = lex(src);
    let mut open: Vec<&Token> = Vec::new();
    for tok in &tokens {
        match tok.kind {
            TokenKind::OpenBrace | TokenKind::OpenBracket => open.push(tok),
            TokenKind::CloseBrace | TokenKind::CloseBracket => {
                let want = if tok.kind == TokenKind::CloseBrace {
                    TokenKind::OpenBrace
                } else {
                    TokenKind::OpenBracket
                };
                match open.pop() {
                    Some(o) if o.kind == want => {}
                    _ => {
                        return Err(MathError::UnbalancedDelimiter {
                            offset: tok.offset,
                            delimiter: tok.lexeme.chars().next().unwrap_or('?'),
                        })
                    }
                }
            }
            _ => {}
        }
    }
    if let Some(o) = open.pop() {
        return Err(MathError::UnbalancedDelimiter {
            offset: o.offset,
            delimiter: o.lexeme.chars().next().unwrap_or('?'),
        });
    }
    Ok(tokens)
}
