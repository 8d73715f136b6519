//! Tokenizer for the C subset. Comments are dropped; every token keeps its
//! byte span so later stages can slice the original text.

use super::ir::Span;
use super::FrontendError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Int(i64),
    Float { value: f64, single: bool },
    Str,
    Char(i64),
    Punct(&'static str),
    /// A preprocessor-style line (`#pragma ...`, `#include ...`), including
    /// backslash continuations.
    Directive(String),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

const PUNCTS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "(", ")", "[", "]", "{", "}", ";", ",", "=", "<",
    ">", "+", "-", "*", "/", "%", "&", "|", "^", "!", "~", "?", ":", ".",
];

pub fn tokenize(text: &str) -> Result<Vec<Token>, FrontendError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    let mut line_start = true;
    while pos < bytes.len() {
        let c = bytes[pos];
        if c == b'\n' {
            line_start = true;
            pos += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        if c == b'/' && bytes.get(pos + 1) == Some(&b'/') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(pos + 1) == Some(&b'*') {
            let start = pos;
            pos += 2;
            loop {
                if pos + 1 >= bytes.len() {
                    return Err(FrontendError::syntax(text, start, "unterminated comment"));
                }
                if bytes[pos] == b'*' && bytes[pos + 1] == b'/' {
                    pos += 2;
                    break;
                }
                pos += 1;
            }
            continue;
        }
        let start = pos;
        if c == b'#' && line_start {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                if bytes[pos] == b'\\' && bytes.get(pos + 1) == Some(&b'\n') {
                    pos += 2;
                    continue;
                }
                pos += 1;
            }
            let mut end = pos;
            while end > start && bytes[end - 1].is_ascii_whitespace() {
                end -= 1;
            }
            tokens.push(Token {
                kind: TokenKind::Directive(text[start..end].to_string()),
                span: Span::new(start, end),
            });
            continue;
        }
        line_start = false;
        if c.is_ascii_alphabetic() || c == b'_' {
            while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_') {
                pos += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Ident(text[start..pos].to_string()),
                span: Span::new(start, pos),
            });
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && bytes.get(pos + 1).is_some_and(|b| b.is_ascii_digit())) {
            let (kind, end) = lex_number(text, start)?;
            pos = end;
            tokens.push(Token { kind, span: Span::new(start, pos) });
            continue;
        }
        if c == b'"' || c == b'\'' {
            let quote = c;
            pos += 1;
            while pos < bytes.len() && bytes[pos] != quote {
                if bytes[pos] == b'\\' {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'\n' {
                    return Err(FrontendError::syntax(text, start, "unterminated literal"));
                }
                pos += 1;
            }
            if pos >= bytes.len() {
                return Err(FrontendError::syntax(text, start, "unterminated literal"));
            }
            pos += 1;
            let kind = if quote == b'"' {
                TokenKind::Str
            } else {
                let inner = &text[start + 1..pos - 1];
                TokenKind::Char(char_value(inner))
            };
            tokens.push(Token { kind, span: Span::new(start, pos) });
            continue;
        }
        let rest = &text[pos..];
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                pos += p.len();
                tokens.push(Token { kind: TokenKind::Punct(p), span: Span::new(start, pos) });
            }
            None => {
                return Err(FrontendError::syntax(
                    text,
                    start,
                    format!("unexpected character {:?}", rest.chars().next().unwrap_or(' ')),
                ))
            }
        }
    }
    tokens.push(Token { kind: TokenKind::Eof, span: Span::new(text.len(), text.len()) });
    Ok(tokens)
}

fn char_value(inner: &str) -> i64 {
    let mut chars = inner.chars();
    match (chars.next(), chars.next()) {
        (Some('\\'), Some('n')) => 10,
        (Some('\\'), Some('t')) => 9,
        (Some('\\'), Some('0')) => 0,
        (Some('\\'), Some(c)) => c as i64,
        (Some(c), _) => c as i64,
        _ => 0,
    }
}

fn lex_number(text: &str, start: usize) -> Result<(TokenKind, usize), FrontendError> {
    let bytes = text.as_bytes();
    let mut pos = start;
    if bytes[pos] == b'0' && matches!(bytes.get(pos + 1), Some(b'x') | Some(b'X')) {
        pos += 2;
        let digits_start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_hexdigit() {
            pos += 1;
        }
        let value = i64::from_str_radix(&text[digits_start..pos], 16)
            .map_err(|_| FrontendError::syntax(text, start, "invalid hex literal"))?;
        while pos < bytes.len() && matches!(bytes[pos], b'u' | b'U' | b'l' | b'L') {
            pos += 1;
        }
        return Ok((TokenKind::Int(value), pos));
    }
    let mut is_float = false;
    while pos < bytes.len() && bytes[pos].is_ascii_digit() {
        pos += 1;
    }
    if pos < bytes.len() && bytes[pos] == b'.' {
        is_float = true;
        pos += 1;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
    }
    if pos < bytes.len() && matches!(bytes[pos], b'e' | b'E') {
        let save = pos;
        pos += 1;
        if pos < bytes.len() && matches!(bytes[pos], b'+' | b'-') {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos].is_ascii_digit() {
            is_float = true;
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
        } else {
            pos = save;
        }
    }
    let literal = &text[start..pos];
    if is_float {
        let value: f64 = literal
            .parse()
            .map_err(|_| FrontendError::syntax(text, start, "invalid float literal"))?;
        let single = pos < bytes.len() && matches!(bytes[pos], b'f' | b'F');
        if single || (pos < bytes.len() && matches!(bytes[pos], b'l' | b'L')) {
            pos += 1;
        }
        Ok((TokenKind::Float { value, single }, pos))
    } else {
        let value: i64 = if literal.len() > 1 && literal.starts_with('0') {
            i64::from_str_radix(&literal[1..], 8)
                .map_err(|_| FrontendError::syntax(text, start, "invalid octal literal"))?
        } else {
            literal
                .parse()
                .map_err(|_| FrontendError::syntax(text, start, "integer literal out of range"))?
        };
        if pos < bytes.len() && matches!(bytes[pos], b'f' | b'F') {
            return Err(FrontendError::syntax(text, start, "invalid float suffix on integer"));
        }
        while pos < bytes.len() && matches!(bytes[pos], b'u' | b'U' | b'l' | b'L') {
            pos += 1;
        }
        Ok((TokenKind::Int(value), pos))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn numbers_and_suffixes() {
        assert_eq!(
            kinds("0.0f 1e-3 42 10L 0x1f"),
            vec![
                TokenKind::Float { value: 0.0, single: true },
                TokenKind::Float { value: 1e-3, single: false },
                TokenKind::Int(42),
                TokenKind::Int(10),
                TokenKind::Int(31),
                TokenKind::Eof
            ]
        );
    }

    #[test]
    fn directives_only_at_line_start() {
        let toks = kinds("#pragma omp parallel for\nfor");
        assert_eq!(toks[0], TokenKind::Directive("#pragma omp parallel for".into()));
        assert_eq!(toks[1], TokenKind::Ident("for".into()));
    }

    #[test]
    fn comments_are_skipped_and_spans_are_bytes() {
        let toks = tokenize("a /* x */ += // y\n b").unwrap();
        assert_eq!(toks[1].kind, TokenKind::Punct("+="));
        assert_eq!(toks[1].span, Span::new(10, 12));
    }

    #[test]
    fn unterminated_comment_is_an_error() {
        assert!(tokenize("int /* oops").is_err());
    }
}
