//! Tokenizer for the surface language.

use thiserror::Error;

use crate::surface::Span;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Number(f64),
    Ident(String),
    // Keywords.
    Let,
    Rec,
    In,
    If,
    Then,
    Else,
    Fun,
    Match,
    With,
    Sample,
    Weight,
    LogWeight,
    Resample,
    True,
    False,
    Underscore,
    // Punctuation and operators.
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Semi,
    Dot,
    Arrow,
    Backslash,
    Bar,
    ColonColon,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Le,
    Gt,
    Ge,
    EqSym,
    NeSym,
    AndAnd,
    Bang,
    Eof,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("lexical error at {span}: {msg}")]
pub struct LexError {
    pub span: Span,
    pub msg: String,
}

pub fn lex(src: &str) -> Result<Vec<Token>, LexError> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    macro_rules! bump {
        () => {{
            if bytes[i] == b'\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }
    while i < bytes.len() {
        let span = Span { line, col };
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => bump!(),
            b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'/' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    bump!();
                }
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    bump!();
                }
                if i < bytes.len()
                    && bytes[i] == b'.'
                    && i + 1 < bytes.len()
                    && bytes[i + 1].is_ascii_digit()
                {
                    bump!();
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        bump!();
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while i < j {
                            bump!();
                        }
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            bump!();
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| LexError {
                    span,
                    msg: format!("malformed number literal `{text}`"),
                })?;
                if !value.is_finite() {
                    return Err(LexError {
                        span,
                        msg: format!("number literal `{text}` overflows to infinity"),
                    });
                }
                out.push(Token { tok: Tok::Number(value), span });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'\'')
                {
                    bump!();
                }
                let word = &src[start..i];
                let tok = match word {
                    "let" => Tok::Let,
                    "rec" => Tok::Rec,
                    "in" => Tok::In,
                    "if" => Tok::If,
                    "then" => Tok::Then,
                    "else" => Tok::Else,
                    "fun" => Tok::Fun,
                    "match" => Tok::Match,
                    "with" => Tok::With,
                    "sample" => Tok::Sample,
                    "weight" => Tok::Weight,
                    "logweight" => Tok::LogWeight,
                    "resample" => Tok::Resample,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "_" => Tok::Underscore,
                    _ => Tok::Ident(word.to_string()),
                };
                out.push(Token { tok, span });
            }
            b'(' => {
                bump!();
                out.push(Token { tok: Tok::LParen, span });
            }
            b')' => {
                bump!();
                out.push(Token { tok: Tok::RParen, span });
            }
            b'[' => {
                bump!();
                out.push(Token { tok: Tok::LBracket, span });
            }
            b']' => {
                bump!();
                out.push(Token { tok: Tok::RBracket, span });
            }
            b'{' => {
                bump!();
                out.push(Token { tok: Tok::LBrace, span });
            }
            b'}' => {
                bump!();
                out.push(Token { tok: Tok::RBrace, span });
            }
            b',' => {
                bump!();
                out.push(Token { tok: Tok::Comma, span });
            }
            b';' => {
                bump!();
                out.push(Token { tok: Tok::Semi, span });
            }
            b'.' => {
                bump!();
                out.push(Token { tok: Tok::Dot, span });
            }
            b'\\' => {
                bump!();
                out.push(Token { tok: Tok::Backslash, span });
            }
            b'|' => {
                bump!();
                out.push(Token { tok: Tok::Bar, span });
            }
            b':' => {
                bump!();
                if i < bytes.len() && bytes[i] == b':' {
                    bump!();
                    out.push(Token { tok: Tok::ColonColon, span });
                } else {
                    out.push(Token { tok: Tok::Colon, span });
                }
            }
            b'+' => {
                bump!();
                out.push(Token { tok: Tok::Plus, span });
            }
            b'-' => {
                bump!();
                if i < bytes.len() && bytes[i] == b'>' {
                    bump!();
                    out.push(Token { tok: Tok::Arrow, span });
                } else {
                    out.push(Token { tok: Tok::Minus, span });
                }
            }
            b'*' => {
                bump!();
                out.push(Token { tok: Tok::Star, span });
            }
            b'/' => {
                bump!();
                out.push(Token { tok: Tok::Slash, span });
            }
            b'<' => {
                bump!();
                if i < bytes.len() && bytes[i] == b'=' {
                    bump!();
                    out.push(Token { tok: Tok::Le, span });
                } else {
                    out.push(Token { tok: Tok::Lt, span });
                }
            }
            b'>' => {
                bump!();
                if i < bytes.len() && bytes[i] == b'=' {
                    bump!();
                    out.push(Token { tok: Tok::Ge, span });
                } else {
                    out.push(Token { tok: Tok::Gt, span });
                }
            }
            b'=' => {
                bump!();
                out.push(Token { tok: Tok::EqSym, span });
            }
            b'!' => {
                bump!();
                if i < bytes.len() && bytes[i] == b'=' {
                    bump!();
                    out.push(Token { tok: Tok::NeSym, span });
                } else {
                    out.push(Token { tok: Tok::Bang, span });
                }
            }
            b'&' => {
                bump!();
                if i < bytes.len() && bytes[i] == b'&' {
                    bump!();
                    out.push(Token { tok: Tok::AndAnd, span });
                } else {
                    return Err(LexError { span, msg: "expected `&&`".into() });
                }
            }
            _ => {
                return Err(LexError {
                    span,
                    msg: format!("unexpected character `{}`", &src[i..].chars().next().unwrap()),
                })
            }
        }
    }
    out.push(Token { tok: Tok::Eof, span: Span { line, col } });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_operators_and_keywords() {
        let toks = lex("let x = 1.5 in x <= 2 // tail\n&& true").unwrap();
        let kinds: Vec<Tok> = toks.into_iter().map(|t| t.tok).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Let,
                Tok::Ident("x".into()),
                Tok::EqSym,
                Tok::Number(1.5),
                Tok::In,
                Tok::Ident("x".into()),
                Tok::Le,
                Tok::Number(2.0),
                Tok::AndAnd,
                Tok::True,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn tracks_positions() {
        let toks = lex("x\n  y").unwrap();
        assert_eq!(toks[0].span, Span { line: 1, col: 1 });
        assert_eq!(toks[1].span, Span { line: 2, col: 3 });
    }

    #[test]
    fn scientific_notation_and_distinct_minus() {
        let toks = lex("2.5e3 1e-3 x -> y - 1").unwrap();
        assert_eq!(toks[0].tok, Tok::Number(2500.0));
        assert_eq!(toks[1].tok, Tok::Number(0.001));
        assert!(toks.iter().any(|t| t.tok == Tok::Arrow));
        assert!(toks.iter().any(|t| t.tok == Tok::Minus));
    }

    #[test]
    fn rejects_stray_characters() {
        assert!(lex("x # y").is_err());
        assert!(lex("a & b").is_err());
    }
}
