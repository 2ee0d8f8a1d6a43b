//! A small hand-rolled lexer shared by the protocol and program grammars.

use std::fmt;

use thiserror::Error;

use crate::syntax::terms::Span;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    // punctuation
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
    Colon,
    Dot,
    Bang,
    Query,
    Arrow,     // ->
    FatArrow,  // =>
    Eq,        // =
    EqEq,      // ==
    Lt,
    Leq,
    Star,
    Plus,
    Minus,
    AndAnd,
    OrOr,
    Caret,
    Prime, // '
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "{s}"),
            Tok::Int(n) => write!(f, "{n}"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::LBrace => write!(f, "{{"),
            Tok::RBrace => write!(f, "}}"),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
            Tok::Comma => write!(f, ","),
            Tok::Semi => write!(f, ";"),
            Tok::Colon => write!(f, ":"),
            Tok::Dot => write!(f, "."),
            Tok::Bang => write!(f, "!"),
            Tok::Query => write!(f, "?"),
            Tok::Arrow => write!(f, "->"),
            Tok::FatArrow => write!(f, "=>"),
            Tok::Eq => write!(f, "="),
            Tok::EqEq => write!(f, "=="),
            Tok::Lt => write!(f, "<"),
            Tok::Leq => write!(f, "<="),
            Tok::Star => write!(f, "*"),
            Tok::Plus => write!(f, "+"),
            Tok::Minus => write!(f, "-"),
            Tok::AndAnd => write!(f, "&&"),
            Tok::OrOr => write!(f, "||"),
            Tok::Caret => write!(f, "^"),
            Tok::Prime => write!(f, "'"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{msg} at {span}")]
pub struct ParseError {
    pub msg: String,
    pub span: Span,
}

impl ParseError {
    pub fn new(msg: impl Into<String>, span: Span) -> Self {
        ParseError {
            msg: msg.into(),
            span,
        }
    }
}

pub fn lex(src: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let mut out = Vec::new();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let mut chars = src.chars().peekable();
    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }
    loop {
        let span = Span { line, col };
        let Some(&c) = chars.peek() else { break };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '/' => {
                bump!();
                if chars.peek() == Some(&'/') {
                    while let Some(&c) = chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        bump!();
                    }
                } else {
                    return Err(ParseError::new("unexpected '/'", span));
                }
            }
            '{' => {
                bump!();
                out.push((Tok::LBrace, span));
            }
            '}' => {
                bump!();
                out.push((Tok::RBrace, span));
            }
            '(' => {
                bump!();
                out.push((Tok::LParen, span));
            }
            ')' => {
                bump!();
                out.push((Tok::RParen, span));
            }
            ',' => {
                bump!();
                out.push((Tok::Comma, span));
            }
            ';' => {
                bump!();
                out.push((Tok::Semi, span));
            }
            ':' => {
                bump!();
                out.push((Tok::Colon, span));
            }
            '.' => {
                bump!();
                out.push((Tok::Dot, span));
            }
            '!' => {
                bump!();
                out.push((Tok::Bang, span));
            }
            '?' => {
                bump!();
                out.push((Tok::Query, span));
            }
            '\'' => {
                bump!();
                out.push((Tok::Prime, span));
            }
            '*' => {
                bump!();
                out.push((Tok::Star, span));
            }
            '+' => {
                bump!();
                out.push((Tok::Plus, span));
            }
            '^' => {
                bump!();
                out.push((Tok::Caret, span));
            }
            '-' => {
                bump!();
                if chars.peek() == Some(&'>') {
                    bump!();
                    out.push((Tok::Arrow, span));
                } else {
                    out.push((Tok::Minus, span));
                }
            }
            '=' => {
                bump!();
                match chars.peek() {
                    Some('=') => {
                        bump!();
                        out.push((Tok::EqEq, span));
                    }
                    Some('>') => {
                        bump!();
                        out.push((Tok::FatArrow, span));
                    }
                    _ => out.push((Tok::Eq, span)),
                }
            }
            '<' => {
                bump!();
                if chars.peek() == Some(&'=') {
                    bump!();
                    out.push((Tok::Leq, span));
                } else {
                    out.push((Tok::Lt, span));
                }
            }
            '&' => {
                bump!();
                if chars.peek() == Some(&'&') {
                    bump!();
                    out.push((Tok::AndAnd, span));
                } else {
                    return Err(ParseError::new("expected '&&'", span));
                }
            }
            '|' => {
                bump!();
                if chars.peek() == Some(&'|') {
                    bump!();
                    out.push((Tok::OrOr, span));
                } else {
                    return Err(ParseError::new("expected '||'", span));
                }
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        Some('"') => break,
                        Some('\\') => match bump!() {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some(c) => s.push(c),
                            None => return Err(ParseError::new("unterminated string", span)),
                        },
                        Some(c) => s.push(c),
                        None => return Err(ParseError::new("unterminated string", span)),
                    }
                }
                out.push((Tok::Str(s), span));
            }
            c if c.is_ascii_digit() => {
                let mut n: i64 = 0;
                while let Some(&c) = chars.peek() {
                    if let Some(d) = c.to_digit(10) {
                        n = n * 10 + d as i64;
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push((Tok::Int(n), span));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(s), span));
            }
            other => {
                return Err(ParseError::new(format!("unexpected character {other:?}"), span));
            }
        }
    }
    Ok(out)
}
