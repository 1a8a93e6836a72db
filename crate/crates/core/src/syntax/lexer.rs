use std::fmt;

use super::error::{Pos, SyntaxError};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    /// `x'` on the left of an ODE equation.
    Primed(String),
    Num(f64),
    True,
    False,
    Forall,
    Exists,
    Min,
    Max,
    In,
    Choice,
    Assign,
    Arrow,
    Bang,
    Amp,
    Pipe,
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
    Question,
    Semi,
    Comma,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Star,
    Slash,
    Plus,
    Minus,
    Colon,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(name) => return write!(f, "identifier `{name}`"),
            Tok::Primed(name) => return write!(f, "`{name}'`"),
            Tok::Num(v) => return write!(f, "number `{v}`"),
            Tok::True => "`true`",
            Tok::False => "`false`",
            Tok::Forall => "`forall`",
            Tok::Exists => "`exists`",
            Tok::Min => "`min`",
            Tok::Max => "`max`",
            Tok::In => "`in`",
            Tok::Choice => "`++`",
            Tok::Assign => "`:=`",
            Tok::Arrow => "`->`",
            Tok::Bang => "`!`",
            Tok::Amp => "`&`",
            Tok::Pipe => "`|`",
            Tok::Lt => "`<`",
            Tok::Le => "`<=`",
            Tok::Eq => "`=`",
            Tok::Ge => "`>=`",
            Tok::Gt => "`>`",
            Tok::Question => "`?`",
            Tok::Semi => "`;`",
            Tok::Comma => "`,`",
            Tok::LBrace => "`{`",
            Tok::RBrace => "`}`",
            Tok::LBracket => "`[`",
            Tok::RBracket => "`]`",
            Tok::LParen => "`(`",
            Tok::RParen => "`)`",
            Tok::Star => "`*`",
            Tok::Slash => "`/`",
            Tok::Plus => "`+`",
            Tok::Minus => "`-`",
            Tok::Colon => "`:`",
            Tok::Eof => "end of input",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "true" => Tok::True,
        "false" => Tok::False,
        "forall" => Tok::Forall,
        "exists" => Tok::Exists,
        "min" => Tok::Min,
        "max" => Tok::Max,
        "in" => Tok::In,
        _ => return None,
    })
}

pub fn is_keyword(word: &str) -> bool {
    keyword(word).is_some()
}

/// Splits `src` into tokens. `first_line` is the line number reported for the
/// first line of `src`, so that sections cut out of a model file keep their
/// original positions.
pub fn tokenize(src: &str, first_line: usize) -> Result<Vec<Token>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = first_line;
    let mut line_start = 0;

    while i < bytes.len() {
        let c = bytes[i];
        let pos = Pos {
            line,
            col: i - line_start + 1,
        };
        if c == b'\n' {
            i += 1;
            line += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if !c.is_ascii() {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(SyntaxError::new(
                pos,
                format!("unexpected character `{ch}`"),
                Vec::new(),
            ));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &src[start..i];
            let tok = if i < bytes.len() && bytes[i] == b'\'' {
                i += 1;
                Tok::Primed(word.to_string())
            } else {
                keyword(word).unwrap_or_else(|| Tok::Ident(word.to_string()))
            };
            out.push(Token { tok, pos });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let digits = |i: &mut usize| {
                let s = *i;
                while *i < bytes.len() && bytes[*i].is_ascii_digit() {
                    *i += 1;
                }
                *i > s
            };
            digits(&mut i);
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                if !digits(&mut i) {
                    return Err(SyntaxError::new(
                        pos,
                        "digits expected after `.`".into(),
                        Vec::new(),
                    ));
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                i += 1;
                if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                    i += 1;
                }
                if !digits(&mut i) {
                    return Err(SyntaxError::new(
                        pos,
                        "digits expected in exponent".into(),
                        Vec::new(),
                    ));
                }
            }
            if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                return Err(SyntaxError::new(pos, "malformed number".into(), Vec::new()));
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| {
                SyntaxError::new(pos, format!("malformed number `{text}`"), Vec::new())
            })?;
            if !value.is_finite() {
                return Err(SyntaxError::new(
                    pos,
                    format!("number `{text}` is out of range"),
                    Vec::new(),
                ));
            }
            out.push(Token {
                tok: Tok::Num(value),
                pos,
            });
            continue;
        }
        let next = bytes.get(i + 1).copied();
        let (tok, len) = match (c, next) {
            (b'+', Some(b'+')) => (Tok::Choice, 2),
            (b':', Some(b'=')) => (Tok::Assign, 2),
            (b'-', Some(b'>')) => (Tok::Arrow, 2),
            (b'<', Some(b'=')) => (Tok::Le, 2),
            (b'>', Some(b'=')) => (Tok::Ge, 2),
            (b'!', _) => (Tok::Bang, 1),
            (b'&', _) => (Tok::Amp, 1),
            (b'|', _) => (Tok::Pipe, 1),
            (b'<', _) => (Tok::Lt, 1),
            (b'=', _) => (Tok::Eq, 1),
            (b'>', _) => (Tok::Gt, 1),
            (b'?', _) => (Tok::Question, 1),
            (b';', _) => (Tok::Semi, 1),
            (b',', _) => (Tok::Comma, 1),
            (b'{', _) => (Tok::LBrace, 1),
            (b'}', _) => (Tok::RBrace, 1),
            (b'[', _) => (Tok::LBracket, 1),
            (b']', _) => (Tok::RBracket, 1),
            (b'(', _) => (Tok::LParen, 1),
            (b')', _) => (Tok::RParen, 1),
            (b'*', _) => (Tok::Star, 1),
            (b'/', _) => (Tok::Slash, 1),
            (b'+', _) => (Tok::Plus, 1),
            (b'-', _) => (Tok::Minus, 1),
            (b':', _) => (Tok::Colon, 1),
            _ => {
                return Err(SyntaxError::new(
                    pos,
                    format!("unexpected character `{}`", c as char),
                    Vec::new(),
                ))
            }
        };
        out.push(Token { tok, pos });
        i += len;
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: Pos {
            line,
            col: bytes.len() - line_start + 1,
        },
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src, 1)
            .unwrap()
            .into_iter()
            .map(|t| t.tok)
            .collect()
    }

    #[test]
    fn operators_and_primes() {
        assert_eq!(
            toks("k1'=x++y:=*;->"),
            vec![
                Tok::Primed("k1".into()),
                Tok::Eq,
                Tok::Ident("x".into()),
                Tok::Choice,
                Tok::Ident("y".into()),
                Tok::Assign,
                Tok::Star,
                Tok::Semi,
                Tok::Arrow,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn numbers() {
        assert_eq!(
            toks("1 2.5 3e-2 4.0E+1"),
            vec![
                Tok::Num(1.0),
                Tok::Num(2.5),
                Tok::Num(0.03),
                Tok::Num(40.0),
                Tok::Eof
            ]
        );
        assert!(tokenize("1.", 1).is_err());
        assert!(tokenize("2e", 1).is_err());
        assert!(tokenize("3x", 1).is_err());
        assert!(tokenize("1e999", 1).is_err());
    }

    #[test]
    fn positions_and_comments() {
        let t = tokenize("# note\n  x <= 1", 5).unwrap();
        assert_eq!(t[0].pos, Pos { line: 6, col: 3 });
        assert_eq!(t[1].pos, Pos { line: 6, col: 5 });
        assert_eq!(t[3].tok, Tok::Eof);
    }

    #[test]
    fn rejects_non_ascii() {
        let err = tokenize("k1 ≥ 0", 1).unwrap_err();
        assert_eq!(err.pos, Pos { line: 1, col: 4 });
    }
}
