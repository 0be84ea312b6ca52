use thiserror::Error;

use super::{Expr, Func, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    NonIntegerExponent,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{} at byte {offset}", describe(.kind))]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

fn describe(kind: &ParseErrorKind) -> String {
    match kind {
        ParseErrorKind::Syntax(msg) => format!("syntax error: {msg}"),
        ParseErrorKind::UnknownIdentifier(name) => format!("unknown identifier `{name}`"),
        ParseErrorKind::NonIntegerExponent => "exponent must be an integer".to_string(),
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64, bool),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            self.pos += 1;
            return Ok((tok, start));
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self
                .src
                .get(self.pos)
                .is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_')
            {
                self.pos += 1;
            }
            let name = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
            return Ok((Tok::Ident(name), start));
        }
        Err(ParseError {
            kind: ParseErrorKind::Syntax(format!("unexpected character `{}`", c as char)),
            offset: start,
        })
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ParseError> {
        let digits = |lx: &mut Self| {
            let from = lx.pos;
            while lx.src.get(lx.pos).is_some_and(u8::is_ascii_digit) {
                lx.pos += 1;
            }
            lx.pos - from
        };
        let mut integral = true;
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            integral = false;
            n += digits(self);
        }
        if n == 0 {
            return Err(ParseError {
                kind: ParseErrorKind::Syntax("malformed number".into()),
                offset: start,
            });
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
            } else {
                integral = false;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        let value: f64 = text.parse().map_err(|_| ParseError {
            kind: ParseErrorKind::Syntax("malformed number".into()),
            offset: start,
        })?;
        Ok((Tok::Num(value, integral), start))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    at: usize,
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<(), ParseError> {
        let (tok, at) = self.lexer.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            kind: ParseErrorKind::Syntax(msg.into()),
            offset: self.at,
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.tok == tok {
            self.bump()
        } else {
            self.syntax(format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.tok {
                Tok::Plus => {
                    self.bump()?;
                    lhs = Expr::add(&lhs, &self.term()?);
                }
                Tok::Minus => {
                    self.bump()?;
                    lhs = Expr::sub(&lhs, &self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.tok {
                Tok::Star => {
                    self.bump()?;
                    lhs = Expr::mul(&lhs, &self.factor()?);
                }
                Tok::Slash => {
                    self.bump()?;
                    lhs = Expr::div(&lhs, &self.factor()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.base()?;
        if self.tok != Tok::Caret {
            return Ok(base);
        }
        self.bump()?;
        let negative = if self.tok == Tok::Minus {
            self.bump()?;
            true
        } else {
            false
        };
        match self.tok {
            Tok::Num(v, true) if v <= i32::MAX as f64 => {
                self.bump()?;
                let n = v as i32;
                Ok(base.powi(if negative { -n } else { n }))
            }
            Tok::End => self.syntax("expected exponent"),
            _ => Err(ParseError {
                kind: ParseErrorKind::NonIntegerExponent,
                offset: self.at,
            }),
        }
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        match self.tok.clone() {
            Tok::Num(v, _) => {
                self.bump()?;
                Ok(Expr::constant(v))
            }
            Tok::Minus => {
                self.bump()?;
                Ok(Expr::neg(&self.base()?))
            }
            Tok::LParen => {
                self.bump()?;
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let at = self.at;
                self.bump()?;
                if let Some(func) = Func::from_name(&name) {
                    if self.tok == Tok::LParen {
                        self.bump()?;
                        let arg = self.expr()?;
                        self.expect(Tok::RParen, "`)`")?;
                        return Ok(Expr::call(func, &arg));
                    }
                    return self.syntax(format!("expected `(` after `{name}`"));
                }
                match Var::from_name(&name) {
                    Some(v) => Ok(Expr::var(v)),
                    None => Err(ParseError {
                        kind: ParseErrorKind::UnknownIdentifier(name),
                        offset: at,
                    }),
                }
            }
            Tok::End => self.syntax("unexpected end of input"),
            other => self.syntax(format!("unexpected token {other:?}")),
        }
    }
}

/// Parse an expression according to the grammar
/// `expr := term (('+'|'-') term)*`, `term := factor (('*'|'/') factor)*`,
/// `factor := base ('^' integer)?`,
/// `base := number | ident | func '(' expr ')' | '(' expr ')' | '-' base`.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser {
        lexer: Lexer {
            src: source.as_bytes(),
            pos: 0,
        },
        tok: Tok::End,
        at: 0,
    };
    parser.bump()?;
    let e = parser.expr()?;
    if parser.tok != Tok::End {
        return parser.syntax("trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::EvalPoint;

    fn at(pairs: &[(Var, f64)]) -> EvalPoint {
        EvalPoint::from_pairs(pairs)
    }

    #[test]
    fn arithmetic_and_precedence() {
        let e = parse("p - q*q").unwrap();
        assert_eq!(e.eval(&at(&[(Var::P, 1.0), (Var::Q, 2.0)])).unwrap(), -3.0);
        let e = parse("2 + 3*4^2 / 8 - 1").unwrap();
        assert_eq!(e.eval(&EvalPoint::new()).unwrap(), 7.0);
        let e = parse("8/4/2").unwrap();
        assert_eq!(e.eval(&EvalPoint::new()).unwrap(), 1.0);
    }

    #[test]
    fn unary_minus_binds_to_base() {
        let e = parse("-x^2").unwrap();
        assert_eq!(e.eval(&at(&[(Var::X, 3.0)])).unwrap(), 9.0);
        let e = parse("--x").unwrap();
        assert_eq!(e.eval(&at(&[(Var::X, 3.0)])).unwrap(), 3.0);
    }

    #[test]
    fn functions_and_numbers() {
        let e = parse("exp(0) + sqrt(4) + abs(-1.5e0) + log(1) + sin(0) + cos(0)").unwrap();
        assert_eq!(e.eval(&EvalPoint::new()).unwrap(), 5.5);
        let e = parse("x^-2").unwrap();
        assert_eq!(e.eval(&at(&[(Var::X, 2.0)])).unwrap(), 0.25);
        assert!(parse("1.5e-3 * .5").is_ok());
    }

    #[test]
    fn worked_example_alphas_parse() {
        let e = parse("-z/(q*x) + 1/x + p/q").unwrap();
        let v = e
            .eval(&at(&[
                (Var::X, 2.0),
                (Var::Z, 3.0),
                (Var::P, 1.0),
                (Var::Q, 4.0),
            ]))
            .unwrap();
        assert!((v - (-3.0 / 8.0 + 0.5 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn rejections() {
        let err = parse("(g_is_not_builtin)").unwrap_err();
        assert_eq!(
            err.kind,
            ParseErrorKind::UnknownIdentifier("g_is_not_builtin".into())
        );
        assert_eq!(err.offset, 1);
        assert_eq!(
            parse("x^2.5").unwrap_err().kind,
            ParseErrorKind::NonIntegerExponent
        );
        assert_eq!(
            parse("x^y").unwrap_err().kind,
            ParseErrorKind::NonIntegerExponent
        );
        assert!(matches!(
            parse("2x").unwrap_err().kind,
            ParseErrorKind::Syntax(_)
        ));
        assert_eq!(parse("x + ").unwrap_err().offset, 4);
        assert!(parse("(x").is_err());
        assert!(parse("x)").is_err());
        assert!(parse("sin x").is_err());
        assert!(parse("x $ y").is_err());
        assert!(parse("x^2^3").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn whitespace_insensitive() {
        let a = parse(" p*  q+\tq ^ 2 ").unwrap();
        let b = parse("p*q+q^2").unwrap();
        assert_eq!(a, b);
    }
}
