//! Recursive-descent parser for the polynomial text grammar: identifiers,
//! integer/decimal literals, `+ - * ^`, parentheses. Whitespace-insensitive,
//! no implicit multiplication. Decimal literals become exact rationals
//! (`0.005` is 1/200).

use super::{Poly, QPoly, VarSpace};
use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        offset,
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(BigRational),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut lex = Lexer {
            src: src.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        while let Some(t) = lex.next_token()? {
            out.push(t);
        }
        Ok(out)
    }

    fn next_token(&mut self) -> Result<Option<(usize, Tok)>, ParseError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            c if c.is_ascii_digit() => {
                let int_start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let mut digits =
                    String::from_utf8(self.src[int_start..self.pos].to_vec()).unwrap();
                let mut frac_len = 0u32;
                if self.pos < self.src.len() && self.src[self.pos] == b'.' {
                    self.pos += 1;
                    let frac_start = self.pos;
                    while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                    if self.pos == frac_start {
                        return err(self.pos, "expected digits after decimal point");
                    }
                    frac_len = (self.pos - frac_start) as u32;
                    digits.push_str(std::str::from_utf8(&self.src[frac_start..self.pos]).unwrap());
                }
                let numer: BigInt = digits.parse().unwrap();
                let denom = BigInt::from(10u32).pow(frac_len);
                Tok::Number(BigRational::new(numer, denom))
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Tok::Ident(String::from_utf8(self.src[start..self.pos].to_vec()).unwrap())
            }
            other => {
                return err(start, format!("unexpected character {:?}", other as char));
            }
        };
        Ok(Some((start, tok)))
    }
}

struct Parser<'a> {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    vars: &'a VarSpace,
    end: usize,
}

/// Parse `src` into an exact-rational polynomial over `vars`.
pub fn parse_poly(src: &str, vars: &VarSpace) -> Result<QPoly, ParseError> {
    let tokens = Lexer::tokens(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        vars,
        end: src.len(),
    };
    let poly = p.expr()?;
    if let Some((off, tok)) = p.peek() {
        return err(off, format!("unexpected {tok:?}; expected an operator"));
    }
    Ok(poly)
}

impl Parser<'_> {
    fn peek(&self) -> Option<(usize, Tok)> {
        self.tokens.get(self.pos).cloned()
    }

    fn bump(&mut self) -> Option<(usize, Tok)> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(o, _)| *o)
            .unwrap_or(self.end)
    }

    fn expr(&mut self) -> Result<QPoly, ParseError> {
        let mut acc = self.term()?;
        while let Some((_, tok)) = self.peek() {
            match tok {
                Tok::Plus => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = &acc + &rhs;
                }
                Tok::Minus => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = &acc - &rhs;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<QPoly, ParseError> {
        let mut acc = self.factor()?;
        while let Some((_, Tok::Star)) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            acc = &acc * &rhs;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<QPoly, ParseError> {
        if let Some((_, Tok::Minus)) = self.peek() {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(-&inner);
        }
        let base = self.primary()?;
        if let Some((_, Tok::Caret)) = self.peek() {
            self.pos += 1;
            let (off, tok) = match self.bump() {
                Some(t) => t,
                None => return err(self.end, "expected an exponent after '^'"),
            };
            let exp = match tok {
                Tok::Number(n) if n.is_integer() && n >= BigRational::from_integer(0.into()) => {
                    let v = n.to_integer();
                    match u16::try_from(v.clone()) {
                        Ok(v) => v,
                        Err(_) => return err(off, format!("exponent {v} too large")),
                    }
                }
                other => return err(off, format!("expected a non-negative integer, got {other:?}")),
            };
            return Ok(base.pow(usize::from(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<QPoly, ParseError> {
        let n = self.vars.len();
        let (off, tok) = match self.bump() {
            Some(t) => t,
            None => return err(self.end, "unexpected end of input"),
        };
        match tok {
            Tok::Number(v) => Ok(Poly::constant(n, v)),
            Tok::Ident(name) => match self.vars.index_of(&name) {
                Some(i) => Ok(Poly::var(n, i).unwrap()),
                None => err(off, format!("unknown variable {name:?}")),
            },
            Tok::LParen => {
                let inner = self.expr()?;
                match self.bump() {
                    Some((_, Tok::RParen)) => Ok(inner),
                    Some((o, t)) => err(o, format!("expected ')', got {t:?}")),
                    None => err(self.end, "unclosed parenthesis"),
                }
            }
            other => err(off, format!("expected a value, got {other:?}")),
        }
    }

    #[allow(dead_code)]
    fn fail_here<T>(&self, msg: &str) -> Result<T, ParseError> {
        err(self.here(), msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    fn vars() -> VarSpace {
        VarSpace::new(vec!["x", "y", "z"]).unwrap()
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn decimal_literals_are_exact() {
        let p = parse_poly("0.005", &vars()).unwrap();
        assert_eq!(p.constant_term(), q(1, 200));
        let p = parse_poly("12.06*y*z^5", &vars()).unwrap();
        assert_eq!(p.coeff(&[0, 1, 5]), Some(&q(1206, 100)));
        assert_eq!(p.coeff(&[0, 1, 5]), Some(&q(603, 50)));
    }

    #[test]
    fn precedence_and_unary_minus() {
        let v = vars();
        let p = parse_poly("-x^2 + 2*x - 1", &v).unwrap();
        assert_eq!(p.coeff(&[2, 0, 0]), Some(&q(-1, 1)));
        assert_eq!(p.coeff(&[1, 0, 0]), Some(&q(2, 1)));
        assert_eq!(p.constant_term(), q(-1, 1));
        // a - b*c groups as a - (b*c)
        let p = parse_poly("1 - 2*3", &v).unwrap();
        assert_eq!(p.constant_term(), q(-5, 1));
        // (x+y)^2 expands
        let p = parse_poly("(x + y)^2", &v).unwrap();
        assert_eq!(p.coeff(&[1, 1, 0]), Some(&q(2, 1)));
    }

    #[test]
    fn whitespace_insensitive() {
        let v = vars();
        let a = parse_poly("x^2*y - 3", &v).unwrap();
        let b = parse_poly("  x ^ 2 * y-3 ", &v).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_implicit_multiplication() {
        let v = vars();
        let e = parse_poly("2x", &v).unwrap_err();
        assert_eq!(e.offset, 1);
        assert!(parse_poly("x y", &v).is_err());
    }

    #[test]
    fn rejects_unknown_variable_and_bad_exponent() {
        let v = vars();
        let e = parse_poly("x + w", &v).unwrap_err();
        assert_eq!(e.offset, 4);
        assert!(parse_poly("x^(2)", &v).is_err());
        assert!(parse_poly("x^1.5", &v).is_err());
        assert!(parse_poly("x^", &v).is_err());
    }

    #[test]
    fn subtraction_cancels_to_zero() {
        let v = vars();
        let p = parse_poly("x*y - x*y", &v).unwrap();
        assert!(p.is_zero());
        assert!(p.degree().is_none());
        assert_eq!(p.evaluate(&[q(3, 1), q(5, 1), q(0, 1)]).unwrap(), BigRational::zero());
    }
}
