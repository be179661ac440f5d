//! Recursive-descent parser for the ASCII expression grammar:
//!
//! ```text
//! element := ("+"|"-")? term (("+"|"-") term)*
//! term    := factor ("*" factor)*
//! factor  := "-" factor | coeff | gen "'"? ("^" int)? | "(" element ")" "'"? ("^" uint)?
//! coeff   := rational "i"? | "i" | "rho" ("^" halfint)?
//! ```
//!
//! Whitespace is insignificant. Positions in errors are byte offsets.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at position {pos}: {message}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

impl ParseError {
    fn new(pos: usize, message: impl Into<String>) -> Self {
        Self { pos, message: message.into() }
    }

    /// The input line followed by a caret under the error position.
    pub fn caret(&self, input: &str) -> String {
        let col = input[..self.pos.min(input.len())].chars().count();
        format!("{input}\n{}^", " ".repeat(col))
    }
}

/// Parsed expression, independent of any presentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    /// Decimal numerator and optional denominator; `imag` multiplies by `i`.
    Number { num: String, den: Option<String>, imag: bool },
    /// `rho^(half / 2)`.
    Rho { half: i32 },
    Gen { name: String, adj: bool, pow: i32, pos: usize },
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Adj(Box<Expr>),
    Pow(Box<Expr>, u32),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(String),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
}

impl Lexer {
    fn run(input: &str) -> Result<Self, ParseError> {
        let mut toks = Vec::new();
        let bytes = input.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let ch = bytes[i] as char;
            if ch.is_ascii_whitespace() {
                i += 1;
            } else if ch.is_ascii_digit() {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                toks.push((Tok::Int(input[start..i].to_string()), start));
            } else if ch.is_ascii_alphabetic() {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                toks.push((Tok::Ident(input[start..i].to_string()), start));
            } else if "+-*^()'/".contains(ch) {
                toks.push((Tok::Sym(ch), i));
                i += 1;
            } else {
                let bad = input[i..].chars().next().unwrap_or('?');
                return Err(ParseError::new(i, format!("unexpected character '{bad}'")));
            }
        }
        toks.push((Tok::End, input.len()));
        Ok(Self { toks })
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(ParseError::new(self.pos(), format!("expected '{c}'")))
        }
    }

    fn element(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = if self.eat('-') {
            Expr::Neg(Box::new(self.term()?))
        } else {
            self.eat('+');
            self.term()?
        };
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        while self.eat('*') {
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn int(&mut self) -> Result<String, ParseError> {
        match self.bump() {
            (Tok::Int(s), _) => Ok(s),
            (_, pos) => Err(ParseError::new(pos, "expected an integer")),
        }
    }

    fn small_int(&mut self, allow_negative: bool) -> Result<i32, ParseError> {
        let pos = self.pos();
        let neg = allow_negative && self.eat('-');
        let digits = self.int()?;
        let v: i32 = digits.parse().map_err(|_| ParseError::new(pos, "exponent out of range"))?;
        Ok(if neg { -v } else { v })
    }

    /// `int` or `int/2`, optionally signed and parenthesized; returns twice the value.
    fn half_int(&mut self) -> Result<i32, ParseError> {
        if self.eat('(') {
            let v = self.half_int()?;
            self.expect(')')?;
            return Ok(v);
        }
        let pos = self.pos();
        let v = self.small_int(true)?;
        if self.eat('/') {
            let den_pos = self.pos();
            if self.int()? != "2" {
                return Err(ParseError::new(den_pos, "rho exponents must be integers or halves"));
            }
            return Ok(v);
        }
        v.checked_mul(2).ok_or_else(|| ParseError::new(pos, "exponent out of range"))
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let (tok, pos) = self.bump();
        match tok {
            Tok::Int(num) => {
                let den = if self.eat('/') { Some(self.int()?) } else { None };
                if den.as_deref().is_some_and(|d| d.chars().all(|c| c == '0')) {
                    return Err(ParseError::new(pos, "zero denominator"));
                }
                let imag = matches!(self.peek(), Tok::Ident(s) if s == "i");
                if imag {
                    self.bump();
                }
                Ok(Expr::Number { num, den, imag })
            }
            Tok::Ident(name) if name == "i" => Ok(Expr::Number { num: "1".into(), den: None, imag: true }),
            Tok::Ident(name) if name == "rho" => {
                let half = if self.eat('^') { self.half_int()? } else { 2 };
                Ok(Expr::Rho { half })
            }
            Tok::Ident(name) => {
                let adj = self.eat('\'');
                let pow = if self.eat('^') { self.small_int(true)? } else { 1 };
                Ok(Expr::Gen { name, adj, pow, pos })
            }
            Tok::Sym('(') => {
                let inner = self.element()?;
                self.expect(')')?;
                let mut e = inner;
                if self.eat('\'') {
                    e = Expr::Adj(Box::new(e));
                }
                if self.eat('^') {
                    let ppos = self.pos();
                    let k = self.small_int(true)?;
                    if k < 0 {
                        return Err(ParseError::new(ppos, "negative power of a parenthesized expression"));
                    }
                    e = Expr::Pow(Box::new(e), k as u32);
                }
                Ok(e)
            }
            Tok::End => Err(ParseError::new(pos, "unexpected end of input")),
            Tok::Sym(c) => Err(ParseError::new(pos, format!("unexpected '{c}'"))),
        }
    }
}

/// Parses `text` into an [`Expr`] without resolving generator names.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let lexer = Lexer::run(text)?;
    let mut p = Parser { toks: lexer.toks, at: 0 };
    let e = p.element()?;
    match p.peek() {
        Tok::End => Ok(e),
        _ => Err(ParseError::new(p.pos(), "expected an operator or end of input")),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number { num, den, imag } => {
                write!(f, "{num}")?;
                if let Some(d) = den {
                    write!(f, "/{d}")?;
                }
                if *imag {
                    write!(f, "i")?;
                }
                Ok(())
            }
            Expr::Rho { half } if half % 2 == 0 => write!(f, "rho^{}", half / 2),
            Expr::Rho { half } => write!(f, "rho^({half}/2)"),
            Expr::Gen { name, adj, pow, .. } => {
                write!(f, "{name}{}", if *adj { "'" } else { "" })?;
                if *pow != 1 {
                    write!(f, "^{pow}")?;
                }
                Ok(())
            }
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Adj(a) => write!(f, "({a})'"),
            Expr::Pow(a, k) => write!(f, "({a})^{k}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients() {
        assert_eq!(
            parse_expr("1/2i").unwrap(),
            Expr::Number { num: "1".into(), den: Some("2".into()), imag: true }
        );
        assert_eq!(parse_expr("rho^-1/2").unwrap(), Expr::Rho { half: -1 });
        assert_eq!(parse_expr("rho^(3/2)").unwrap(), Expr::Rho { half: 3 });
        assert_eq!(parse_expr("rho").unwrap(), Expr::Rho { half: 2 });
    }

    #[test]
    fn generators_with_adjoint_and_power() {
        assert_eq!(
            parse_expr("z1'^2").unwrap(),
            Expr::Gen { name: "z1".into(), adj: true, pow: 2, pos: 0 }
        );
        assert_eq!(
            parse_expr(" U1^-1").unwrap(),
            Expr::Gen { name: "U1".into(), adj: false, pow: -1, pos: 1 }
        );
    }

    #[test]
    fn errors_carry_positions() {
        assert_eq!(parse_expr("z1 + * z2").unwrap_err().pos, 5);
        assert_eq!(parse_expr("z1 z2").unwrap_err().pos, 3);
        assert_eq!(parse_expr("(z1").unwrap_err().pos, 3);
        assert_eq!(parse_expr("z1 # 2").unwrap_err().pos, 3);
        assert_eq!(parse_expr("rho^1/3").unwrap_err().pos, 6);
        assert!(parse_expr("1/0").is_err());
        let err = parse_expr("z1 + * z2").unwrap_err();
        assert_eq!(err.caret("z1 + * z2"), "z1 + * z2\n     ^");
    }

    #[test]
    fn precedence() {
        let e = parse_expr("-a + b*c").unwrap();
        assert_eq!(e.to_string(), "((-a) + (b * c))");
        let e = parse_expr("(a - b)'^2").unwrap();
        assert_eq!(e.to_string(), "(((a - b))')^2");
    }
}
