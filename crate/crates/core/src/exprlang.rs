//! A small mathematical expression language.
//!
//! Grammar (also in `docs/expression-grammar.md`):
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := atom ("^" unary)?          ; exponent must be constant
//! atom    := number | ident | ident "(" expr ")" | "(" expr ")"
//! ident   := "x1".."x3" | "sin" | "cos" | "exp" | "log" | "sqrt" | "pi" | "e"
//! ```
//!
//! Expressions are immutable after parse and evaluation is pure.

use crate::jet::{Jet, Jet3, Real};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Abstract syntax tree over literals, coordinate variables `x1..xd`,
/// arithmetic, powers with constant exponent, and a fixed function whitelist.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    E,
    /// 0-based variable index.
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Base raised to a constant exponent (folded at parse time).
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("variable x{} exceeds declared dimension {dim} (byte {offset})", var + 1)]
    DimensionMismatch {
        offset: usize,
        var: usize,
        dim: usize,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("domain error in `{subexpr}`: {msg}")]
    Domain { subexpr: String, msg: String },
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
}

impl Lexer {
    fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let b = src.as_bytes();
        let mut toks = Vec::new();
        let mut i = 0;
        while i < b.len() {
            let c = b[i];
            match c {
                b' ' | b'\t' | b'\r' | b'\n' => i += 1,
                b'+' => {
                    toks.push((Tok::Plus, i));
                    i += 1;
                }
                b'-' => {
                    toks.push((Tok::Minus, i));
                    i += 1;
                }
                b'*' => {
                    toks.push((Tok::Star, i));
                    i += 1;
                }
                b'/' => {
                    toks.push((Tok::Slash, i));
                    i += 1;
                }
                b'^' => {
                    toks.push((Tok::Caret, i));
                    i += 1;
                }
                b'(' => {
                    toks.push((Tok::LParen, i));
                    i += 1;
                }
                b')' => {
                    toks.push((Tok::RParen, i));
                    i += 1;
                }
                b'0'..=b'9' | b'.' => {
                    let start = i;
                    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                        i += 1;
                    }
                    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                        let mut j = i + 1;
                        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                            j += 1;
                        }
                        if j < b.len() && b[j].is_ascii_digit() {
                            i = j;
                            while i < b.len() && b[i].is_ascii_digit() {
                                i += 1;
                            }
                        }
                    }
                    let text = &src[start..i];
                    let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                        offset: start,
                        msg: format!("malformed number `{text}`"),
                    })?;
                    toks.push((Tok::Num(v), start));
                }
                b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                    let start = i;
                    while i < b.len()
                        && (b[i].is_ascii_alphanumeric() || b[i] == b'_')
                    {
                        i += 1;
                    }
                    toks.push((Tok::Ident(src[start..i].to_string()), start));
                }
                _ => {
                    return Err(ParseError::Syntax {
                        offset: i,
                        msg: format!("unexpected character `{}`", src[i..].chars().next().unwrap()),
                    })
                }
            }
        }
        toks.push((Tok::Eof, src.len()));
        Ok(toks)
    }

    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Lexer {
            toks: Self::lex(src)?,
        })
    }
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    lexer: Lexer,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.lexer.toks[self.pos].0
    }
    fn offset(&self) -> usize {
        self.lexer.toks[self.pos].1
    }
    fn bump(&mut self) -> Tok {
        let t = self.lexer.toks[self.pos].0.clone();
        if self.pos + 1 < self.lexer.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Tok::Minus) {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if matches!(self.peek(), Tok::Caret) {
            self.bump();
            let off = self.offset();
            let exp_tree = self.unary()?;
            let exp = const_value(&exp_tree).ok_or_else(|| ParseError::Syntax {
                offset: off,
                msg: "exponent must be a constant expression".into(),
            })?;
            return Ok(Expr::Pow(Box::new(base), exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let off = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Ident(name) => {
                if name == "pi" {
                    return Ok(Expr::Pi);
                }
                if name == "e" {
                    return Ok(Expr::E);
                }
                if let Some(rest) = name.strip_prefix('x') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if k >= 1 && k <= 3 {
                            if k > self.dim {
                                return Err(ParseError::DimensionMismatch {
                                    offset: off,
                                    var: k - 1,
                                    dim: self.dim,
                                });
                            }
                            return Ok(Expr::Var(k - 1));
                        }
                    }
                }
                let func = match name.as_str() {
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "log" => Func::Log,
                    "sqrt" => Func::Sqrt,
                    _ => {
                        return Err(ParseError::UnknownIdentifier { offset: off, name });
                    }
                };
                match self.bump() {
                    Tok::LParen => {}
                    _ => {
                        return Err(ParseError::Syntax {
                            offset: off,
                            msg: format!("expected `(` after `{}`", func.name()),
                        })
                    }
                }
                let arg = self.expr()?;
                let close_off = self.offset();
                match self.bump() {
                    Tok::RParen => Ok(Expr::Call(func, Box::new(arg))),
                    _ => Err(ParseError::Syntax {
                        offset: close_off,
                        msg: "expected `)`".into(),
                    }),
                }
            }
            Tok::LParen => {
                let inner = self.expr()?;
                let close_off = self.offset();
                match self.bump() {
                    Tok::RParen => Ok(inner),
                    _ => Err(ParseError::Syntax {
                        offset: close_off,
                        msg: "expected `)`".into(),
                    }),
                }
            }
            t => Err(ParseError::Syntax {
                offset: off,
                msg: format!("unexpected token {t:?}"),
            }),
        }
    }
}

/// Fold a variable-free subtree to its numeric value.
fn const_value(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(v) => Some(*v),
        Expr::Pi => Some(std::f64::consts::PI),
        Expr::E => Some(std::f64::consts::E),
        Expr::Var(_) => None,
        Expr::Neg(x) => const_value(x).map(|v| -v),
        Expr::Bin(op, a, b) => {
            let (a, b) = (const_value(a)?, const_value(b)?);
            Some(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
            })
        }
        Expr::Pow(a, p) => const_value(a).map(|v| v.powf(*p)),
        Expr::Call(f, a) => {
            let v = const_value(a)?;
            Some(match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
                Func::Log => v.ln(),
                Func::Sqrt => v.sqrt(),
            })
        }
    }
}

/// Parse `text` against `dim` coordinate variables (`dim` in 1..=3).
pub fn parse(text: &str, dim: usize) -> Result<Expr, ParseError> {
    assert!((1..=3).contains(&dim), "dim must be 1, 2 or 3");
    if text.trim().is_empty() {
        return Err(ParseError::Syntax {
            offset: 0,
            msg: "empty expression".into(),
        });
    }
    let lexer = Lexer::new(text)?;
    let mut p = Parser { lexer, pos: 0, dim };
    let e = p.expr()?;
    if !matches!(p.peek(), Tok::Eof) {
        return Err(ParseError::Syntax {
            offset: p.offset(),
            msg: "trailing input".into(),
        });
    }
    Ok(e)
}

impl Expr {
    /// Is this expression free of coordinate variables?
    pub fn is_constant(&self) -> bool {
        const_value(self).is_some()
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Var(i) => Some(*i),
            Expr::Num(_) | Expr::Pi | Expr::E => None,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Bin(_, a, b) => a.max_var().into_iter().chain(b.max_var()).max(),
        }
    }

    /// Evaluate in any scalar ring; the workhorse behind all jet evaluation.
    pub fn eval<T: Real>(&self, vars: &[T]) -> Result<T, EvalError> {
        match self {
            Expr::Num(v) => Ok(T::from_f64(*v)),
            Expr::Pi => Ok(T::from_f64(std::f64::consts::PI)),
            Expr::E => Ok(T::from_f64(std::f64::consts::E)),
            Expr::Var(i) => Ok(vars[*i].clone()),
            Expr::Neg(a) => Ok(-a.eval(vars)?),
            Expr::Bin(op, a, b) => {
                let x = a.eval(vars)?;
                let y = b.eval(vars)?;
                match op {
                    BinOp::Add => Ok(x + y),
                    BinOp::Sub => Ok(x - y),
                    BinOp::Mul => Ok(x * y),
                    BinOp::Div => {
                        if y.re() == 0.0 {
                            return Err(EvalError::Domain {
                                subexpr: b.to_string(),
                                msg: "division by zero".into(),
                            });
                        }
                        Ok(x / y)
                    }
                }
            }
            Expr::Pow(a, p) => {
                let x = a.eval(vars)?;
                let pr = p.round();
                if (p - pr).abs() < 1e-12 && pr.abs() <= 64.0 {
                    let n = pr as i32;
                    if n < 0 && x.re() == 0.0 {
                        return Err(EvalError::Domain {
                            subexpr: self.to_string(),
                            msg: "zero raised to a negative power".into(),
                        });
                    }
                    Ok(x.powi(n))
                } else {
                    if x.re() <= 0.0 {
                        return Err(EvalError::Domain {
                            subexpr: self.to_string(),
                            msg: "non-integer power of a non-positive base".into(),
                        });
                    }
                    Ok(x.powf(*p))
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(vars)?;
                match f {
                    Func::Sin => Ok(x.sin()),
                    Func::Cos => Ok(x.cos()),
                    Func::Exp => Ok(x.exp()),
                    Func::Log => {
                        if x.re() <= 0.0 {
                            return Err(EvalError::Domain {
                                subexpr: self.to_string(),
                                msg: "log of a non-positive argument".into(),
                            });
                        }
                        Ok(x.ln())
                    }
                    Func::Sqrt => {
                        if x.re() < 0.0 {
                            return Err(EvalError::Domain {
                                subexpr: self.to_string(),
                                msg: "sqrt of a negative argument".into(),
                            });
                        }
                        Ok(x.sqrt())
                    }
                }
            }
        }
    }

    /// Third-order jet at `p`, seeding the coordinate variables.
    pub fn eval_jet(&self, p: &[f64]) -> Result<Jet3, EvalError> {
        let d = p.len();
        let vars: Vec<Jet3> = (0..d).map(|i| Jet::variable(d, i, p[i])).collect();
        Ok(lift_result(self.eval(&vars)?, d))
    }
}

/// Constant expressions evaluate to dimension-0 jets; give them full shape.
pub fn lift_result<T: Real>(j: Jet<T>, dim: usize) -> Jet<T> {
    crate::jet::lift(j, dim)
}

// ---------------------------------------------------------------------------
// Printing (round-trips through `parse`)

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        _ => 5,
    }
}

fn fmt_child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if prec(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 {
                    write!(f, "({v})")
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Pi => write!(f, "pi"),
            Expr::E => write!(f, "e"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => {
                write!(f, "-")?;
                fmt_child(f, a, 3)
            }
            Expr::Bin(op, a, b) => {
                let (sym, p, rp) = match op {
                    BinOp::Add => ("+", 1, 1),
                    BinOp::Sub => ("-", 1, 2),
                    BinOp::Mul => ("*", 2, 2),
                    BinOp::Div => ("/", 2, 3),
                };
                fmt_child(f, a, p)?;
                write!(f, " {sym} ")?;
                fmt_child(f, b, rp)
            }
            Expr::Pow(a, p) => {
                fmt_child(f, a, 5)?;
                if *p < 0.0 {
                    write!(f, "^({p})")
                } else {
                    write!(f, "^{p}")
                }
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
