//! Scalar expression language for metric components.
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := unary (("*" | "/") unary)*
//! unary  := "-" unary | factor
//! factor := base ("^" "-"? integer)?
//! base   := number | ident | func "(" expr ")" | "(" expr ")"
//! func   := exp | log | sin | cos | sqrt
//! ```
//!
//! `pi` is a constant; every other identifier must be a declared variable.

use crate::error::{Error, Result};
use crate::jet::{Jet, JetShape};
use std::fmt;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var { index: usize, name: String },
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
struct Token {
    kind: Tok,
    col: usize,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64, String),
    Ident(String),
    Op(char),
    End,
}

fn syntax(col: usize, msg: impl fmt::Display) -> Error {
    Error::Input(format!("syntax error at line 1, column {col}: {msg}"))
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text
                .parse()
                .map_err(|_| syntax(col, format!("malformed number '{text}'")))?;
            out.push(Token {
                kind: Tok::Num(v, text),
                col,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                kind: Tok::Ident(chars[start..i].iter().collect()),
                col,
            });
        } else if "+-*/^()".contains(c) {
            out.push(Token {
                kind: Tok::Op(c),
                col,
            });
            i += 1;
        } else {
            return Err(syntax(col, format!("unexpected character '{c}'")));
        }
    }
    out.push(Token {
        kind: Tok::End,
        col: chars.len() + 1,
    });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    vars: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_op(&self, c: char) -> bool {
        self.peek().kind == Tok::Op(c)
    }

    fn expect(&mut self, c: char) -> Result<()> {
        let t = self.next();
        if t.kind == Tok::Op(c) {
            Ok(())
        } else {
            Err(syntax(
                t.col,
                format!("expected '{c}', found {}", describe(&t.kind)),
            ))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.is_op('+') {
                BinOp::Add
            } else if self.is_op('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.is_op('*') {
                BinOp::Mul
            } else if self.is_op('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            self.next();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.is_op('-') {
            self.next();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.base()?;
        if !self.is_op('^') {
            return Ok(base);
        }
        self.next();
        let neg = if self.is_op('-') {
            self.next();
            true
        } else {
            false
        };
        let t = self.next();
        match t.kind {
            Tok::Num(_, ref text) if text.chars().all(|c| c.is_ascii_digit()) => {
                let k: i32 = text
                    .parse()
                    .map_err(|_| syntax(t.col, "exponent out of range"))?;
                Ok(Expr::Pow(Box::new(base), if neg { -k } else { k }))
            }
            _ => Err(syntax(
                t.col,
                format!(
                    "exponent must be an integer literal, found {}",
                    describe(&t.kind)
                ),
            )),
        }
    }

    fn base(&mut self) -> Result<Expr> {
        let t = self.next();
        match t.kind {
            Tok::Num(v, _) => Ok(Expr::Num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    self.expect('(')?;
                    let e = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::Call(f, Box::new(e)));
                }
                if name == "pi" {
                    return Ok(Expr::Pi);
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(index) => Ok(Expr::Var { index, name }),
                    None => Err(Error::Input(format!(
                        "unknown identifier '{name}' at line 1, column {}",
                        t.col
                    ))),
                }
            }
            other => Err(syntax(t.col, format!("unexpected {}", describe(&other)))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(_, s) => format!("number '{s}'"),
        Tok::Ident(s) => format!("identifier '{s}'"),
        Tok::Op(c) => format!("'{c}'"),
        Tok::End => "end of input".into(),
    }
}

impl Expr {
    pub fn parse(src: &str, vars: &[String]) -> Result<Expr> {
        let mut p = Parser {
            toks: lex(src)?,
            pos: 0,
            vars,
        };
        let e = p.expr()?;
        let t = p.peek().clone();
        if t.kind != Tok::End {
            return Err(syntax(t.col, format!("unexpected {}", describe(&t.kind))));
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var { index, .. } => x[*index],
            Expr::Neg(a) => -a.eval(x),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Pow(a, k) => a.eval(x).powi(*k),
            Expr::Call(f, a) => {
                let a = a.eval(x);
                match f {
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Sqrt => a.sqrt(),
                }
            }
        }
    }

    /// Evaluate in jet arithmetic; `vars[i]` is the jet of variable `i`.
    pub fn eval_jet(&self, vars: &[Jet]) -> Result<Jet> {
        let shape = vars[0].shape();
        self.eval_jet_in(vars, shape)
    }

    fn eval_jet_in(&self, vars: &[Jet], shape: &Arc<JetShape>) -> Result<Jet> {
        Ok(match self {
            Expr::Num(v) => Jet::constant(shape, *v),
            Expr::Pi => Jet::constant(shape, std::f64::consts::PI),
            Expr::Var { index, .. } => vars[*index].clone(),
            Expr::Neg(a) => a.eval_jet_in(vars, shape)?.neg(),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval_jet_in(vars, shape)?, b.eval_jet_in(vars, shape)?);
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.sub(&b),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div => a.div(&b)?,
                }
            }
            Expr::Pow(a, k) => a.eval_jet_in(vars, shape)?.powi(*k)?,
            Expr::Call(f, a) => {
                let a = a.eval_jet_in(vars, shape)?;
                match f {
                    Func::Exp => a.exp(),
                    Func::Log => a.ln()?,
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Sqrt => a.sqrt()?,
                }
            }
        })
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool| {
            if paren {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Pi => write!(f, "pi"),
            Expr::Var { name, .. } => write!(f, "{name}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, a.prec() < 3)
            }
            Expr::Bin(op, a, b) => {
                let (sym, p) = match op {
                    BinOp::Add => ("+", 1),
                    BinOp::Sub => ("-", 1),
                    BinOp::Mul => ("*", 2),
                    BinOp::Div => ("/", 2),
                };
                wrap(f, a, a.prec() < p)?;
                write!(f, " {sym} ")?;
                wrap(f, b, b.prec() <= p)
            }
            Expr::Pow(a, k) => {
                wrap(f, a, a.prec() < 5)?;
                write!(f, "^{k}")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
