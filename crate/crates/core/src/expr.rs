//! Tiny arithmetic expression language for user-supplied callables.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals, the
//! constant `pi`, the functions `abs min max exp log cos sin sqrt norm`, and
//! named variables. A vector variable `z` also exposes its components as
//! `z1`, `z2`, `z3`. Scalars broadcast over vectors in `+ - * /`.

use std::fmt;

use crate::error::{Error, Result};
use crate::point::Point;
use crate::scalar::{lit, Real};

/// Names of the variables an expression may reference.
#[derive(Clone, Debug, Default)]
pub struct Vars {
    pub vectors: Vec<String>,
    pub scalars: Vec<String>,
}

impl Vars {
    pub fn new(vectors: &[&str], scalars: &[&str]) -> Self {
        Self {
            vectors: vectors.iter().map(|s| s.to_string()).collect(),
            scalars: scalars.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value<T> {
    Scalar(T),
    Vector(Point<T>),
}

impl<T: Real> Value<T> {
    pub fn scalar(self) -> Result<T> {
        match self {
            Value::Scalar(s) => Ok(s),
            Value::Vector(v) if v.dim() == 1 => Ok(v.get(0)),
            Value::Vector(_) => Err(Error::Expression("expected a scalar, got a vector".into())),
        }
    }

    /// Vector of the given dimension; a scalar is accepted in dimension 1.
    pub fn vector(self, dim: usize) -> Result<Point<T>> {
        match self {
            Value::Vector(v) if v.dim() == dim => Ok(v),
            Value::Scalar(s) if dim == 1 => Ok(Point::scalar(s)),
            _ => Err(Error::Expression(format!("expected a vector of dimension {dim}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Func {
    Abs,
    Min,
    Max,
    Exp,
    Log,
    Cos,
    Sin,
    Sqrt,
    Norm,
}

impl Func {
    fn parse(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "abs" => (Func::Abs, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            "exp" => (Func::Exp, 1),
            "log" => (Func::Log, 1),
            "cos" => (Func::Cos, 1),
            "sin" => (Func::Sin, 1),
            "sqrt" => (Func::Sqrt, 1),
            "norm" => (Func::Norm, 1),
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Const(f64),
    Vector(usize),
    Component(usize, usize),
    Scalar(usize),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A compiled expression.
#[derive(Clone, Debug)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent part
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
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number `{text}`")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else {
            out.push(match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => return Err(Error::Expression(format!("unexpected character `{c}`"))),
            });
            i += 1;
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    vars: &'a Vars,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        match self.next() {
            Some(ref got) if *got == t => Ok(()),
            other => Err(Error::Expression(format!("expected {t:?}, found {other:?}"))),
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // term := unary (('*'|'/') unary)*
    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    // power := atom ('^' unary)?   (right associative)
    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Node::Const(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if let Some((func, arity)) = Func::parse(&name) {
                    self.expect(Tok::LParen)?;
                    let mut args = vec![self.expr()?];
                    while let Some(Tok::Comma) = self.peek() {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen)?;
                    if args.len() != arity {
                        return Err(Error::Expression(format!(
                            "`{name}` takes {arity} argument(s), got {}",
                            args.len()
                        )));
                    }
                    return Ok(Node::Call(func, args));
                }
                self.variable(&name)
            }
            other => Err(Error::Expression(format!("unexpected token {other:?}"))),
        }
    }

    fn variable(&self, name: &str) -> Result<Node> {
        if name == "pi" {
            return Ok(Node::Const(std::f64::consts::PI));
        }
        if let Some(i) = self.vars.scalars.iter().position(|v| v == name) {
            return Ok(Node::Scalar(i));
        }
        if let Some(i) = self.vars.vectors.iter().position(|v| v == name) {
            return Ok(Node::Vector(i));
        }
        // component access: longest vector name that prefixes `name`, followed by 1..3
        for (i, v) in self.vars.vectors.iter().enumerate() {
            if let Some(rest) = name.strip_prefix(v.as_str()) {
                if let Ok(k @ 1..=3) = rest.parse::<usize>() {
                    return Ok(Node::Component(i, k - 1));
                }
            }
        }
        Err(Error::Expression(format!("unknown variable `{name}`")))
    }
}

impl Expr {
    pub fn parse(src: &str, vars: &Vars) -> Result<Self> {
        let toks = tokenize(src)?;
        if toks.is_empty() {
            return Err(Error::Expression("empty expression".into()));
        }
        let mut p = Parser { toks, pos: 0, vars };
        let root = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(Error::Expression(format!(
                "trailing input after position {} in `{src}`",
                p.pos
            )));
        }
        Ok(Self {
            source: src.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval<T: Real>(&self, vectors: &[Point<T>], scalars: &[T]) -> Result<Value<T>> {
        eval_node(&self.root, vectors, scalars)
    }

    /// Evaluates and requires a scalar result.
    pub fn eval_scalar<T: Real>(&self, vectors: &[Point<T>], scalars: &[T]) -> Result<T> {
        self.eval(vectors, scalars)?.scalar()
    }
}

fn eval_node<T: Real>(n: &Node, vs: &[Point<T>], ss: &[T]) -> Result<Value<T>> {
    use Value::*;
    Ok(match n {
        Node::Const(c) => Scalar(lit(*c)),
        Node::Vector(i) => Vector(vs[*i]),
        Node::Component(i, k) => {
            let v = vs[*i];
            if *k >= v.dim() {
                return Err(Error::Expression(format!(
                    "component {} of a {}-dimensional vector",
                    k + 1,
                    v.dim()
                )));
            }
            Scalar(v.get(*k))
        }
        Node::Scalar(i) => Scalar(ss[*i]),
        Node::Neg(a) => match eval_node(a, vs, ss)? {
            Scalar(x) => Scalar(-x),
            Vector(v) => Vector(-v),
        },
        Node::Bin(op, a, b) => binary(*op, eval_node(a, vs, ss)?, eval_node(b, vs, ss)?)?,
        Node::Call(f, args) => {
            let a = eval_node(&args[0], vs, ss)?;
            match f {
                Func::Norm => Scalar(match a {
                    Scalar(x) => x.abs(),
                    Vector(v) => v.norm(),
                }),
                Func::Min | Func::Max => {
                    let x = a.scalar()?;
                    let y = eval_node(&args[1], vs, ss)?.scalar()?;
                    Scalar(if *f == Func::Min { x.min(y) } else { x.max(y) })
                }
                _ => {
                    let g = |x: T| -> T {
                        match f {
                            Func::Abs => x.abs(),
                            Func::Exp => x.exp(),
                            Func::Log => x.ln(),
                            Func::Cos => x.cos(),
                            Func::Sin => x.sin(),
                            Func::Sqrt => x.sqrt(),
                            _ => unreachable!(),
                        }
                    };
                    match a {
                        Scalar(x) => Scalar(g(x)),
                        Vector(v) => Vector(v.map(g)),
                    }
                }
            }
        }
    })
}

fn binary<T: Real>(op: char, a: Value<T>, b: Value<T>) -> Result<Value<T>> {
    use Value::*;
    let sc = |x: T, y: T| -> T {
        match op {
            '+' => x + y,
            '-' => x - y,
            '*' => x * y,
            '/' => x / y,
            '^' => x.powf(y),
            _ => unreachable!(),
        }
    };
    Ok(match (a, b) {
        (Scalar(x), Scalar(y)) => Scalar(sc(x, y)),
        (Vector(v), Scalar(y)) => Vector(v.map(|x| sc(x, y))),
        (Scalar(x), Vector(w)) if op != '^' => Vector(w.map(|y| sc(x, y))),
        (Vector(v), Vector(w)) if matches!(op, '+' | '-') && v.dim() == w.dim() => {
            Vector(if op == '+' { v + w } else { v - w })
        }
        (Vector(v), Vector(w)) if op == '*' && v.dim() == w.dim() => Scalar(v.dot(&w)),
        _ => return Err(Error::Expression(format!("operator `{op}` not defined on these operands"))),
    })
}
