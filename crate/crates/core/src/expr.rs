//! Closed-form scalar expressions used in configuration files.
//!
//! The grammar is documented in `docs/expressions.md`. Expressions are parsed
//! once against a fixed variable list and evaluated by walking the tree.

use crate::error::{Error, Result};

/// Variables available to cell fields.
pub const CELL_VARS: [&str; 3] = ["y1", "y2", "y3"];
/// Variables available to macroscopic data.
pub const MACRO_VARS: [&str; 4] = ["x1", "x2", "x3", "t"];

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Exp,
}

#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(source: &str, vars: &[&str]) -> Result<Self> {
        let mut p = Parser {
            src: source.as_bytes(),
            pos: 0,
            vars,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Expr {
            source: source.to_string(),
            root: fold(root),
        })
    }

    pub fn constant(v: f64) -> Self {
        Expr {
            source: format!("{v}"),
            root: Node::Num(v),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, vals: &[f64]) -> f64 {
        eval(&self.root, vals)
    }

    /// True when the expression folded to the literal zero.
    pub fn is_zero(&self) -> bool {
        matches!(self.root, Node::Num(v) if v == 0.0)
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }

    pub fn uses_var(&self, index: usize) -> bool {
        uses(&self.root, index)
    }
}

fn eval(n: &Node, v: &[f64]) -> f64 {
    match n {
        Node::Num(x) => *x,
        Node::Var(i) => v[*i],
        Node::Neg(a) => -eval(a, v),
        Node::Add(a, b) => eval(a, v) + eval(b, v),
        Node::Sub(a, b) => eval(a, v) - eval(b, v),
        Node::Mul(a, b) => eval(a, v) * eval(b, v),
        Node::Div(a, b) => eval(a, v) / eval(b, v),
        Node::Call(f, a) => {
            let x = eval(a, v);
            match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
            }
        }
    }
}

fn uses(n: &Node, i: usize) -> bool {
    match n {
        Node::Num(_) => false,
        Node::Var(j) => *j == i,
        Node::Neg(a) | Node::Call(_, a) => uses(a, i),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => uses(a, i) || uses(b, i),
    }
}

// Constant folding. Multiplication by a literal zero folds to zero so that
// "0*sin(x1)" is recognised as identically zero.
fn fold(n: Node) -> Node {
    use Node::*;
    match n {
        Neg(a) => match fold(*a) {
            Num(x) => Num(-x),
            a => Neg(Box::new(a)),
        },
        Call(f, a) => match fold(*a) {
            Num(x) => Num(eval(&Call(f, Box::new(Num(x))), &[])),
            a => Call(f, Box::new(a)),
        },
        Add(a, b) => bin(fold(*a), fold(*b), |x, y| x + y, Add),
        Sub(a, b) => bin(fold(*a), fold(*b), |x, y| x - y, Sub),
        Mul(a, b) => match (fold(*a), fold(*b)) {
            (Num(z), _) | (_, Num(z)) if z == 0.0 => Num(0.0),
            (a, b) => bin(a, b, |x, y| x * y, Mul),
        },
        Div(a, b) => bin(fold(*a), fold(*b), |x, y| x / y, Div),
        other => other,
    }
}

fn bin(a: Node, b: Node, op: fn(f64, f64) -> f64, mk: fn(Box<Node>, Box<Node>) -> Node) -> Node {
    match (a, b) {
        (Node::Num(x), Node::Num(y)) => Node::Num(op(x, y)),
        (a, b) => mk(Box::new(a), Box::new(b)),
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Expr {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                b'-' => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                b'/' => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let func = match name {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    _ => None,
                };
                if let Some(f) = func {
                    if self.peek() != Some(b'(') {
                        return Err(self.err("expected '(' after function name"));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    if self.peek() != Some(b')') {
                        return Err(self.err("expected ')'"));
                    }
                    self.pos += 1;
                    return Ok(Node::Call(f, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Node::Var(i)),
                    None => {
                        self.pos = start;
                        Err(self.err(&format!(
                            "unknown identifier '{name}' (allowed: {})",
                            self.vars.join(", ")
                        )))
                    }
                }
            }
            Some(c) => Err(self.err(&format!("unexpected character '{}'", c as char))),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap();
        text.parse::<f64>().map(Node::Num).map_err(|_| Error::Expr {
            pos: start,
            msg: format!("malformed number '{text}'"),
        })
    }
}
