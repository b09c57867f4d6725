//! Closed-form scalar expressions used in scenario files.
//!
//! Grammar: `+ - * /`, unary minus, parentheses, `sin`, `cos`, `exp`,
//! numeric literals, `pi`, base coordinates `x0, x1, ...` and fiber
//! coordinates `v0, v1, ...`. Nothing else parses.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("expression error at byte {position}: {message}")]
pub struct ExprError {
    pub position: usize,
    pub message: String,
}

/// How many coordinates of each kind an expression may reference.
#[derive(Clone, Copy, Debug)]
pub struct VarScope {
    pub base: usize,
    pub fiber: usize,
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Const(f64),
    Base(usize),
    Fiber(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Sin(Box<Node>),
    Cos(Box<Node>),
    Exp(Box<Node>),
}

/// A parsed, constant-folded expression.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl Expr {
    pub fn parse(source: &str, scope: VarScope) -> Result<Self, ExprError> {
        let mut parser = Parser { src: source.as_bytes(), pos: 0, scope };
        let root = parser.expr()?;
        parser.skip_ws();
        if parser.pos != parser.src.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        Ok(Self { source: source.to_string(), root: fold(root) })
    }

    pub fn constant(value: f64) -> Self {
        Self { source: format!("{value}"), root: Node::Const(value) }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// The value, if the expression references no coordinate.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn eval(&self, base: &[f64], fiber: &[f64]) -> f64 {
        eval(&self.root, base, fiber)
    }

    /// Whether the expression reads any fiber coordinate.
    pub fn uses_fiber(&self) -> bool {
        uses_fiber(&self.root)
    }
}

fn eval(node: &Node, base: &[f64], fiber: &[f64]) -> f64 {
    match node {
        Node::Const(c) => *c,
        Node::Base(i) => base[*i],
        Node::Fiber(i) => fiber[*i],
        Node::Neg(a) => -eval(a, base, fiber),
        Node::Add(a, b) => eval(a, base, fiber) + eval(b, base, fiber),
        Node::Sub(a, b) => eval(a, base, fiber) - eval(b, base, fiber),
        Node::Mul(a, b) => eval(a, base, fiber) * eval(b, base, fiber),
        Node::Div(a, b) => eval(a, base, fiber) / eval(b, base, fiber),
        Node::Sin(a) => eval(a, base, fiber).sin(),
        Node::Cos(a) => eval(a, base, fiber).cos(),
        Node::Exp(a) => eval(a, base, fiber).exp(),
    }
}

fn uses_fiber(node: &Node) -> bool {
    match node {
        Node::Const(_) | Node::Base(_) => false,
        Node::Fiber(_) => true,
        Node::Neg(a) | Node::Sin(a) | Node::Cos(a) | Node::Exp(a) => uses_fiber(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => uses_fiber(a) || uses_fiber(b),
    }
}

fn fold(node: Node) -> Node {
    use Node::*;
    let unary = |a: Node, f: fn(f64) -> f64, wrap: fn(Box<Node>) -> Node| match fold(a) {
        Const(c) => Const(f(c)),
        other => wrap(Box::new(other)),
    };
    let binary =
        |a: Node, b: Node, f: fn(f64, f64) -> f64, wrap: fn(Box<Node>, Box<Node>) -> Node| match (fold(a), fold(b)) {
            (Const(x), Const(y)) => Const(f(x, y)),
            (x, y) => wrap(Box::new(x), Box::new(y)),
        };
    match node {
        Neg(a) => unary(*a, |x| -x, Neg),
        Sin(a) => unary(*a, f64::sin, Sin),
        Cos(a) => unary(*a, f64::cos, Cos),
        Exp(a) => unary(*a, f64::exp, Exp),
        Add(a, b) => binary(*a, *b, |x, y| x + y, Add),
        Sub(a, b) => binary(*a, *b, |x, y| x - y, Sub),
        Mul(a, b) => match binary(*a, *b, |x, y| x * y, Mul) {
            Mul(x, _) | Mul(_, x) if *x == Const(0.0) => Const(0.0),
            other => other,
        },
        Div(a, b) => binary(*a, *b, |x, y| x / y, Div),
        leaf => leaf,
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    scope: VarScope,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError { position: self.pos, message: message.to_string() }
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

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == b'+' { Node::Add(lhs.into(), rhs.into()) } else { Node::Sub(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == b'*' { Node::Mul(lhs.into(), rhs.into()) } else { Node::Div(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(self.unary()?.into()))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .map(Node::Const)
            .map_err(|_| ExprError { position: start, message: format!("invalid number '{text}'") })
    }

    fn identifier(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let err = |message: String| ExprError { position: start, message };
        match name {
            "pi" => Ok(Node::Const(std::f64::consts::PI)),
            "sin" | "cos" | "exp" => {
                self.expect(b'(')?;
                let arg = Box::new(self.expr()?);
                self.expect(b')')?;
                Ok(match name {
                    "sin" => Node::Sin(arg),
                    "cos" => Node::Cos(arg),
                    _ => Node::Exp(arg),
                })
            }
            _ => {
                let (kind, digits) = name.split_at(1);
                let index: usize = digits.parse().map_err(|_| err(format!("unknown identifier '{name}'")))?;
                match kind {
                    "x" if index < self.scope.base => Ok(Node::Base(index)),
                    "v" if index < self.scope.fiber => Ok(Node::Fiber(index)),
                    "x" | "v" => Err(err(format!("coordinate '{name}' out of range"))),
                    _ => Err(err(format!("unknown identifier '{name}'"))),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCOPE: VarScope = VarScope { base: 2, fiber: 3 };

    fn eval(src: &str, base: &[f64], fiber: &[f64]) -> f64 {
        Expr::parse(src, SCOPE).unwrap().eval(base, fiber)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(eval("1 + 2 * 3", &[0.0; 2], &[0.0; 3]), 7.0);
        assert_eq!(eval("(1 + 2) * 3", &[0.0; 2], &[0.0; 3]), 9.0);
        assert_eq!(eval("-2 - -3", &[0.0; 2], &[0.0; 3]), 1.0);
        assert_eq!(eval("8 / 4 / 2", &[0.0; 2], &[0.0; 3]), 1.0);
        assert_eq!(eval("1.5e2", &[0.0; 2], &[0.0; 3]), 150.0);
    }

    #[test]
    fn functions_and_coordinates() {
        let v = eval("0.2*sin(x0) + cos(x1)*v2 + exp(0)", &[1.0, 0.5], &[0.0, 0.0, 2.0]);
        assert!((v - (0.2 * 1f64.sin() + 0.5f64.cos() * 2.0 + 1.0)).abs() < 1e-15);
        assert!((eval("pi", &[0.0; 2], &[0.0; 3]) - std::f64::consts::PI).abs() < 1e-16);
    }

    #[test]
    fn folding_detects_constants() {
        assert_eq!(Expr::parse("2*pi/4", SCOPE).unwrap().as_constant(), Some(std::f64::consts::PI / 2.0));
        assert_eq!(Expr::parse("0*x0", SCOPE).unwrap().as_constant(), Some(0.0));
        assert_eq!(Expr::parse("x0", SCOPE).unwrap().as_constant(), None);
        assert!(Expr::parse("v1*v1", SCOPE).unwrap().uses_fiber());
        assert!(!Expr::parse("sin(x1)", SCOPE).unwrap().uses_fiber());
    }

    #[test]
    fn rejects_outside_grammar() {
        for bad in ["x2", "v3", "sqrt(2)", "2^3", "1 +", "y0", "sin 1", "(1", "1)", "#"] {
            assert!(Expr::parse(bad, SCOPE).is_err(), "{bad} should fail");
        }
        let e = Expr::parse("1 + q0", SCOPE).unwrap_err();
        assert_eq!(e.position, 4);
    }
}
