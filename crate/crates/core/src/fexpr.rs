//! Right-hand side expressions `f(x, z, ν)`.
//!
//! Grammar (ASCII operators; `^` takes a constant exponent and binds tighter
//! than unary minus, so `-x1^2` is `-(x1^2)`):
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := primary ("^" unary)?
//! primary := number | ident | ident "(" expr ")" | "(" expr ")"
//! ```
//!
//! Variables: `x1..xn`, `z`, `nu1..nu{n+1}`, `w` (= `1/nu{n+1}`) and `r2`
//! (= `|x|²`). Functions: `exp`, `log`, `sqrt`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable `{name}` at byte {offset} is out of range for n = {n}")]
    IndexOutOfRange {
        name: String,
        offset: usize,
        n: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("log of non-positive argument {0}")]
    Log(f64),
    #[error("sqrt of negative argument {0}")]
    Sqrt(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("power {base}^{exponent} is undefined")]
    Pow { base: f64, exponent: f64 },
    #[error("non-finite result")]
    NonFinite,
    #[error("environment does not match the expression dimension")]
    Dimension,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// `x_i`, zero-based.
    X(usize),
    Z,
    /// `ν_j`, zero-based; `Nu(n)` is the vertical component.
    Nu(usize),
    W,
    R2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, f64),
    Call(Func, Box<Node>),
}

/// A parsed expression bound to the dimension `n` it was parsed for.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    n: usize,
    root: Node,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Env {
    pub x: Vec<f64>,
    pub z: f64,
    pub nu: Vec<f64>,
}

impl Env {
    /// Environment at a graph point with gradient `du`.
    pub fn at_graph_point(x: &[f64], z: f64, du: &[f64]) -> Self {
        let w = (1.0 + du.iter().map(|d| d * d).sum::<f64>()).sqrt();
        let mut nu: Vec<f64> = du.iter().map(|d| -d / w).collect();
        nu.push(1.0 / w);
        Self {
            x: x.to_vec(),
            z,
            nu,
        }
    }
}

pub fn parse(src: &str, n: usize) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
        n,
    };
    let root = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(Expr { n, root })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n: usize,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            message: message.to_string(),
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.peek() != Some(b'^') {
            return Ok(base);
        }
        self.pos += 1;
        let at = self.pos;
        let exponent = self.unary()?;
        match constant_value(&exponent) {
            Some(e) if e.is_finite() => Ok(Node::Pow(Box::new(base), e)),
            _ => Err(ParseError::Syntax {
                offset: at,
                message: "exponent must be a finite constant".into(),
            }),
        }
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = std::str::from_utf8(&s[start..i]).expect("ascii slice");
        let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })?;
        self.pos = i;
        Ok(Node::Num(value))
    }

    fn ident(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && s[i].is_ascii_alphanumeric() {
            i += 1;
        }
        let name = std::str::from_utf8(&s[start..i]).expect("ascii slice").to_string();
        self.pos = i;

        let func = match name.as_str() {
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        };
        if let Some(func) = func {
            if !self.eat(b'(') {
                return Err(self.err(&format!("expected `(` after `{name}`")));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.err("expected `)`"));
            }
            return Ok(Node::Call(func, Box::new(arg)));
        }

        let out_of_range = |name: String| ParseError::IndexOutOfRange {
            name,
            offset: start,
            n: self.n,
        };
        let indexed = |prefix: &str| -> Option<usize> {
            let rest = name.strip_prefix(prefix)?;
            if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) || rest.starts_with('0') {
                return None;
            }
            rest.parse().ok()
        };
        let var = match name.as_str() {
            "z" => Var::Z,
            "w" => Var::W,
            "r2" => Var::R2,
            _ => {
                if let Some(j) = indexed("nu") {
                    if j > self.n + 1 {
                        return Err(out_of_range(name));
                    }
                    Var::Nu(j - 1)
                } else if let Some(i) = indexed("x") {
                    if i > self.n {
                        return Err(out_of_range(name));
                    }
                    Var::X(i - 1)
                } else {
                    return Err(ParseError::UnknownIdentifier {
                        name,
                        offset: start,
                    });
                }
            }
        };
        Ok(Node::Var(var))
    }
}

fn constant_value(node: &Node) -> Option<f64> {
    if node.has_vars() {
        None
    } else {
        eval_node(node, empty_env()).ok()
    }
}

// Variable-free nodes never read the environment.
fn empty_env() -> &'static Env {
    static EMPTY: std::sync::OnceLock<Env> = std::sync::OnceLock::new();
    EMPTY.get_or_init(|| Env {
        x: Vec::new(),
        z: 0.0,
        nu: vec![1.0],
    })
}

impl Node {
    fn has_vars(&self) -> bool {
        match self {
            Node::Num(_) => false,
            Node::Var(_) => true,
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.has_vars(),
            Node::Bin(_, a, b) => a.has_vars() || b.has_vars(),
        }
    }

    fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        match self {
            Node::Num(_) => {}
            Node::Var(v) => f(*v),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.visit_vars(f),
            Node::Bin(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }
}

fn check(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

fn eval_node(node: &Node, env: &Env) -> Result<f64, EvalError> {
    match node {
        Node::Num(v) => Ok(*v),
        Node::Var(v) => match *v {
            Var::X(i) => env.x.get(i).copied().ok_or(EvalError::Dimension),
            Var::Z => Ok(env.z),
            Var::Nu(j) => env.nu.get(j).copied().ok_or(EvalError::Dimension),
            Var::W => {
                let last = *env.nu.last().ok_or(EvalError::Dimension)?;
                if last == 0.0 {
                    Err(EvalError::DivisionByZero)
                } else {
                    check(1.0 / last)
                }
            }
            Var::R2 => Ok(env.x.iter().map(|x| x * x).sum()),
        },
        Node::Neg(a) => Ok(-eval_node(a, env)?),
        Node::Bin(op, a, b) => {
            let a = eval_node(a, env)?;
            let b = eval_node(b, env)?;
            match op {
                BinOp::Add => check(a + b),
                BinOp::Sub => check(a - b),
                BinOp::Mul => check(a * b),
                BinOp::Div => {
                    if b == 0.0 {
                        Err(EvalError::DivisionByZero)
                    } else {
                        check(a / b)
                    }
                }
            }
        }
        Node::Pow(a, e) => {
            let base = eval_node(a, env)?;
            if base < 0.0 && e.fract() != 0.0 {
                return Err(EvalError::Pow {
                    base,
                    exponent: *e,
                });
            }
            if base == 0.0 && *e < 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            let v = if e.fract() == 0.0 && e.abs() <= i32::MAX as f64 {
                base.powi(*e as i32)
            } else {
                base.powf(*e)
            };
            check(v)
        }
        Node::Call(func, a) => {
            let v = eval_node(a, env)?;
            match func {
                Func::Exp => check(v.exp()),
                Func::Log => {
                    if v <= 0.0 {
                        Err(EvalError::Log(v))
                    } else {
                        Ok(v.ln())
                    }
                }
                Func::Sqrt => {
                    if v < 0.0 {
                        Err(EvalError::Sqrt(v))
                    } else {
                        Ok(v.sqrt())
                    }
                }
            }
        }
    }
}

// Differentiation w.r.t. z or one ν component. `w = 1/ν_{n+1}` so
// dw/dν_{n+1} = -w².
#[derive(Clone, Copy, PartialEq)]
enum Wrt {
    Z,
    Nu(usize),
}

fn num(v: f64) -> Node {
    Node::Num(v)
}

fn add(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(x), Node::Num(y)) => num(x + y),
        (Node::Num(x), _) if *x == 0.0 => b,
        (_, Node::Num(y)) if *y == 0.0 => a,
        _ => Node::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(x), Node::Num(y)) => num(x - y),
        (_, Node::Num(y)) if *y == 0.0 => a,
        (Node::Num(x), _) if *x == 0.0 => neg(b),
        _ => Node::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(x), Node::Num(y)) => num(x * y),
        (Node::Num(x), _) | (_, Node::Num(x)) if *x == 0.0 => num(0.0),
        (Node::Num(x), _) if *x == 1.0 => b,
        (_, Node::Num(y)) if *y == 1.0 => a,
        _ => Node::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(x), _) if *x == 0.0 => num(0.0),
        (_, Node::Num(y)) if *y == 1.0 => a,
        _ => Node::Bin(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

fn neg(a: Node) -> Node {
    match a {
        Node::Num(x) => num(-x),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn pow(a: Node, e: f64) -> Node {
    if e == 0.0 {
        num(1.0)
    } else if e == 1.0 {
        a
    } else {
        Node::Pow(Box::new(a), e)
    }
}

fn diff(node: &Node, wrt: Wrt, n: usize) -> Node {
    match node {
        Node::Num(_) => num(0.0),
        Node::Var(v) => match (*v, wrt) {
            (Var::Z, Wrt::Z) => num(1.0),
            (Var::Nu(j), Wrt::Nu(k)) if j == k => num(1.0),
            (Var::W, Wrt::Nu(k)) if k == n => neg(pow(Node::Var(Var::W), 2.0)),
            _ => num(0.0),
        },
        Node::Neg(a) => neg(diff(a, wrt, n)),
        Node::Bin(op, a, b) => {
            let da = diff(a, wrt, n);
            let db = diff(b, wrt, n);
            match op {
                BinOp::Add => add(da, db),
                BinOp::Sub => sub(da, db),
                BinOp::Mul => add(mul(da, (**b).clone()), mul((**a).clone(), db)),
                BinOp::Div => {
                    let num_part = sub(mul(da, (**b).clone()), mul((**a).clone(), db));
                    if matches!(num_part, Node::Num(x) if x == 0.0) {
                        num(0.0)
                    } else {
                        div(num_part, pow((**b).clone(), 2.0))
                    }
                }
            }
        }
        Node::Pow(a, e) => {
            let da = diff(a, wrt, n);
            if matches!(da, Node::Num(x) if x == 0.0) {
                return num(0.0);
            }
            mul(mul(num(*e), pow((**a).clone(), e - 1.0)), da)
        }
        Node::Call(func, a) => {
            let da = diff(a, wrt, n);
            if matches!(da, Node::Num(x) if x == 0.0) {
                return num(0.0);
            }
            let outer = match func {
                Func::Exp => Node::Call(Func::Exp, a.clone()),
                Func::Log => div(num(1.0), (**a).clone()),
                Func::Sqrt => div(num(0.5), Node::Call(Func::Sqrt, a.clone())),
            };
            mul(outer, da)
        }
    }
}

/// Symbolic partial derivatives of an expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Partials {
    pub dz: Expr,
    pub dnu: Vec<Expr>,
}

impl Expr {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            n,
            root: Node::Num(value),
        }
    }

    pub fn eval(&self, env: &Env) -> Result<f64, EvalError> {
        if env.x.len() != self.n || env.nu.len() != self.n + 1 {
            return Err(EvalError::Dimension);
        }
        eval_node(&self.root, env)
    }

    /// Constant value when the expression has no variables.
    pub fn as_constant(&self) -> Option<f64> {
        constant_value(&self.root)
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.root.visit_vars(&mut |v| {
            if !out.contains(&v) {
                out.push(v);
            }
        });
        out
    }

    pub fn partials(&self) -> Partials {
        let wrap = |root| Expr { n: self.n, root };
        Partials {
            dz: wrap(diff(&self.root, Wrt::Z, self.n)),
            dnu: (0..=self.n)
                .map(|j| wrap(diff(&self.root, Wrt::Nu(j), self.n)))
                .collect(),
        }
    }
}

fn write_node(node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        Node::Num(v) => {
            if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                write!(f, "(-{:?})", -v)
            } else {
                write!(f, "{v:?}")
            }
        }
        Node::Var(v) => match v {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Z => write!(f, "z"),
            Var::Nu(j) => write!(f, "nu{}", j + 1),
            Var::W => write!(f, "w"),
            Var::R2 => write!(f, "r2"),
        },
        Node::Neg(a) => {
            write!(f, "(-")?;
            write_node(a, f)?;
            write!(f, ")")
        }
        Node::Bin(op, a, b) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
            };
            write!(f, "(")?;
            write_node(a, f)?;
            write!(f, " {sym} ")?;
            write_node(b, f)?;
            write!(f, ")")
        }
        Node::Pow(a, e) => {
            write!(f, "(")?;
            write_node(a, f)?;
            if *e < 0.0 {
                write!(f, "^(-{:?}))", -e)
            } else {
                write!(f, "^{e:?})")
            }
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(a, f)?;
            write!(f, ")")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

/// Outcome of the sampled check of `f > 0` and `f_z ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub samples: usize,
    pub min_f: f64,
    pub min_fz: f64,
    pub passed: bool,
    pub violation: Option<String>,
}

pub const FZ_TOLERANCE: f64 = 1e-12;

pub fn check_hypotheses(e: &Expr, samples: &[Env]) -> HypothesisReport {
    let dz = e.partials().dz;
    let mut min_f = f64::INFINITY;
    let mut min_fz = f64::INFINITY;
    let mut violation = None;
    for env in samples {
        match (e.eval(env), dz.eval(env)) {
            (Ok(fv), Ok(fz)) => {
                min_f = min_f.min(fv);
                min_fz = min_fz.min(fz);
            }
            (Err(err), _) | (_, Err(err)) => {
                if violation.is_none() {
                    violation = Some(format!("evaluation failed at x = {:?}, z = {}: {err}", env.x, env.z));
                }
            }
        }
    }
    if violation.is_none() {
        if min_f <= 0.0 {
            violation = Some(format!("f is not positive (min f = {min_f})"));
        } else if min_fz < -FZ_TOLERANCE {
            violation = Some(format!("f_z is negative (min f_z = {min_fz})"));
        }
    }
    HypothesisReport {
        samples: samples.len(),
        min_f,
        min_fz,
        passed: violation.is_none(),
        violation,
    }
}

/// Deterministic sample of environments over the given points, heights in
/// `[z_min, 0]` and upward unit normals.
pub fn sample_envs(points: &[Vec<f64>], z_min: f64, count: usize, seed: u64) -> Vec<Env> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x = points[rng.random_range(0..points.len())].clone();
            let z = z_min * rng.random::<f64>();
            let mut nu: Vec<f64> = (0..=x.len()).map(|_| rng.sample(StandardNormal)).collect();
            let last = nu.len() - 1;
            nu[last] = nu[last].abs() + 1e-3;
            let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
            nu.iter_mut().for_each(|v| *v /= norm);
            Env { x, z, nu }
        })
        .collect()
}
