//! Surface definition files (`.srf`).
//!
//! ```text
//! surface := "surface" IDENT "{" domain? exclude? consts comp comp comp comp "}"
//! domain  := "domain" "u" "in" "[" NUM "," NUM "]" "v" "in" "[" NUM "," NUM "]"
//! exclude := "exclude" "[" point ("," point)* "]"     point := "(" NUM "," NUM ")"
//! consts  := ("const" IDENT "=" NUM ";"?)*
//! comp    := "x" INT "=" expr ";"                     INT in 1..=4
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := atom ("^" ["-"] INT)?
//! atom    := NUM | IDENT | IDENT "(" expr ")" | "(" expr ")"
//! ```
//!
//! Whitespace is insignificant and `#` starts a comment that runs to the end
//! of the line. The Unicode minus sign is accepted as `-`. Named constants are
//! folded into literals while parsing, so an [`Expr`] only ever refers to `u`
//! and `v`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::jet::{Elementary, Jet, JetError, Real, Variable};

pub const DEFAULT_DOMAIN: Domain = Domain {
    u_min: -1.0,
    u_max: 1.0,
    v_min: -1.0,
    v_max: 1.0,
};

const FUNCTIONS: [(&str, Elementary); 7] = [
    ("sin", Elementary::Sin),
    ("cos", Elementary::Cos),
    ("exp", Elementary::Exp),
    ("log", Elementary::Log),
    ("sinh", Elementary::Sinh),
    ("cosh", Elementary::Cosh),
    ("sqrt", Elementary::Sqrt),
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("{line}:{column}: expected {}, found {found}", .expected.join(" or "))]
    Parse {
        line: usize,
        column: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("{line}:{column}: function {name} takes exactly one argument, got {got}")]
    Arity {
        line: usize,
        column: usize,
        name: String,
        got: usize,
    },
    #[error("{line}:{column}: unknown function {name}")]
    UnknownFunction { line: usize, column: usize, name: String },
    #[error("{line}:{column}: unknown identifier {name}")]
    UnknownIdentifier { line: usize, column: usize, name: String },
    #[error("{line}:{column}: exponent must be an integer constant")]
    NonIntegerExponent { line: usize, column: usize },
    #[error("missing component x{0}")]
    MissingComponent(usize),
    #[error("{line}:{column}: component x{index} defined twice")]
    DuplicateComponent { line: usize, column: usize, index: usize },
    #[error("{line}:{column}: component index must be 1..4, got {index}")]
    ComponentIndex { line: usize, column: usize, index: i64 },
    #[error("{line}:{column}: constant {name} defined twice")]
    DuplicateConstant { line: usize, column: usize, name: String },
    #[error("empty domain u in [{u_min}, {u_max}], v in [{v_min}, {v_max}]")]
    EmptyDomain {
        u_min: Real,
        u_max: Real,
        v_min: Real,
        v_max: Real,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("component x{component}: {source}")]
    Component {
        component: usize,
        #[source]
        source: JetError,
    },
    #[error("point ({u}, {v}) is an excluded singular point")]
    ExcludedPoint { u: Real, v: Real },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(&self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Sin,
    Cos,
    Exp,
    Log,
    Sinh,
    Cosh,
    Sqrt,
}

impl Function {
    pub fn name(&self) -> &'static str {
        self.elementary().name()
    }

    pub fn elementary(&self) -> Elementary {
        match self {
            Function::Sin => Elementary::Sin,
            Function::Cos => Elementary::Cos,
            Function::Exp => Elementary::Exp,
            Function::Log => Elementary::Log,
            Function::Sinh => Elementary::Sinh,
            Function::Cosh => Elementary::Cosh,
            Function::Sqrt => Elementary::Sqrt,
        }
    }

    fn lookup(name: &str) -> Option<Function> {
        FUNCTIONS.iter().find(|(n, _)| *n == name).map(|(_, e)| match e {
            Elementary::Sin => Function::Sin,
            Elementary::Cos => Function::Cos,
            Elementary::Exp => Function::Exp,
            Elementary::Log => Function::Log,
            Elementary::Sinh => Function::Sinh,
            Elementary::Cosh => Function::Cosh,
            _ => Function::Sqrt,
        })
    }
}

/// Expression tree over the chart parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(Real),
    Var(Variable),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Function, Box<Expr>),
}

impl Expr {
    pub fn eval_jet(&self, u: &Jet, v: &Jet) -> Result<Jet, JetError> {
        Ok(match self {
            Expr::Num(x) => Jet::constant(*x, u.order()),
            Expr::Var(Variable::U) => u.clone(),
            Expr::Var(Variable::V) => v.clone(),
            Expr::Neg(e) => -e.eval_jet(u, v)?,
            Expr::Binary(op, a, b) => {
                let a = a.eval_jet(u, v)?;
                let b = b.eval_jet(u, v)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a.checked_div(&b)?,
                }
            }
            Expr::Pow(base, n) => {
                let base = base.eval_jet(u, v)?;
                if *n < 0 && base.value().abs() < crate::jet::POLE_THRESHOLD {
                    return Err(JetError::DivisionByZeroJet { value: base.value() });
                }
                base.powi(*n)?
            }
            Expr::Call(f, arg) => arg.eval_jet(u, v)?.elementary(f.elementary())?,
        })
    }

    /// Plain floating-point evaluation.
    pub fn eval(&self, u: Real, v: Real) -> Real {
        match self {
            Expr::Num(x) => *x,
            Expr::Var(Variable::U) => u,
            Expr::Var(Variable::V) => v,
            Expr::Neg(e) => -e.eval(u, v),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(u, v), b.eval(u, v));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Pow(base, n) => base.eval(u, v).powi(*n),
            Expr::Call(f, arg) => f.elementary().eval(arg.eval(u, v)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) if *x < 0.0 || (*x == 0.0 && x.is_sign_negative()) => {
                write!(f, "(-{})", format_number(-x))
            }
            Expr::Num(x) => write!(f, "{}", format_number(*x)),
            Expr::Var(Variable::U) => f.write_char('u'),
            Expr::Var(Variable::V) => f.write_char('v'),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Pow(base, n) => write!(f, "({base} ^ {n})"),
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
fn format_number(x: Real) -> String {
    let s = format!("{x:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub u_min: Real,
    pub u_max: Real,
    pub v_min: Real,
    pub v_max: Real,
}

impl Domain {
    pub fn contains(&self, u: Real, v: Real) -> bool {
        u >= self.u_min && u <= self.u_max && v >= self.v_min && v <= self.v_max
    }

    pub fn width(&self) -> Real {
        (self.u_max - self.u_min).min(self.v_max - self.v_min)
    }

    /// `n x n` tensor grid including the corners, row-major in `v` then `u`.
    pub fn grid(&self, n: usize) -> Vec<(Real, Real)> {
        let lin = |a: Real, b: Real, i: usize| {
            if n < 2 {
                0.5 * (a + b)
            } else {
                a + (b - a) * i as Real / (n - 1) as Real
            }
        };
        (0..n)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .map(|(i, j)| (lin(self.u_min, self.u_max, i), lin(self.v_min, self.v_max, j)))
            .collect()
    }

    /// Domain shrunk by `fraction` of its extent on every side.
    pub fn shrink(&self, fraction: Real) -> Domain {
        let du = (self.u_max - self.u_min) * fraction;
        let dv = (self.v_max - self.v_min) * fraction;
        Domain {
            u_min: self.u_min + du,
            u_max: self.u_max - du,
            v_min: self.v_min + dv,
            v_max: self.v_max - dv,
        }
    }
}

/// A parsed immersion `x(u, v)` into R^4.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceChart {
    pub name: String,
    pub components: [Expr; 4],
    pub domain: Domain,
    pub excluded_points: Vec<(Real, Real)>,
    /// Named constants as declared; already folded into `components`.
    pub constants: BTreeMap<String, Real>,
}

/// Points closer than this (in parameter space) to an excluded point are
/// rejected by [`eval_component_jets`].
pub const EXCLUSION_RADIUS: Real = 1e-12;

impl SurfaceChart {
    pub fn point(&self, u: Real, v: Real) -> [Real; 4] {
        [0, 1, 2, 3].map(|i| self.components[i].eval(u, v))
    }

    /// Canonical text form; `parse_surface(&chart.to_source())` reproduces
    /// the chart.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        let d = &self.domain;
        let _ = writeln!(out, "surface {} {{", self.name);
        let _ = writeln!(
            out,
            "  domain u in [{}, {}] v in [{}, {}]",
            format_number(d.u_min),
            format_number(d.u_max),
            format_number(d.v_min),
            format_number(d.v_max)
        );
        if !self.excluded_points.is_empty() {
            let pts: Vec<String> = self
                .excluded_points
                .iter()
                .map(|(u, v)| format!("({}, {})", format_number(*u), format_number(*v)))
                .collect();
            let _ = writeln!(out, "  exclude [{}]", pts.join(", "));
        }
        for (name, value) in &self.constants {
            let _ = writeln!(out, "  const {name} = {}", format_number(*value));
        }
        for (i, c) in self.components.iter().enumerate() {
            let _ = writeln!(out, "  x{} = {c};", i + 1);
        }
        out.push_str("}\n");
        out
    }
}

/// Taylor jets of the four components at `(u, v)`.
pub fn eval_component_jets(
    chart: &SurfaceChart,
    point: (Real, Real),
    order: usize,
) -> Result<[Jet; 4], EvalError> {
    let (u0, v0) = point;
    if chart
        .excluded_points
        .iter()
        .any(|&(eu, ev)| (eu - u0).hypot(ev - v0) <= EXCLUSION_RADIUS)
    {
        return Err(EvalError::ExcludedPoint { u: u0, v: v0 });
    }
    let u = Jet::variable(Variable::U, u0, order);
    let v = Jet::variable(Variable::V, v0, order);
    let mut out: [Option<Jet>; 4] = Default::default();
    for (i, expr) in chart.components.iter().enumerate() {
        let jet = expr
            .eval_jet(&u, &v)
            .map_err(|source| EvalError::Component { component: i + 1, source })?;
        out[i] = Some(jet);
    }
    Ok(out.map(|j| j.expect("all components evaluated")))
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(Real),
    Punct(char),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Num(x) => write!(f, "number {x}"),
            Tok::Punct(c) => write!(f, "'{c}'"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
    /// Source text of numeric literals, used to check integer exponents.
    text: String,
}

fn tokenize(src: &str) -> Result<Vec<Token>, DslError> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            tokens.push(Token {
                tok: Tok::Ident(s.clone()),
                line: start_line,
                column: start_col,
                text: s,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
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
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            let value: Real = s.parse().map_err(|_| DslError::Parse {
                line: start_line,
                column: start_col,
                expected: vec!["number".into()],
                found: format!("'{s}'"),
            })?;
            tokens.push(Token {
                tok: Tok::Num(value),
                line: start_line,
                column: start_col,
                text: s,
            });
            continue;
        }
        let p = match c {
            '\u{2212}' => '-',
            '{' | '}' | '[' | ']' | '(' | ')' | ',' | ';' | '=' | '+' | '-' | '*' | '/' | '^' => c,
            _ => {
                return Err(DslError::Parse {
                    line,
                    column: col,
                    expected: vec!["token".into()],
                    found: format!("'{c}'"),
                })
            }
        };
        tokens.push(Token {
            tok: Tok::Punct(p),
            line,
            column: col,
            text: p.to_string(),
        });
        i += 1;
        col += 1;
    }
    tokens.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
        text: String::new(),
    });
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    constants: BTreeMap<String, Real>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> DslError {
        let t = self.peek();
        DslError::Parse {
            line: t.line,
            column: t.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.tok.to_string(),
        }
    }

    fn is_punct(&self, c: char) -> bool {
        self.peek().tok == Tok::Punct(c)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn expect_punct(&mut self, c: char) -> Result<(), DslError> {
        if self.is_punct(c) {
            self.next();
            Ok(())
        } else {
            Err(self.error(&[&format!("'{c}'")]))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), DslError> {
        if self.is_keyword(kw) {
            self.next();
            Ok(())
        } else {
            Err(self.error(&[&format!("'{kw}'")]))
        }
    }

    fn ident(&mut self) -> Result<String, DslError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    /// Signed numeric literal.
    fn number(&mut self) -> Result<Real, DslError> {
        let sign = if self.is_punct('-') {
            self.next();
            -1.0
        } else {
            1.0
        };
        match self.peek().tok {
            Tok::Num(x) => {
                self.next();
                Ok(sign * x)
            }
            _ => Err(self.error(&["number"])),
        }
    }

    fn surface(&mut self) -> Result<SurfaceChart, DslError> {
        self.expect_keyword("surface")?;
        let name = self.ident()?;
        self.expect_punct('{')?;
        let domain = if self.is_keyword("domain") {
            self.domain()?
        } else {
            DEFAULT_DOMAIN
        };
        let excluded_points = if self.is_keyword("exclude") {
            self.exclusions()?
        } else {
            Vec::new()
        };
        while self.is_keyword("const") {
            self.next();
            let t = self.peek().clone();
            let cname = self.ident()?;
            if cname == "u" || cname == "v" || Function::lookup(&cname).is_some() {
                return Err(DslError::Parse {
                    line: t.line,
                    column: t.column,
                    expected: vec!["constant name".into()],
                    found: format!("reserved name '{cname}'"),
                });
            }
            self.expect_punct('=')?;
            let value = self.number()?;
            if self.is_punct(';') {
                self.next();
            }
            if self.constants.insert(cname.clone(), value).is_some() {
                return Err(DslError::DuplicateConstant {
                    line: t.line,
                    column: t.column,
                    name: cname,
                });
            }
        }
        let mut components: [Option<Expr>; 4] = Default::default();
        while !self.is_punct('}') {
            let t = self.peek().clone();
            let index = match &t.tok {
                Tok::Ident(s) if s.len() > 1 && s.starts_with('x') => {
                    s[1..].parse::<i64>().map_err(|_| self.error(&["component 'x1'..'x4'", "'}'"]))?
                }
                _ => return Err(self.error(&["component 'x1'..'x4'", "'}'"])),
            };
            if !(1..=4).contains(&index) {
                return Err(DslError::ComponentIndex {
                    line: t.line,
                    column: t.column,
                    index,
                });
            }
            self.next();
            self.expect_punct('=')?;
            let expr = self.expr()?;
            self.expect_punct(';')?;
            let slot = &mut components[index as usize - 1];
            if slot.is_some() {
                return Err(DslError::DuplicateComponent {
                    line: t.line,
                    column: t.column,
                    index: index as usize,
                });
            }
            *slot = Some(expr);
        }
        self.expect_punct('}')?;
        if self.peek().tok != Tok::Eof {
            return Err(self.error(&["end of input"]));
        }
        if let Some(missing) = components.iter().position(Option::is_none) {
            return Err(DslError::MissingComponent(missing + 1));
        }
        Ok(SurfaceChart {
            name,
            components: components.map(|c| c.expect("checked above")),
            domain,
            excluded_points,
            constants: std::mem::take(&mut self.constants),
        })
    }

    fn domain(&mut self) -> Result<Domain, DslError> {
        self.expect_keyword("domain")?;
        let range = |p: &mut Parser, var: &str| -> Result<(Real, Real), DslError> {
            p.expect_keyword(var)?;
            p.expect_keyword("in")?;
            p.expect_punct('[')?;
            let lo = p.number()?;
            p.expect_punct(',')?;
            let hi = p.number()?;
            p.expect_punct(']')?;
            Ok((lo, hi))
        };
        let (u_min, u_max) = range(self, "u")?;
        let (v_min, v_max) = range(self, "v")?;
        if !(u_min < u_max && v_min < v_max) {
            return Err(DslError::EmptyDomain {
                u_min,
                u_max,
                v_min,
                v_max,
            });
        }
        Ok(Domain {
            u_min,
            u_max,
            v_min,
            v_max,
        })
    }

    fn exclusions(&mut self) -> Result<Vec<(Real, Real)>, DslError> {
        self.expect_keyword("exclude")?;
        self.expect_punct('[')?;
        let mut pts = Vec::new();
        loop {
            self.expect_punct('(')?;
            let u = self.number()?;
            self.expect_punct(',')?;
            let v = self.number()?;
            self.expect_punct(')')?;
            pts.push((u, v));
            if self.is_punct(',') {
                self.next();
            } else {
                break;
            }
        }
        self.expect_punct(']')?;
        Ok(pts)
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.is_punct('+') {
                BinOp::Add
            } else if self.is_punct('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.is_punct('*') {
                BinOp::Mul
            } else if self.is_punct('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            self.next();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if self.is_punct('-') {
            self.next();
            return Ok(match self.unary()? {
                Expr::Num(x) => Expr::Num(-x),
                e => Expr::Neg(Box::new(e)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, DslError> {
        let base = self.atom()?;
        if !self.is_punct('^') {
            return Ok(base);
        }
        self.next();
        let t = self.peek().clone();
        let negative = if self.is_punct('-') {
            self.next();
            true
        } else {
            false
        };
        let not_int = DslError::NonIntegerExponent {
            line: t.line,
            column: t.column,
        };
        let value = match self.peek().tok.clone() {
            Tok::Num(x) => {
                if self.peek().text.contains(['.', 'e', 'E']) && x.fract() != 0.0 {
                    return Err(not_int);
                }
                self.next();
                x
            }
            Tok::Ident(name) => match self.constants.get(&name) {
                Some(&x) => {
                    self.next();
                    x
                }
                None => return Err(not_int),
            },
            _ => return Err(self.error(&["integer exponent"])),
        };
        if value.fract() != 0.0 || value.abs() > i32::MAX as Real {
            return Err(not_int);
        }
        let n = if negative { -(value as i32) } else { value as i32 };
        Ok(Expr::Pow(Box::new(base), n))
    }

    fn atom(&mut self) -> Result<Expr, DslError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(x) => {
                self.next();
                Ok(Expr::Num(x))
            }
            Tok::Punct('(') => {
                self.next();
                let e = self.expr()?;
                self.expect_punct(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.next();
                if self.is_punct('(') {
                    self.next();
                    let mut args = vec![self.expr()?];
                    while self.is_punct(',') {
                        self.next();
                        args.push(self.expr()?);
                    }
                    self.expect_punct(')')?;
                    let Some(func) = Function::lookup(&name) else {
                        return Err(DslError::UnknownFunction {
                            line: t.line,
                            column: t.column,
                            name,
                        });
                    };
                    if args.len() != 1 {
                        return Err(DslError::Arity {
                            line: t.line,
                            column: t.column,
                            name,
                            got: args.len(),
                        });
                    }
                    return Ok(Expr::Call(func, Box::new(args.pop().expect("one argument"))));
                }
                match name.as_str() {
                    "u" => Ok(Expr::Var(Variable::U)),
                    "v" => Ok(Expr::Var(Variable::V)),
                    _ => match self.constants.get(&name) {
                        Some(&x) => Ok(Expr::Num(x)),
                        None => Err(DslError::UnknownIdentifier {
                            line: t.line,
                            column: t.column,
                            name,
                        }),
                    },
                }
            }
            _ => Err(self.error(&["number", "identifier", "'('", "'-'"])),
        }
    }
}

pub fn parse_surface(text: &str) -> Result<SurfaceChart, DslError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        constants: BTreeMap::new(),
    };
    parser.surface()
}

/// Parses a single expression in `u`, `v`.
pub fn parse_expr(text: &str) -> Result<Expr, DslError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        constants: BTreeMap::new(),
    };
    let e = parser.expr()?;
    if parser.peek().tok != Tok::Eof {
        return Err(parser.error(&["operator", "end of input"]));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CC: &str = "surface cc { x1=u; x2=v; x3=u^2\u{2212}v^2; x4=2*u*v; }";

    #[test]
    fn parses_complex_curve_with_default_domain() {
        let chart = parse_surface(CC).unwrap();
        assert_eq!(chart.name, "cc");
        assert_eq!(chart.domain, DEFAULT_DOMAIN);
        assert_eq!(chart.components[0], Expr::Var(Variable::U));
        assert_eq!(chart.point(1.0, 2.0), [1.0, 2.0, -3.0, 4.0]);
    }

    #[test]
    fn missing_component() {
        let err = parse_surface("surface bad { x1=u; x2=v; x3=u; }").unwrap_err();
        assert_eq!(err, DslError::MissingComponent(4));
    }

    #[test]
    fn constants_fold() {
        let chart =
            parse_surface("surface p { const a=0.5; x1=u; x2=v; x3=a*u^2; x4=a*v^2; }").unwrap();
        assert_eq!(chart.constants["a"], 0.5);
        match &chart.components[2] {
            Expr::Binary(BinOp::Mul, a, _) => assert_eq!(**a, Expr::Num(0.5)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_component_is_an_error() {
        let err = parse_surface("surface d { x1=u; x1=v; x3=u; x4=v; }").unwrap_err();
        assert!(matches!(err, DslError::DuplicateComponent { index: 1, line: 1, .. }));
    }

    #[test]
    fn error_positions_and_expected_sets() {
        let err = parse_surface("surface e {\n  x1 = u +;\n}").unwrap_err();
        match err {
            DslError::Parse {
                line,
                column,
                expected,
                found,
            } => {
                assert_eq!((line, column), (2, 11));
                assert!(expected.contains(&"number".to_string()));
                assert_eq!(found, "';'");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_function_and_arity() {
        let err = parse_expr("tan(u)").unwrap_err();
        assert!(matches!(err, DslError::UnknownFunction { ref name, .. } if name == "tan"));
        let err = parse_expr("sin(u, v)").unwrap_err();
        assert!(matches!(err, DslError::Arity { got: 2, .. }));
        let err = parse_expr("w + 1").unwrap_err();
        assert!(matches!(err, DslError::UnknownIdentifier { .. }));
    }

    #[test]
    fn exponents_must_be_integers() {
        assert!(matches!(parse_expr("u^0.5"), Err(DslError::NonIntegerExponent { .. })));
        assert_eq!(
            parse_expr("u^-2").unwrap(),
            Expr::Pow(Box::new(Expr::Var(Variable::U)), -2)
        );
        // unary minus binds weaker than ^
        assert_eq!(parse_expr("-u^2").unwrap().eval(3.0, 0.0), -9.0);
        assert_eq!(parse_expr("2^3").unwrap().eval(0.0, 0.0), 8.0);
    }

    #[test]
    fn comments_and_domain() {
        let src = "# header\nsurface q { domain u in [0.5, 1.5] v in [-2, -1] # box\n\
                   exclude [(1, -1.5)]\n x1 = u; x2 = v; x3 = exp(u); x4 = cosh(v); }";
        let chart = parse_surface(src).unwrap();
        assert_eq!(chart.domain.u_min, 0.5);
        assert_eq!(chart.domain.v_max, -1.0);
        assert_eq!(chart.excluded_points, vec![(1.0, -1.5)]);
        assert!(matches!(
            eval_component_jets(&chart, (1.0, -1.5), 2),
            Err(EvalError::ExcludedPoint { .. })
        ));
        // the domain only governs sampling
        assert!(eval_component_jets(&chart, (0.0, -1.5), 2).is_ok());
    }

    #[test]
    fn empty_domain_rejected() {
        let err = parse_surface("surface q { domain u in [1, 1] v in [0, 1] x1=u; x2=v; x3=u; x4=v; }")
            .unwrap_err();
        assert!(matches!(err, DslError::EmptyDomain { .. }));
    }

    #[test]
    fn component_jets_of_complex_curve() {
        let chart = parse_surface(CC).unwrap();
        let jets = eval_component_jets(&chart, (0.0, 0.0), 3).unwrap();
        assert_eq!(jets[2].derivative(2, 0), 2.0);
        assert_eq!(jets[2].derivative(0, 2), -2.0);
        assert_eq!(jets[2].derivative(1, 0), 0.0);
        assert_eq!(jets[2].derivative(0, 1), 0.0);

        let jets = eval_component_jets(&chart, (1.0, 2.0), 3).unwrap();
        assert_eq!(jets[3].value(), 4.0);
        assert_eq!(jets[3].derivative(1, 0), 4.0);
        assert_eq!(jets[3].derivative(0, 1), 2.0);
        assert_eq!(jets[3].derivative(1, 1), 2.0);
    }

    #[test]
    fn log_at_zero_names_the_component() {
        let chart = parse_surface("surface l { x1=u; x2=v; x3=log(u); x4=v; }").unwrap();
        let err = eval_component_jets(&chart, (0.0, 0.5), 3).unwrap_err();
        assert!(matches!(
            err,
            EvalError::Component {
                component: 3,
                source: JetError::DomainError { function: "log", .. }
            }
        ));
    }

    #[test]
    fn canonical_printer_round_trips() {
        let src = "surface r { domain u in [-0.5, 2] v in [0, 1e-3] const k = -1.25 \
                   x1 = -u; x2 = v - -2; x3 = k*sin(u)^3/(1+v^2); x4 = sqrt(2+u) - (-3)*u^-1; }";
        let chart = parse_surface(src).unwrap();
        let again = parse_surface(&chart.to_source()).unwrap();
        assert_eq!(chart, again);
    }
}
