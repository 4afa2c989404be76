//! Scalar field expressions in ambient coordinates `x1..xn`.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := ('-')? power
//! power  := atom ('^' factor)?
//! atom   := number | 'pi' | 'norm2' | coord | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! `norm2` is the nullary squared Euclidean norm of the point.

use crate::error::{Error, Result};
use crate::linalg::{AmbientPoint, TangentVector, Vector};
use std::fmt;

const MAX_DEPTH: usize = 200;
const CLAMP_WINDOW: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Abs,
    Sin,
    Cos,
    Arccos,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Arccos => "arccos",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "arccos" => Func::Arccos,
            _ => return None,
        })
    }
}

/// Expression tree. `Num` is never negative when produced by the parser;
/// use [`Expr::num`] to build literals so that invariant holds.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    /// 1-based coordinate index.
    Coord(usize),
    Norm2,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        if v < 0.0 || (v == 0.0 && v.is_sign_negative()) {
            Expr::Neg(Box::new(Expr::Num(-v)))
        } else {
            Expr::Num(v)
        }
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(v) if *v < 0.0 => 0,
            _ => 5,
        }
    }

    fn max_coord(&self) -> usize {
        match self {
            Expr::Coord(i) => *i,
            Expr::Num(_) | Expr::Pi | Expr::Norm2 => 0,
            Expr::Neg(a) | Expr::Call(_, a) => a.max_coord(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.max_coord().max(b.max_coord())
            }
        }
    }

    fn depends_on_point(&self) -> bool {
        match self {
            Expr::Coord(_) | Expr::Norm2 => true,
            Expr::Num(_) | Expr::Pi => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on_point(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.depends_on_point() || b.depends_on_point()
            }
        }
    }

    fn write(&self, out: &mut String) {
        fn wrap(e: &Expr, paren: bool, out: &mut String) {
            if paren {
                out.push('(');
                e.write(out);
                out.push(')');
            } else {
                e.write(out);
            }
        }
        match self {
            Expr::Num(v) if *v < 0.0 => {
                out.push_str(&format!("(-{:?})", -v));
            }
            Expr::Num(v) => out.push_str(&format!("{v:?}")),
            Expr::Pi => out.push_str("pi"),
            Expr::Coord(i) => out.push_str(&format!("x{i}")),
            Expr::Norm2 => out.push_str("norm2"),
            Expr::Neg(a) => {
                out.push('-');
                wrap(a, a.prec() < 4, out);
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                wrap(a, a.prec() < 1, out);
                out.push_str(if matches!(self, Expr::Add(..)) { " + " } else { " - " });
                wrap(b, b.prec() <= 1, out);
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                wrap(a, a.prec() < 2, out);
                out.push_str(if matches!(self, Expr::Mul(..)) { "*" } else { "/" });
                wrap(b, b.prec() <= 2, out);
            }
            Expr::Pow(a, b) => {
                wrap(a, a.prec() < 5, out);
                out.push('^');
                wrap(b, b.prec() < 3, out);
            }
            Expr::Call(f, a) => {
                out.push_str(f.name());
                out.push('(');
                a.write(out);
                out.push(')');
            }
        }
    }

    fn eval_at(&self, x: &[f64]) -> Result<f64> {
        let fail = |e: &Expr, msg: &str| Error::Eval {
            expr: e.to_string(),
            message: msg.to_string(),
        };
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Pi => std::f64::consts::PI,
            Expr::Coord(i) => *x
                .get(i - 1)
                .ok_or_else(|| fail(self, "coordinate index exceeds point dimension"))?,
            Expr::Norm2 => x.iter().map(|c| c * c).sum(),
            Expr::Neg(a) => -a.eval_at(x)?,
            Expr::Add(a, b) => a.eval_at(x)? + b.eval_at(x)?,
            Expr::Sub(a, b) => a.eval_at(x)? - b.eval_at(x)?,
            Expr::Mul(a, b) => a.eval_at(x)? * b.eval_at(x)?,
            Expr::Div(a, b) => {
                let num = a.eval_at(x)?;
                let den = b.eval_at(x)?;
                if den == 0.0 {
                    return Err(fail(self, "division by zero"));
                }
                num / den
            }
            Expr::Pow(a, b) => {
                let base = a.eval_at(x)?;
                let exp = b.eval_at(x)?;
                if exp.fract() == 0.0 && exp.abs() <= 64.0 {
                    base.powi(exp as i32)
                } else {
                    base.powf(exp)
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval_at(x)?;
                match f {
                    Func::Sqrt => {
                        if v < -CLAMP_WINDOW {
                            return Err(fail(self, "square root of a negative number"));
                        }
                        v.max(0.0).sqrt()
                    }
                    Func::Abs => v.abs(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Arccos => {
                        if v.abs() > 1.0 + CLAMP_WINDOW {
                            return Err(fail(self, "arccos argument outside [-1, 1]"));
                        }
                        v.clamp(-1.0, 1.0).acos()
                    }
                }
            }
        };
        if !v.is_finite() {
            return Err(fail(self, "non-finite result"));
        }
        Ok(v)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write(&mut s);
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFieldExpr {
    ast: Expr,
    n: usize,
}

impl ScalarFieldExpr {
    pub fn from_ast(ast: Expr, n: usize) -> Result<Self> {
        let m = ast.max_coord();
        if m > n {
            return Err(Error::Parse {
                offset: 0,
                message: format!("coordinate x{m} exceeds ambient dimension {n}"),
            });
        }
        Ok(Self { ast, n })
    }

    pub fn constant(v: f64, n: usize) -> Self {
        Self {
            ast: Expr::num(v),
            n,
        }
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Value of a point-independent expression, `None` if it depends on x.
    pub fn constant_value(&self) -> Option<f64> {
        if self.ast.depends_on_point() {
            None
        } else {
            self.ast.eval_at(&[]).ok()
        }
    }

    pub fn eval(&self, p: &AmbientPoint) -> Result<f64> {
        if p.dim() != self.n {
            return Err(Error::Dimension(format!(
                "expression over {} coordinates evaluated at a point of dimension {}",
                self.n,
                p.dim()
            )));
        }
        self.ast.eval_at(p.coords().as_slice())
    }

    pub fn eval_slice(&self, x: &[f64]) -> Result<f64> {
        self.ast.eval_at(x)
    }
}

impl fmt::Display for ScalarFieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.ast.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldExpr {
    pub components: Vec<ScalarFieldExpr>,
}

impl VectorFieldExpr {
    pub fn parse<S: AsRef<str>>(srcs: &[S], n: usize) -> Result<Self> {
        if srcs.len() != n {
            return Err(Error::Dimension(format!(
                "vector field has {} components, expected {n}",
                srcs.len()
            )));
        }
        let components = srcs.iter().map(|s| parse(s.as_ref(), n)).collect::<Result<_>>()?;
        Ok(Self { components })
    }

    pub fn constant(v: &[f64]) -> Self {
        let n = v.len();
        Self {
            components: v.iter().map(|c| ScalarFieldExpr::constant(*c, n)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval(&self, p: &AmbientPoint) -> Result<Vector> {
        let vals = self
            .components
            .iter()
            .map(|c| c.eval(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Vector::from_vec(vals))
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.components.iter().map(|c| c.to_string()).collect()
    }
}

pub fn parse(src: &str, n: usize) -> Result<ScalarFieldExpr> {
    let tokens = tokenize(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        n,
        depth: 0,
        len: src.len(),
    };
    let ast = p.expr()?;
    if let Some(t) = p.tokens.get(p.pos) {
        return Err(p.err_at(t.offset, format!("unexpected {}", t.kind.describe())));
    }
    Ok(ScalarFieldExpr { ast, n })
}

/// Central difference `(e(p + h d) - e(p - h d)) / 2h`.
pub fn directional_derivative(
    e: &ScalarFieldExpr,
    p: &AmbientPoint,
    dir: &TangentVector,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Param(format!("step must be positive, got {h}")));
    }
    if dir.comps.len() != p.dim() {
        return Err(Error::Dimension("direction and point dimensions differ".into()));
    }
    let plus = AmbientPoint::from_vector(p.coords() + h * &dir.comps)?;
    let minus = AmbientPoint::from_vector(p.coords() - h * &dir.comps)?;
    Ok((e.eval(&plus)? - e.eval(&minus)?) / (2.0 * h))
}

// ---- lexer ----

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("`{c}`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                } else {
                    return Err(Error::Parse {
                        offset: i,
                        message: "malformed exponent in number".into(),
                    });
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| Error::Parse {
                offset: start,
                message: format!("invalid number `{text}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    offset: start,
                    message: format!("number `{text}` is out of range"),
                });
            }
            out.push(Token {
                kind: Tok::Num(v),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: Tok::Ident(src[start..i].to_string()),
                offset: start,
            });
        } else if b"+-*/^()".contains(&c) {
            out.push(Token {
                kind: Tok::Op(c as char),
                offset: start,
            });
            i += 1;
        } else {
            let ch = src[start..].chars().next().unwrap_or('?');
            return Err(Error::Parse {
                offset: start,
                message: format!("unexpected character `{ch}`"),
            });
        }
    }
    Ok(out)
}

// ---- parser ----

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    n: usize,
    depth: usize,
    len: usize,
}

impl Parser {
    fn err_at(&self, offset: usize, message: String) -> Error {
        Error::Parse { offset, message }
    }

    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token { kind: Tok::Op(c), .. }) => Some(*c),
            _ => None,
        }
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.len, |t| t.offset)
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err_at(self.here(), "expression nested too deeply".into()));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr> {
        self.enter()?;
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        self.enter()?;
        let e = if self.peek_op() == Some('-') {
            self.pos += 1;
            Expr::Neg(Box::new(self.power()?))
        } else {
            self.power()?
        };
        self.depth -= 1;
        Ok(e)
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.factor()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn expect_close(&mut self, open_at: usize) -> Result<()> {
        if self.peek_op() == Some(')') {
            self.pos += 1;
            Ok(())
        } else {
            let at = self.here();
            Err(self.err_at(
                at,
                format!("expected `)` to close the parenthesis at byte {open_at}"),
            ))
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = match self.tokens.get(self.pos) {
            Some(t) => t.clone(),
            None => return Err(self.err_at(self.len, "unexpected end of input".into())),
        };
        self.pos += 1;
        match tok.kind {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect_close(tok.offset)?;
                Ok(e)
            }
            Tok::Op(c) => Err(self.err_at(tok.offset, format!("unexpected `{c}`"))),
            Tok::Ident(name) => {
                if name == "pi" {
                    return Ok(Expr::Pi);
                }
                if name == "norm2" {
                    return Ok(Expr::Norm2);
                }
                if let Some(f) = Func::from_name(&name) {
                    if self.peek_op() != Some('(') {
                        let at = self.here();
                        return Err(self.err_at(at, format!("expected `(` after `{name}`")));
                    }
                    let open = self.here();
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect_close(open)?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                if let Some(digits) = name.strip_prefix('x') {
                    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                        let idx: usize = digits.parse().unwrap_or(usize::MAX);
                        if idx == 0 || idx > self.n {
                            return Err(self.err_at(
                                tok.offset,
                                format!("coordinate `{name}` out of range 1..={}", self.n),
                            ));
                        }
                        return Ok(Expr::Coord(idx));
                    }
                }
                Err(self.err_at(tok.offset, format!("unknown identifier `{name}`")))
            }
        }
    }
}
