//! Expression strings for field specs: a small recursive-descent parser,
//! a scalar interpreter over `(x, y, t)`, and dense bivariate polynomials.

use crate::geometry::{v2, M2, V2};
use std::fmt;

pub const MAX_DEGREE: usize = 8;
const NCOEF: usize = (MAX_DEGREE + 1) * (MAX_DEGREE + 2) / 2;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unexpected character {0:?} at {1}")]
    BadChar(char, usize),
    #[error("unexpected end of expression")]
    Eof,
    #[error("unexpected token {0} at {1}")]
    Unexpected(String, usize),
    #[error("unknown identifier {0:?}")]
    UnknownIdent(String),
    #[error("expression is not a polynomial in x, y: {0}")]
    NotPolynomial(String),
    #[error("polynomial degree exceeds {MAX_DEGREE}")]
    DegreeTooHigh,
    #[error("expected a 2-vector \"(a, b)\"")]
    NotVector,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    T,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Tuple(Box<Expr>, Box<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Func {
    Sqrt,
    Sin,
    Cos,
    Exp,
    Abs,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(s: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let st = i;
            while i < b.len() && ((b[i] as char).is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && (b[j] as char).is_ascii_digit() {
                    i = j;
                    while i < b.len() && (b[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let v: f64 = s[st..i].parse().map_err(|_| ExprError::BadChar(c, st))?;
            out.push((Tok::Num(v), st));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let st = i;
            while i < b.len() && ((b[i] as char).is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(s[st..i].to_string()), st));
        } else if "+-*/^(),".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else {
            return Err(ExprError::BadChar(c, i));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self) -> Result<Tok, ExprError> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone()).ok_or(ExprError::Eof)?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        match self.next()? {
            Tok::Op(o) if o == c => Ok(()),
            t => Err(ExprError::Unexpected(format!("{t:?}"), self.toks[self.pos - 1].1)),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == '+' { Expr::Add(lhs.into(), rhs.into()) } else { Expr::Sub(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' { Expr::Mul(lhs.into(), rhs.into()) } else { Expr::Div(lhs.into(), rhs.into()) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(self.unary()?.into()))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let e = self.unary()?;
            return Ok(Expr::Pow(base.into(), e.into()));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let at = self.toks.get(self.pos).map(|t| t.1).unwrap_or(0);
        match self.next()? {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Ident(id) => match id.as_str() {
                "x" => Ok(Expr::X),
                "y" => Ok(Expr::Y),
                "t" => Ok(Expr::T),
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "sqrt" | "sin" | "cos" | "exp" | "abs" => {
                    let f = match id.as_str() {
                        "sqrt" => Func::Sqrt,
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "exp" => Func::Exp,
                        _ => Func::Abs,
                    };
                    self.expect('(')?;
                    let a = self.expr()?;
                    self.expect(')')?;
                    Ok(Expr::Call(f, a.into()))
                }
                _ => Err(ExprError::UnknownIdent(id)),
            },
            Tok::Op('(') => {
                let a = self.expr()?;
                if let Some(Tok::Op(',')) = self.peek() {
                    self.pos += 1;
                    let b = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::Tuple(a.into(), b.into()));
                }
                self.expect(')')?;
                Ok(a)
            }
            t => Err(ExprError::Unexpected(format!("{t:?}"), at)),
        }
    }
}

pub fn parse(s: &str) -> Result<Expr, ExprError> {
    let mut p = Parser { toks: lex(s)?, pos: 0 };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        let (t, at) = &p.toks[p.pos];
        return Err(ExprError::Unexpected(format!("{t:?}"), *at));
    }
    Ok(e)
}

/// Parse `"(a, b)"` into its two component expressions.
pub fn parse_vector(s: &str) -> Result<(Expr, Expr), ExprError> {
    match parse(s)? {
        Expr::Tuple(a, b) => Ok((*a, *b)),
        _ => Err(ExprError::NotVector),
    }
}

impl Expr {
    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Y => y,
            Expr::T => t,
            Expr::Neg(a) => -a.eval(x, y, t),
            Expr::Add(a, b) => a.eval(x, y, t) + b.eval(x, y, t),
            Expr::Sub(a, b) => a.eval(x, y, t) - b.eval(x, y, t),
            Expr::Mul(a, b) => a.eval(x, y, t) * b.eval(x, y, t),
            Expr::Div(a, b) => a.eval(x, y, t) / b.eval(x, y, t),
            Expr::Pow(a, b) => {
                let e = b.eval(x, y, t);
                let base = a.eval(x, y, t);
                if e.fract() == 0.0 && e.abs() < 64.0 {
                    base.powi(e as i32)
                } else {
                    base.powf(e)
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(x, y, t);
                match f {
                    Func::Sqrt => v.sqrt(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Abs => v.abs(),
                }
            }
            Expr::Tuple(..) => f64::NAN,
        }
    }

    fn is_const(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::X | Expr::Y | Expr::T => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.is_const(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.is_const() && b.is_const()
            }
            Expr::Tuple(..) => false,
        }
    }

    pub fn to_poly(&self) -> Result<Poly2, ExprError> {
        let bad = || ExprError::NotPolynomial(format!("{self:?}"));
        if self.is_const() {
            let v = self.eval(0.0, 0.0, 0.0);
            return if v.is_finite() { Ok(Poly2::constant(v)) } else { Err(bad()) };
        }
        match self {
            Expr::X => Ok(Poly2::x()),
            Expr::Y => Ok(Poly2::y()),
            Expr::Neg(a) => Ok(a.to_poly()?.scale(-1.0)),
            Expr::Add(a, b) => Ok(a.to_poly()?.add(&b.to_poly()?)),
            Expr::Sub(a, b) => Ok(a.to_poly()?.sub(&b.to_poly()?)),
            Expr::Mul(a, b) => a.to_poly()?.mul(&b.to_poly()?),
            Expr::Div(a, b) if b.is_const() => {
                let d = b.eval(0.0, 0.0, 0.0);
                if d == 0.0 || !d.is_finite() {
                    return Err(bad());
                }
                Ok(a.to_poly()?.scale(1.0 / d))
            }
            Expr::Pow(a, b) if b.is_const() => {
                let e = b.eval(0.0, 0.0, 0.0);
                if e < 0.0 || e.fract() != 0.0 || e > MAX_DEGREE as f64 {
                    return Err(bad());
                }
                let base = a.to_poly()?;
                let mut r = Poly2::constant(1.0);
                for _ in 0..e as usize {
                    r = r.mul(&base)?;
                }
                Ok(r)
            }
            _ => Err(bad()),
        }
    }
}

#[inline]
fn idx(i: usize, j: usize) -> usize {
    // total degree d = i + j; terms of degree d start at d(d+1)/2
    let d = i + j;
    d * (d + 1) / 2 + j
}

/// Dense polynomial in `(x, y)` of total degree at most [`MAX_DEGREE`].
#[derive(Clone, Copy)]
pub struct Poly2 {
    c: [f64; NCOEF],
    deg: u8,
}

impl fmt::Debug for Poly2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly2({self})")
    }
}

impl fmt::Display for Poly2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for d in 0..=self.deg as usize {
            for j in 0..=d {
                let i = d - j;
                let c = self.c[idx(i, j)];
                if c == 0.0 {
                    continue;
                }
                if !first {
                    write!(f, " + ")?;
                }
                first = false;
                write!(f, "({c:?})")?;
                if i > 0 {
                    write!(f, "*x^{i}")?;
                }
                if j > 0 {
                    write!(f, "*y^{j}")?;
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl PartialEq for Poly2 {
    fn eq(&self, o: &Poly2) -> bool {
        self.c == o.c
    }
}

impl Default for Poly2 {
    fn default() -> Self {
        Poly2::zero()
    }
}

impl Poly2 {
    pub fn zero() -> Self {
        Poly2 { c: [0.0; NCOEF], deg: 0 }
    }

    pub fn constant(v: f64) -> Self {
        let mut p = Poly2::zero();
        p.c[0] = v;
        p
    }

    pub fn x() -> Self {
        Poly2::monomial(1, 0, 1.0)
    }

    pub fn y() -> Self {
        Poly2::monomial(0, 1, 1.0)
    }

    pub fn monomial(i: usize, j: usize, c: f64) -> Self {
        assert!(i + j <= MAX_DEGREE);
        let mut p = Poly2::zero();
        p.c[idx(i, j)] = c;
        p.deg = (i + j) as u8;
        p
    }

    pub fn coef(&self, i: usize, j: usize) -> f64 {
        if i + j > MAX_DEGREE {
            0.0
        } else {
            self.c[idx(i, j)]
        }
    }

    pub fn set_coef(&mut self, i: usize, j: usize, v: f64) {
        self.c[idx(i, j)] = v;
        self.deg = self.deg.max((i + j) as u8);
    }

    pub fn degree(&self) -> usize {
        let mut d = self.deg as usize;
        while d > 0 && (0..=d).all(|j| self.c[idx(d - j, j)] == 0.0) {
            d -= 1;
        }
        d
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|&c| c == 0.0)
    }

    pub fn max_abs_coef(&self) -> f64 {
        self.c.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, p: V2) -> f64 {
        let (x, y) = (p.x, p.y);
        let d = self.deg as usize;
        match d {
            0 => self.c[0],
            1 => self.c[0] + self.c[1] * x + self.c[2] * y,
            _ => {
                let mut xp = [1.0; MAX_DEGREE + 1];
                let mut yp = [1.0; MAX_DEGREE + 1];
                for i in 1..=d {
                    xp[i] = xp[i - 1] * x;
                    yp[i] = yp[i - 1] * y;
                }
                let mut s = 0.0;
                for dd in 0..=d {
                    let base = dd * (dd + 1) / 2;
                    for j in 0..=dd {
                        s += self.c[base + j] * xp[dd - j] * yp[j];
                    }
                }
                s
            }
        }
    }

    pub fn dx(&self) -> Poly2 {
        let mut r = Poly2::zero();
        let d = self.deg as usize;
        for dd in 1..=d {
            for j in 0..dd {
                let i = dd - j;
                r.c[idx(i - 1, j)] = i as f64 * self.c[idx(i, j)];
            }
        }
        r.deg = self.deg.saturating_sub(1);
        r
    }

    pub fn dy(&self) -> Poly2 {
        let mut r = Poly2::zero();
        let d = self.deg as usize;
        for dd in 1..=d {
            for j in 1..=dd {
                let i = dd - j;
                r.c[idx(i, j - 1)] = j as f64 * self.c[idx(i, j)];
            }
        }
        r.deg = self.deg.saturating_sub(1);
        r
    }

    pub fn grad(&self, p: V2) -> V2 {
        if self.deg <= 1 {
            return v2(self.c[1], self.c[2]);
        }
        v2(self.dx().eval(p), self.dy().eval(p))
    }

    pub fn laplacian(&self) -> Poly2 {
        self.dx().dx().add(&self.dy().dy())
    }

    pub fn add(&self, o: &Poly2) -> Poly2 {
        let mut r = *self;
        for i in 0..NCOEF {
            r.c[i] += o.c[i];
        }
        r.deg = self.deg.max(o.deg);
        r
    }

    pub fn sub(&self, o: &Poly2) -> Poly2 {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly2 {
        let mut r = *self;
        for c in r.c.iter_mut() {
            *c *= s;
        }
        r
    }

    pub fn mul(&self, o: &Poly2) -> Result<Poly2, ExprError> {
        let (da, db) = (self.degree(), o.degree());
        if da + db > MAX_DEGREE {
            return Err(ExprError::DegreeTooHigh);
        }
        let mut r = Poly2::zero();
        for d1 in 0..=da {
            for j1 in 0..=d1 {
                let a = self.c[idx(d1 - j1, j1)];
                if a == 0.0 {
                    continue;
                }
                for d2 in 0..=db {
                    for j2 in 0..=d2 {
                        let b = o.c[idx(d2 - j2, j2)];
                        if b != 0.0 {
                            r.c[idx(d1 - j1 + d2 - j2, j1 + j2)] += a * b;
                        }
                    }
                }
            }
        }
        r.deg = (da + db) as u8;
        Ok(r)
    }

    /// The polynomial `x -> self(M x + o)`.
    pub fn compose_affine(&self, m: &M2, o: V2) -> Poly2 {
        let d = self.degree();
        let xl = Poly2::constant(o.x).add(&Poly2::x().scale(m[(0, 0)])).add(&Poly2::y().scale(m[(0, 1)]));
        let yl = Poly2::constant(o.y).add(&Poly2::x().scale(m[(1, 0)])).add(&Poly2::y().scale(m[(1, 1)]));
        let mut xp = vec![Poly2::constant(1.0)];
        let mut yp = vec![Poly2::constant(1.0)];
        for i in 1..=d {
            xp.push(xp[i - 1].mul(&xl).expect("degree preserved"));
            yp.push(yp[i - 1].mul(&yl).expect("degree preserved"));
        }
        let mut r = Poly2::zero();
        for dd in 0..=d {
            for j in 0..=dd {
                let c = self.c[idx(dd - j, j)];
                if c != 0.0 {
                    r = r.add(&xp[dd - j].mul(&yp[j]).expect("degree preserved").scale(c));
                }
            }
        }
        r
    }

    /// Integral over the axis-aligned box `[a, b]`.
    pub fn integrate_box(&self, a: V2, b: V2) -> f64 {
        let d = self.degree();
        let mut s = 0.0;
        for dd in 0..=d {
            for j in 0..=dd {
                let i = dd - j;
                let c = self.c[idx(i, j)];
                if c != 0.0 {
                    let ix = (b.x.powi(i as i32 + 1) - a.x.powi(i as i32 + 1)) / (i + 1) as f64;
                    let iy = (b.y.powi(j as i32 + 1) - a.y.powi(j as i32 + 1)) / (j + 1) as f64;
                    s += c * ix * iy;
                }
            }
        }
        s
    }
}

/// A 2-vector of polynomials.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PolyVec(pub [Poly2; 2]);

impl PolyVec {
    pub fn zero() -> Self {
        PolyVec([Poly2::zero(), Poly2::zero()])
    }

    pub fn constant(b: V2) -> Self {
        PolyVec([Poly2::constant(b.x), Poly2::constant(b.y)])
    }

    /// The affine map `x -> b + A x`.
    pub fn affine(b: V2, a: &M2) -> Self {
        PolyVec([
            Poly2::constant(b.x).add(&Poly2::x().scale(a[(0, 0)])).add(&Poly2::y().scale(a[(0, 1)])),
            Poly2::constant(b.y).add(&Poly2::x().scale(a[(1, 0)])).add(&Poly2::y().scale(a[(1, 1)])),
        ])
    }

    pub fn from_exprs(a: &Expr, b: &Expr) -> Result<Self, ExprError> {
        Ok(PolyVec([a.to_poly()?, b.to_poly()?]))
    }

    pub fn parse(s: &str) -> Result<Self, ExprError> {
        let (a, b) = parse_vector(s)?;
        PolyVec::from_exprs(&a, &b)
    }

    pub fn eval(&self, p: V2) -> V2 {
        v2(self.0[0].eval(p), self.0[1].eval(p))
    }

    /// Jacobian with row `c` equal to the gradient of component `c`.
    pub fn jacobian(&self, p: V2) -> M2 {
        let g0 = self.0[0].grad(p);
        let g1 = self.0[1].grad(p);
        M2::new(g0.x, g0.y, g1.x, g1.y)
    }

    pub fn degree(&self) -> usize {
        self.0[0].degree().max(self.0[1].degree())
    }

    pub fn add(&self, o: &PolyVec) -> PolyVec {
        PolyVec([self.0[0].add(&o.0[0]), self.0[1].add(&o.0[1])])
    }

    pub fn sub(&self, o: &PolyVec) -> PolyVec {
        PolyVec([self.0[0].sub(&o.0[0]), self.0[1].sub(&o.0[1])])
    }

    pub fn scale(&self, s: f64) -> PolyVec {
        PolyVec([self.0[0].scale(s), self.0[1].scale(s)])
    }

    /// `x -> T self(M x + o)`.
    pub fn transform(&self, t: &M2, m: &M2, o: V2) -> PolyVec {
        let a = self.0[0].compose_affine(m, o);
        let b = self.0[1].compose_affine(m, o);
        PolyVec([a.scale(t[(0, 0)]).add(&b.scale(t[(0, 1)])), a.scale(t[(1, 0)]).add(&b.scale(t[(1, 1)]))])
    }

    pub fn laplacian(&self) -> PolyVec {
        PolyVec([self.0[0].laplacian(), self.0[1].laplacian()])
    }

    pub fn max_abs_coef(&self) -> f64 {
        self.0[0].max_abs_coef().max(self.0[1].max_abs_coef())
    }
}

impl fmt::Display for PolyVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0[0], self.0[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn parse_and_eval() {
        let e = parse("2*x^2 - 3*x*y + y/4 + 1.5e-1").unwrap();
        assert_abs_diff_eq!(e.eval(1.0, 2.0, 0.0), 2.0 - 6.0 + 0.5 + 0.15, epsilon = 1e-14);
        let p = e.to_poly().unwrap();
        assert_abs_diff_eq!(p.eval(v2(1.0, 2.0)), -3.35, epsilon = 1e-14);
        assert_eq!(p.degree(), 2);
        assert!(parse("sin(x)").unwrap().to_poly().is_err());
        assert!(parse("x + ").is_err());
        assert!(parse("z").is_err());
        let (a, b) = parse_vector("(t, -t^2)").unwrap();
        assert_eq!(a.eval(0.0, 0.0, 0.5), 0.5);
        assert_eq!(b.eval(0.0, 0.0, 0.5), -0.25);
        assert_abs_diff_eq!(parse("sqrt(2)*x").unwrap().to_poly().unwrap().coef(1, 0), 2f64.sqrt());
    }

    #[test]
    fn display_roundtrip() {
        let p = PolyVec::parse("(0.1 + x*y^3 - 2*x, y^2/3)").unwrap();
        let q = PolyVec::parse(&p.to_string()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn calculus() {
        let p = parse("x^3*y + y^4").unwrap().to_poly().unwrap();
        let g = p.grad(v2(2.0, 3.0));
        assert_abs_diff_eq!(g.x, 3.0 * 4.0 * 3.0);
        assert_abs_diff_eq!(g.y, 8.0 + 4.0 * 27.0);
        let l = p.laplacian();
        assert_abs_diff_eq!(l.eval(v2(2.0, 3.0)), 6.0 * 2.0 * 3.0 + 12.0 * 9.0);
        assert_abs_diff_eq!(p.integrate_box(v2(0.0, 0.0), v2(1.0, 1.0)), 1.0 / 8.0 + 1.0 / 5.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn compose_affine_matches_pointwise(
            cs in proptest::collection::vec(-2.0f64..2.0, 15),
            m in proptest::collection::vec(-1.5f64..1.5, 6),
            px in -1.0f64..1.0, py in -1.0f64..1.0,
        ) {
            let mut p = Poly2::zero();
            let mut n = 0;
            for d in 0..=4 {
                for j in 0..=d {
                    p.set_coef(d - j, j, cs[n]);
                    n += 1;
                }
            }
            let mm = M2::new(m[0], m[1], m[2], m[3]);
            let o = v2(m[4], m[5]);
            let q = p.compose_affine(&mm, o);
            let x = v2(px, py);
            let want = p.eval(mm * x + o);
            prop_assert!((q.eval(x) - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }
}
