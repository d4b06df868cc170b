//! Sparse multivariate polynomials over `f64`.
//!
//! A [`Polynomial`] maps exponent vectors ([`Monomial`]) to coefficients. Terms
//! are kept in graded-lexicographic order and coefficients whose magnitude falls
//! below [`ZERO_THRESHOLD`] are dropped after every operation, so the maps stay
//! sparse and iteration (and printing) is deterministic.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Coefficients with magnitude below this are treated as exact zeros.
pub const ZERO_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("variable x{index} at position {pos} is out of range for dimension {dim}")]
    VariableOutOfRange { pos: usize, index: usize, dim: usize },
    #[error("exponent at position {pos} must be a non-negative integer, found `{text}`")]
    BadExponent { pos: usize, text: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Exponent vector of a monomial `x1^e1 * ... * xn^en`.
///
/// Ordered graded-lexicographically: lower total degree first, and within one
/// degree the monomial with the larger leading exponents first, so the degree-2
/// monomials in two variables sort as `x1^2, x1*x2, x2^2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial { exponents }
    }

    pub fn one(dim: usize) -> Self {
        Monomial { exponents: vec![0; dim] }
    }

    /// The monomial `x_{var+1}` (zero-based `var`).
    pub fn variable(dim: usize, var: usize) -> Self {
        let mut exponents = vec![0; dim];
        exponents[var] = 1;
        Monomial { exponents }
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.exponents.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.dim(), other.dim());
        Monomial {
            exponents: self
                .exponents
                .iter()
                .zip(&other.exponents)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn evaluate(&self, point: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(point)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.exponents.cmp(&self.exponents))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_constant() {
            return write!(f, "1");
        }
        let mut first = true;
        for (k, &e) in self.exponents.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", k + 1)?;
            } else {
                write!(f, "x{}^{}", k + 1, e)?;
            }
        }
        Ok(())
    }
}

/// Total degree and homogeneity flag of a polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegreeInfo {
    pub degree: u32,
    pub homogeneous: bool,
}

/// Sparse real polynomial in `dim` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Polynomial { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        let mut p = Polynomial::zero(dim);
        p.add_term(Monomial::one(dim), value);
        p
    }

    pub fn variable(dim: usize, var: usize) -> Self {
        Polynomial::monomial(Monomial::variable(dim, var), 1.0)
    }

    pub fn monomial(m: Monomial, coeff: f64) -> Self {
        let mut p = Polynomial::zero(m.dim());
        p.add_term(m, coeff);
        p
    }

    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut p = Polynomial::zero(dim);
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |acc, c| acc.max(c.abs()))
    }

    /// Adds `coeff * m`, dropping the term if the result falls below the zero threshold.
    pub fn add_term(&mut self, m: Monomial, coeff: f64) {
        assert_eq!(m.dim(), self.dim, "monomial dimension mismatch");
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let v = *o.get() + coeff;
                if v.abs() < ZERO_THRESHOLD {
                    o.remove();
                } else {
                    *o.get_mut() = v;
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                if coeff.abs() >= ZERO_THRESHOLD {
                    v.insert(coeff);
                }
            }
        }
    }

    pub fn remove_term(&mut self, m: &Monomial) -> Option<f64> {
        self.terms.remove(m)
    }

    pub fn scale(&self, factor: f64) -> Polynomial {
        Polynomial::from_terms(self.dim, self.terms().map(|(m, c)| (m.clone(), c * factor)))
    }

    pub fn pow(&self, exponent: u32) -> Polynomial {
        let mut result = Polynomial::constant(self.dim, 1.0);
        for _ in 0..exponent {
            result = &result * self;
        }
        result
    }

    pub fn degree_info(&self) -> DegreeInfo {
        let mut degrees = self.terms.keys().map(Monomial::degree);
        match degrees.next() {
            None => DegreeInfo { degree: 0, homogeneous: true },
            Some(first) => {
                let (lo, hi) = degrees.fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d)));
                DegreeInfo { degree: hi, homogeneous: lo == hi }
            }
        }
    }

    pub fn degree(&self) -> u32 {
        self.degree_info().degree
    }

    /// Smallest total degree among the stored terms (0 for the zero polynomial).
    pub fn min_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).min().unwrap_or(0)
    }

    /// Restriction to the terms of total degree exactly `d`.
    pub fn homogeneous_part(&self, d: u32) -> Polynomial {
        Polynomial::from_terms(
            self.dim,
            self.terms().filter(|(m, _)| m.degree() == d).map(|(m, c)| (m.clone(), c)),
        )
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.dim {
            return Err(PolyError::DimensionMismatch { expected: self.dim, found: point.len() });
        }
        Ok(self.eval_unchecked(point))
    }

    /// Evaluation without the dimension check; `point.len()` must equal `dim`.
    pub fn eval_unchecked(&self, point: &[f64]) -> f64 {
        let max_exp = self
            .terms
            .keys()
            .flat_map(|m| m.exponents.iter().copied())
            .max()
            .unwrap_or(0) as usize;
        // powers[k][e] = x_k^e
        let powers: Vec<Vec<f64>> = point
            .iter()
            .map(|&x| {
                let mut row = Vec::with_capacity(max_exp + 1);
                let mut acc = 1.0;
                row.push(acc);
                for _ in 0..max_exp {
                    acc *= x;
                    row.push(acc);
                }
                row
            })
            .collect();
        self.terms
            .iter()
            .map(|(m, &c)| {
                m.exponents
                    .iter()
                    .enumerate()
                    .fold(c, |acc, (k, &e)| acc * powers[k][e as usize])
            })
            .sum()
    }

    /// Partial derivative with respect to zero-based variable `var`.
    pub fn partial(&self, var: usize) -> Polynomial {
        assert!(var < self.dim, "variable index out of range");
        let mut out = Polynomial::zero(self.dim);
        for (m, c) in self.terms() {
            let e = m.exponents[var];
            if e == 0 {
                continue;
            }
            let mut exps = m.exponents.clone();
            exps[var] -= 1;
            out.add_term(Monomial::new(exps), c * e as f64);
        }
        out
    }

    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.dim).map(|k| self.partial(k)).collect()
    }

    /// Replaces every coefficient `c` by `f(c)`; used for rounding in tests and printing.
    pub fn map_coefficients(&self, f: impl Fn(f64) -> f64) -> Polynomial {
        Polynomial::from_terms(self.dim, self.terms().map(|(m, c)| (m.clone(), f(c))))
    }
}

impl fmt::Display for Polynomial {
    /// Terms from highest to lowest degree, coefficients with 17 significant digits.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut terms: Vec<(&Monomial, f64)> = self.terms().collect();
        terms.sort_by(|(a, _), (b, _)| {
            b.degree().cmp(&a.degree()).then_with(|| b.exponents.cmp(&a.exponents))
        });
        for (k, (m, c)) in terms.into_iter().enumerate() {
            let sign = if c < 0.0 { "-" } else { "+" };
            let magnitude = format!("{:.16e}", c.abs());
            if k == 0 {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", sign)?;
            }
            if m.is_constant() {
                write!(f, "{}", magnitude)?;
            } else {
                write!(f, "{}*{}", magnitude, m)?;
            }
        }
        Ok(())
    }
}

fn add_into(target: &mut Polynomial, other: &Polynomial, factor: f64) {
    assert_eq!(target.dim, other.dim, "polynomial dimension mismatch");
    for (m, c) in other.terms() {
        target.add_term(m.clone(), c * factor);
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        add_into(&mut out, rhs, 1.0);
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        add_into(&mut out, rhs, -1.0);
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, rhs.dim, "polynomial dimension mismatch");
        // accumulate unthresholded, then drop small terms once
        let mut acc: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (a, ca) in self.terms() {
            for (b, cb) in rhs.terms() {
                *acc.entry(a.mul(b)).or_insert(0.0) += ca * cb;
            }
        }
        Polynomial::from_terms(self.dim, acc)
    }
}

impl Mul<f64> for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: f64) -> Polynomial {
        self.scale(rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $method:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: Polynomial) -> Polynomial {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: &Polynomial) -> Polynomial {
                (&self).$method(rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Mul<f64> for Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: f64) -> Polynomial {
        self.scale(rhs)
    }
}

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// A polynomial map `R^n -> R^n`, one component per state derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialVectorField {
    components: Vec<Polynomial>,
}

impl PolynomialVectorField {
    pub fn new(components: Vec<Polynomial>) -> Result<Self, PolyError> {
        let n = components.len();
        for c in &components {
            if c.dim() != n {
                return Err(PolyError::DimensionMismatch { expected: n, found: c.dim() });
            }
        }
        Ok(PolynomialVectorField { components })
    }

    /// Linear field `x -> A x` from a row-major square matrix.
    pub fn linear(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let components = rows
            .iter()
            .map(|row| {
                assert_eq!(row.len(), n, "matrix must be square");
                Polynomial::from_terms(
                    n,
                    row.iter().enumerate().map(|(k, &a)| (Monomial::variable(n, k), a)),
                )
            })
            .collect();
        PolynomialVectorField { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn degree(&self) -> u32 {
        self.components.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    /// True iff every component is a homogeneous polynomial of degree one (or zero).
    pub fn is_linear(&self) -> bool {
        self.components.iter().all(|c| c.is_zero() || c.terms().all(|(m, _)| m.degree() == 1))
    }

    /// Row-major Jacobian coefficients of a linear field (`None` if not linear).
    pub fn linear_matrix(&self) -> Option<Vec<Vec<f64>>> {
        if !self.is_linear() {
            return None;
        }
        let n = self.dim();
        Some(
            self.components
                .iter()
                .map(|c| (0..n).map(|k| c.coefficient(&Monomial::variable(n, k))).collect())
                .collect(),
        )
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<Vec<f64>, PolyError> {
        if point.len() != self.dim() {
            return Err(PolyError::DimensionMismatch { expected: self.dim(), found: point.len() });
        }
        Ok(self.components.iter().map(|c| c.eval_unchecked(point)).collect())
    }

    pub fn eval_into(&self, point: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval_unchecked(point);
        }
    }

    pub fn scale(&self, factor: f64) -> PolynomialVectorField {
        PolynomialVectorField { components: self.components.iter().map(|c| c.scale(factor)).collect() }
    }
}

/// `∇v · f` as an expanded polynomial.
pub fn lie_derivative(v: &Polynomial, f: &PolynomialVectorField) -> Result<Polynomial, PolyError> {
    if v.dim() != f.dim() {
        return Err(PolyError::DimensionMismatch { expected: v.dim(), found: f.dim() });
    }
    let mut out = Polynomial::zero(v.dim());
    for (k, comp) in f.components().iter().enumerate() {
        let dk = v.partial(k);
        if dk.is_zero() || comp.is_zero() {
            continue;
        }
        add_into(&mut out, &(&dk * comp), 1.0);
    }
    Ok(out)
}

/// `x1^(2ℓ) + ... + xn^(2ℓ)`.
pub fn even_power_norm(dim: usize, ell: u32) -> Polynomial {
    assert!(ell >= 1, "ell must be positive");
    Polynomial::from_terms(
        dim,
        (0..dim).map(|k| {
            let mut e = vec![0; dim];
            e[k] = 2 * ell;
            (Monomial::new(e), 1.0)
        }),
    )
}

/// Parses an expression in `x1..xn`; see [`parse_expression_with`].
pub fn parse_expression(text: &str, dim: usize) -> Result<Polynomial, PolyError> {
    parse_expression_with(text, dim, &HashMap::new())
}

/// Parses and expands an expression built from variables `x1..xn`, named
/// parameters, decimal literals, `+ - * ^` and parentheses.
pub fn parse_expression_with(
    text: &str,
    dim: usize,
    params: &HashMap<String, f64>,
) -> Result<Polynomial, PolyError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0, dim, params, end: text.len() };
    let p = parser.expr()?;
    if let Some(tok) = parser.peek() {
        return Err(PolyError::Syntax { pos: tok.pos, msg: format!("unexpected {}", tok.kind.describe()) });
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64, String),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Number(_, s) => format!("number `{}`", s),
            TokenKind::Ident(s) => format!("identifier `{}`", s),
            TokenKind::Plus => "`+`".into(),
            TokenKind::Minus => "`-`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Caret => "`^`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, PolyError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let kind = match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'+' => TokenKind::Plus,
            b'-' => TokenKind::Minus,
            b'*' => TokenKind::Star,
            b'^' => TokenKind::Caret,
            b'(' => TokenKind::LParen,
            b')' => TokenKind::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
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
                    }
                }
                let s = &text[start..i];
                let v: f64 = s.parse().map_err(|_| PolyError::Syntax {
                    pos: start,
                    msg: format!("malformed number `{}`", s),
                })?;
                tokens.push(Token { kind: TokenKind::Number(v, s.to_string()), pos: start });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push(Token { kind: TokenKind::Ident(text[start..i].to_string()), pos: start });
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(PolyError::Syntax { pos: start, msg: format!("unexpected character `{}`", ch) });
            }
        };
        tokens.push(Token { kind, pos: start });
        i += 1;
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
    params: &'a HashMap<String, f64>,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn here(&self) -> usize {
        self.peek().map(|t| t.pos).unwrap_or(self.end)
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        loop {
            match self.peek().map(|t| &t.kind) {
                Some(TokenKind::Plus) => {
                    self.pos += 1;
                    acc = &acc + &self.term()?;
                }
                Some(TokenKind::Minus) => {
                    self.pos += 1;
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    // term := unary ('*' unary)*
    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.unary()?;
        while let Some(TokenKind::Star) = self.peek().map(|t| &t.kind) {
            self.pos += 1;
            acc = &acc * &self.unary()?;
        }
        Ok(acc)
    }

    // unary := ('-' | '+') unary | power
    fn unary(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Minus) => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some(TokenKind::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    // power := atom ('^' integer)?
    fn power(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.atom()?;
        if let Some(TokenKind::Caret) = self.peek().map(|t| &t.kind) {
            self.pos += 1;
            let pos = self.here();
            match self.next() {
                Some(Token { kind: TokenKind::Number(v, s), .. }) => {
                    let integral = s.bytes().all(|b| b.is_ascii_digit());
                    if !integral || v > u32::MAX as f64 {
                        return Err(PolyError::BadExponent { pos, text: s });
                    }
                    return Ok(base.pow(v as u32));
                }
                Some(Token { kind: TokenKind::Minus, .. }) => {
                    let text = match self.peek() {
                        Some(Token { kind: TokenKind::Number(_, s), .. }) => format!("-{}", s),
                        _ => "-".to_string(),
                    };
                    return Err(PolyError::BadExponent { pos, text });
                }
                Some(tok) => {
                    return Err(PolyError::BadExponent { pos, text: tok.kind.describe() });
                }
                None => {
                    return Err(PolyError::Syntax { pos, msg: "missing exponent after `^`".into() });
                }
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        let pos = self.here();
        match self.next() {
            Some(Token { kind: TokenKind::Number(v, _), .. }) => Ok(Polynomial::constant(self.dim, v)),
            Some(Token { kind: TokenKind::Ident(name), pos }) => self.identifier(&name, pos),
            Some(Token { kind: TokenKind::LParen, .. }) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token { kind: TokenKind::RParen, .. }) => Ok(inner),
                    Some(tok) => Err(PolyError::Syntax {
                        pos: tok.pos,
                        msg: format!("expected `)`, found {}", tok.kind.describe()),
                    }),
                    None => Err(PolyError::Syntax { pos: self.end, msg: "unclosed `(`".into() }),
                }
            }
            Some(tok) => Err(PolyError::Syntax {
                pos: tok.pos,
                msg: format!("expected a number, variable or `(`, found {}", tok.kind.describe()),
            }),
            None => Err(PolyError::Syntax { pos, msg: "unexpected end of expression".into() }),
        }
    }

    fn identifier(&self, name: &str, pos: usize) -> Result<Polynomial, PolyError> {
        if let Some(&v) = self.params.get(name) {
            return Ok(Polynomial::constant(self.dim, v));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = digits.parse().map_err(|_| PolyError::Syntax {
                    pos,
                    msg: format!("bad variable `{}`", name),
                })?;
                if index == 0 || index > self.dim {
                    return Err(PolyError::VariableOutOfRange { pos, index, dim: self.dim });
                }
                return Ok(Polynomial::variable(self.dim, index - 1));
            }
        }
        Err(PolyError::UnknownIdentifier { pos, name: name.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mono(e: &[u32]) -> Monomial {
        Monomial::new(e.to_vec())
    }

    #[test]
    fn parses_binomial_square() {
        let p = parse_expression("x1^2 - 2*x1*x2 + x2^2", 2).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.coefficient(&mono(&[2, 0])), 1.0);
        assert_eq!(p.coefficient(&mono(&[1, 1])), -2.0);
        assert_eq!(p.coefficient(&mono(&[0, 2])), 1.0);
    }

    #[test]
    fn parses_state_dependent_matrix_entry() {
        let p = parse_expression("0.2868*x1 - x2^2*x1", 3).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.coefficient(&mono(&[1, 0, 0])), 0.2868);
        assert_eq!(p.coefficient(&mono(&[1, 2, 0])), -1.0);
    }

    #[test]
    fn identity_expands_to_zero() {
        let p = parse_expression("(x1+x2)^2 - x1^2 - 2*x1*x2 - x2^2", 2).unwrap();
        assert!(p.is_zero());
    }

    #[test]
    fn parse_errors_carry_positions() {
        match parse_expression("x1 + * x2", 2) {
            Err(PolyError::Syntax { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("unexpected {:?}", other),
        }
        assert_eq!(
            parse_expression("x1 + x3", 2),
            Err(PolyError::VariableOutOfRange { pos: 5, index: 3, dim: 2 })
        );
        assert!(matches!(parse_expression("x1^-2", 2), Err(PolyError::BadExponent { pos: 3, .. })));
        assert!(matches!(parse_expression("x1^1.5", 2), Err(PolyError::BadExponent { .. })));
        assert!(matches!(parse_expression("(x1 + x2", 2), Err(PolyError::Syntax { .. })));
        assert!(matches!(parse_expression("b*x1", 2), Err(PolyError::UnknownIdentifier { .. })));
        assert!(matches!(parse_expression("", 2), Err(PolyError::Syntax { .. })));
    }

    #[test]
    fn parameters_substitute() {
        let mut params = HashMap::new();
        params.insert("b".to_string(), 12.0);
        let p = parse_expression_with("-b*x1 - 2*x2", 2, &params).unwrap();
        assert_eq!(p.coefficient(&mono(&[1, 0])), -12.0);
    }

    #[test]
    fn scientific_literals() {
        let p = parse_expression("1.5e-3*x1 + 2E2", 1).unwrap();
        assert_eq!(p.coefficient(&mono(&[1])), 1.5e-3);
        assert_eq!(p.coefficient(&mono(&[0])), 200.0);
    }

    #[test]
    fn print_reparse_is_exact() {
        let p = parse_expression("436.8*x1^4 + 929.2*x1^3*x2 - 0.1*x2 + 1/3", 2);
        assert!(p.is_err()); // no division
        let p = parse_expression("436.8*x1^4 + 929.2*x1^3*x2 - 0.1*x2 + 0.333333333333", 2).unwrap();
        let text = p.to_string();
        assert!(text.starts_with("4.3680000000000001e2*x1^4 + "), "{}", text);
        let q = parse_expression(&text, 2).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn gradient_power_rule() {
        let p = parse_expression("x1^2*x2", 2).unwrap();
        let g = p.gradient();
        assert_eq!(g[0], parse_expression("2*x1*x2", 2).unwrap());
        assert_eq!(g[1], parse_expression("x1^2", 2).unwrap());
        let q = even_power_norm(2, 2);
        let g = q.gradient();
        assert_eq!(g[0], parse_expression("4*x1^3", 2).unwrap());
        assert_eq!(g[1], parse_expression("4*x2^3", 2).unwrap());
    }

    #[test]
    fn lie_derivative_examples() {
        let v = parse_expression("x1^2 + x2^2", 2).unwrap();
        let node = PolynomialVectorField::linear(&[vec![-1.0, 0.0], vec![0.0, -1.0]]);
        assert_eq!(lie_derivative(&v, &node).unwrap(), parse_expression("-2*x1^2 - 2*x2^2", 2).unwrap());
        let rot = PolynomialVectorField::linear(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        assert!(lie_derivative(&v, &rot).unwrap().is_zero());
        // Van der Pol subsystem
        let vdp = PolynomialVectorField::new(vec![
            parse_expression("x2", 2).unwrap(),
            parse_expression("-x1 - (x1^2 - 1)*x2", 2).unwrap(),
        ])
        .unwrap();
        let w = parse_expression("x1^2", 2).unwrap();
        assert_eq!(lie_derivative(&w, &vdp).unwrap(), parse_expression("2*x1*x2", 2).unwrap());
        let three = PolynomialVectorField::linear(&[vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]]);
        assert!(matches!(lie_derivative(&w, &three), Err(PolyError::DimensionMismatch { .. })));
    }

    #[test]
    fn even_power_norms() {
        assert_eq!(even_power_norm(2, 1), parse_expression("x1^2 + x2^2", 2).unwrap());
        assert_eq!(even_power_norm(2, 2), parse_expression("x1^4 + x2^4", 2).unwrap());
        assert_eq!(even_power_norm(3, 1), parse_expression("x1^2 + x2^2 + x3^2", 3).unwrap());
    }

    #[test]
    fn evaluation() {
        let v = parse_expression("436.8*x1^4 + 929.2*x1^3*x2 + 963.1*x1^2*x2^2 + 519.2*x1*x2^3 + 168.1*x2^4", 2)
            .unwrap();
        assert!((v.evaluate(&[1.0, 0.0]).unwrap() - 436.8).abs() < 1e-12);
        let g = v.gradient();
        assert!((g[0].evaluate(&[1.0, 0.0]).unwrap() - 1747.2).abs() < 1e-9);
        let q = parse_expression("x1^4 + x2^4", 2).unwrap();
        assert_eq!(q.evaluate(&[1.0, 2.0]).unwrap(), 17.0);
        let r = parse_expression("3 + x1*x2 - x2^3", 2).unwrap();
        assert_eq!(r.evaluate(&[0.0, 0.0]).unwrap(), 3.0);
        assert!(matches!(r.evaluate(&[1.0]), Err(PolyError::DimensionMismatch { .. })));
    }

    #[test]
    fn degree_information() {
        let p = parse_expression("x1^2 + x1", 2).unwrap();
        assert_eq!(p.degree_info(), DegreeInfo { degree: 2, homogeneous: false });
        assert_eq!(Polynomial::zero(2).degree_info(), DegreeInfo { degree: 0, homogeneous: true });
        let v = parse_expression("1326.8*x1^12 + 3.9466*x1*x2^11 + 0.1836*x2^12", 2).unwrap();
        assert_eq!(v.degree_info(), DegreeInfo { degree: 12, homogeneous: true });
    }

    #[test]
    fn graded_lex_order() {
        let mut ms = vec![mono(&[0, 2]), mono(&[1, 0]), mono(&[0, 0]), mono(&[2, 0]), mono(&[1, 1]), mono(&[0, 1])];
        ms.sort();
        assert_eq!(ms, vec![mono(&[0, 0]), mono(&[1, 0]), mono(&[0, 1]), mono(&[2, 0]), mono(&[1, 1]), mono(&[0, 2])]);
    }

    #[test]
    fn remove_and_readd_is_identity() {
        let p = parse_expression("x1^3 - 0.25*x2 + 4", 2).unwrap();
        let m = mono(&[0, 1]);
        let mut q = p.clone();
        let c = q.remove_term(&m).unwrap();
        q.add_term(m, c);
        assert_eq!(p, q);
    }

    #[test]
    fn small_coefficients_are_dropped() {
        let p = parse_expression("x1 + 1e-15*x2", 2).unwrap();
        assert_eq!(p.len(), 1);
        let q = &p - &parse_expression("x1", 2).unwrap();
        assert!(q.is_zero());
    }

    #[test]
    fn linear_field_detection() {
        let f = PolynomialVectorField::linear(&[vec![0.0, 1.0], vec![-0.1, -2.0]]);
        assert!(f.is_linear());
        assert_eq!(f.linear_matrix().unwrap(), vec![vec![0.0, 1.0], vec![-0.1, -2.0]]);
        let g = PolynomialVectorField::new(vec![
            parse_expression("x2 + 1", 2).unwrap(),
            parse_expression("x1", 2).unwrap(),
        ])
        .unwrap();
        assert!(!g.is_linear());
    }
}
