//! Quadratic, energy-preserving, rotation-equivariant advection terms ("G-maps").
//!
//! A map is stored by its component-0 expansion: a monomial `(a, b, c)` contributes
//! `c * x[i+a] * x[i+b]` to component `i`, indices taken modulo `N`. Equivariance makes
//! every other component a shift of component 0, so nothing else is stored.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub a: i32,
    pub b: i32,
    pub c: f64,
}

impl Monomial {
    pub fn new(a: i32, b: i32, c: f64) -> Self {
        if a <= b {
            Monomial { a, b, c }
        } else {
            Monomial { a: b, b: a, c }
        }
    }
}

#[derive(Debug, Deserialize)]
struct GMapRepr {
    terms: Vec<Monomial>,
}

impl From<GMapRepr> for GMap {
    fn from(r: GMapRepr) -> Self {
        GMap::new(r.terms)
    }
}

/// Canonical G-map: terms sorted by offsets, duplicates merged, zero coefficients dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "GMapRepr")]
pub struct GMap {
    terms: Vec<Monomial>,
}

impl GMap {
    pub fn new(terms: impl IntoIterator<Item = Monomial>) -> Self {
        let mut merged: BTreeMap<(i32, i32), f64> = BTreeMap::new();
        for t in terms {
            let t = Monomial::new(t.a, t.b, t.c);
            *merged.entry((t.a, t.b)).or_insert(0.0) += t.c;
        }
        let terms = merged
            .into_iter()
            .filter(|&(_, c)| c != 0.0)
            .map(|((a, b), c)| Monomial { a, b, c })
            .collect();
        GMap { terms }
    }

    pub fn from_triples(triples: &[(i32, i32, f64)]) -> Self {
        Self::new(triples.iter().map(|&(a, b, c)| Monomial::new(a, b, c)))
    }

    pub fn zero() -> Self {
        GMap { terms: Vec::new() }
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Localization radius: the largest |offset| over all terms.
    pub fn k(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.a.unsigned_abs().max(t.b.unsigned_abs()) as usize)
            .max()
            .unwrap_or(0)
    }

    /// Smallest site count for which the 2k+1 window sites are distinct, plus one.
    pub fn min_sites(&self) -> usize {
        2 * self.k() + 2
    }

    pub fn check_sites(&self, n: usize) -> Result<()> {
        let min = self.min_sites();
        if n < min {
            return Err(Error::TooFewSites { n, k: self.k(), min });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_sites(x.len())?;
        let mut out = vec![0.0; x.len()];
        self.evaluate_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation into a preallocated buffer of the same length as `x`.
    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.terms {
            let a = t.a.rem_euclid(n as i32) as usize;
            let b = t.b.rem_euclid(n as i32) as usize;
            for (i, o) in out.iter_mut().enumerate() {
                *o += t.c * x[wrap(i + a, n)] * x[wrap(i + b, n)];
            }
        }
    }

    /// Symmetric bilinear form with `B(x, x) = 2 G(x)`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch { expected: x.len(), got: y.len() });
        }
        let n = x.len();
        self.check_sites(n)?;
        let mut out = vec![0.0; n];
        for t in &self.terms {
            let a = t.a.rem_euclid(n as i32) as usize;
            let b = t.b.rem_euclid(n as i32) as usize;
            for (i, o) in out.iter_mut().enumerate() {
                let (ia, ib) = (wrap(i + a, n), wrap(i + b, n));
                *o += t.c * (x[ia] * y[ib] + y[ia] * x[ib]);
            }
        }
        Ok(out)
    }

    /// Matrix of `y -> B(x0, y)`.
    pub fn linearize_at(&self, x0: &[f64]) -> Result<DMatrix<f64>> {
        let n = x0.len();
        self.check_sites(n)?;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for t in &self.terms {
            let a = t.a.rem_euclid(n as i32) as usize;
            let b = t.b.rem_euclid(n as i32) as usize;
            for i in 0..n {
                let (ia, ib) = (wrap(i + a, n), wrap(i + b, n));
                m[(i, ib)] += t.c * x0[ia];
                m[(i, ia)] += t.c * x0[ib];
            }
        }
        Ok(m)
    }

    /// Reflection conjugate `tau . G . tau`; reverses the advection direction.
    pub fn tilde(&self) -> GMap {
        GMap::new(self.terms.iter().map(|t| Monomial::new(-t.b, -t.a, t.c)))
    }

    pub fn scaled(&self, s: f64) -> GMap {
        GMap::new(self.terms.iter().map(|t| Monomial { c: s * t.c, ..*t }))
    }

    /// Coefficients on the window pairs `(a, b)`, `-k <= a <= b <= k`, in lexicographic order.
    pub fn pair_coefficients(&self, k: usize) -> Vec<f64> {
        let k = k as i32;
        let mut v = Vec::new();
        for a in -k..=k {
            for b in a..=k {
                v.push(
                    self.terms
                        .iter()
                        .find(|t| t.a == a && t.b == b)
                        .map_or(0.0, |t| t.c),
                );
            }
        }
        v
    }

    /// Checks that the cubic form `sum_i x_i G(x)_i` vanishes identically.
    ///
    /// Each monomial lands in the translation class of the offset triple `{0, a, b}`;
    /// the map is energy-preserving iff every class sum is zero.
    pub fn energy_certificate(&self) -> EnergyCertificate {
        let mut exact: BTreeMap<[i32; 3], Option<BigRational>> = BTreeMap::new();
        let mut approx: BTreeMap<[i32; 3], f64> = BTreeMap::new();
        for t in &self.terms {
            let key = triple_class(t.a, t.b);
            let slot = exact.entry(key).or_insert_with(|| Some(BigRational::zero()));
            match (slot.as_mut(), BigRational::from_float(t.c)) {
                (Some(acc), Some(q)) => *acc += q,
                _ => *slot = None,
            }
            *approx.entry(key).or_insert(0.0) += t.c;
        }
        if exact.values().all(|s| s.as_ref().is_some_and(|q| q.is_zero())) {
            return EnergyCertificate { preserving: true, exact: true, violations: Vec::new() };
        }
        let scale = self.terms.iter().fold(1.0f64, |m, t| m.max(t.c.abs()));
        let violations: Vec<Violation> = approx
            .into_iter()
            .filter(|(_, r)| !(r.abs() <= 1e-12 * scale))
            .map(|(triple, residual)| Violation { triple, residual })
            .collect();
        EnergyCertificate { preserving: violations.is_empty(), exact: false, violations }
    }

    pub fn is_energy_preserving(&self) -> bool {
        self.energy_certificate().preserving
    }
}

#[inline]
fn wrap(i: usize, n: usize) -> usize {
    if i >= n {
        i - n
    } else {
        i
    }
}

fn triple_class(a: i32, b: i32) -> [i32; 3] {
    let mut t = [0, a, b];
    t.sort_unstable();
    [0, t[1] - t[0], t[2] - t[0]]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Normalized offset triple `{0, u, v}` whose cubic coefficient is nonzero.
    pub triple: [i32; 3],
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyCertificate {
    pub preserving: bool,
    /// True when the decision was made in exact rational arithmetic.
    pub exact: bool,
    pub violations: Vec<Violation>,
}

impl Add for &GMap {
    type Output = GMap;
    fn add(self, rhs: &GMap) -> GMap {
        GMap::new(self.terms.iter().chain(rhs.terms.iter()).copied())
    }
}

impl Sub for &GMap {
    type Output = GMap;
    fn sub(self, rhs: &GMap) -> GMap {
        self + &rhs.scaled(-1.0)
    }
}

impl Add for GMap {
    type Output = GMap;
    fn add(self, rhs: GMap) -> GMap {
        &self + &rhs
    }
}

impl Sub for GMap {
    type Output = GMap;
    fn sub(self, rhs: GMap) -> GMap {
        &self - &rhs
    }
}

impl Neg for GMap {
    type Output = GMap;
    fn neg(self) -> GMap {
        self.scaled(-1.0)
    }
}

impl Mul<GMap> for f64 {
    type Output = GMap;
    fn mul(self, g: GMap) -> GMap {
        g.scaled(self)
    }
}

impl fmt::Display for GMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            let sign = if t.c < 0.0 { "-" } else if i > 0 { "+" } else { "" };
            if i > 0 {
                write!(f, " {sign} ")?;
            } else {
                write!(f, "{sign}")?;
            }
            if t.c.abs() != 1.0 {
                write!(f, "{}*", t.c.abs())?;
            }
            if t.a == t.b {
                write!(f, "x[{}]^2", t.a)?;
            } else {
                write!(f, "x[{}]x[{}]", t.a, t.b)?;
            }
        }
        Ok(())
    }
}

pub fn g1() -> GMap {
    GMap::from_triples(&[(1, 1, 1.0), (-1, 0, -1.0)])
}
pub fn g2() -> GMap {
    GMap::from_triples(&[(2, 2, 1.0), (-2, 0, -1.0)])
}
/// The Lorenz '96 term `x[i-1] (x[i+1] - x[i-2])`.
pub fn g3() -> GMap {
    GMap::from_triples(&[(-1, 1, 1.0), (-2, -1, -1.0)])
}
pub fn g4() -> GMap {
    GMap::from_triples(&[(3, 3, 1.0), (-3, 0, -1.0)])
}
pub fn g5() -> GMap {
    GMap::from_triples(&[(2, 3, 1.0), (-2, 1, -1.0)])
}
pub fn g6() -> GMap {
    GMap::from_triples(&[(1, 3, 1.0), (-1, 2, -1.0)])
}
pub fn g7() -> GMap {
    g3() - g3().tilde()
}
pub fn g8() -> GMap {
    g5() - g6().tilde()
}
/// Nonzero 2-localized map whose linearization at constant states vanishes.
pub fn g0() -> GMap {
    g3() - 2.0 * g3().tilde() + g1().tilde() - g2()
}

/// `G0` ... `G8`; `None` for any other index.
pub fn named(index: u32) -> Option<GMap> {
    Some(match index {
        0 => g0(),
        1 => g1(),
        2 => g2(),
        3 => g3(),
        4 => g4(),
        5 => g5(),
        6 => g6(),
        7 => g7(),
        8 => g8(),
        _ => return None,
    })
}

/// Named basis of the k-localized G-maps, k in {1, 2, 3}.
pub fn basis_named(k: usize) -> Result<Vec<(String, GMap)>> {
    let blocks: &[&[u32]] = &[&[1], &[2, 3], &[4, 5, 6]];
    if !(1..=3).contains(&k) {
        return Err(Error::InvalidArgument(format!("basis is available for k in 1..=3, got {k}")));
    }
    let mut out = Vec::new();
    for block in &blocks[..k] {
        for &i in *block {
            let g = named(i).expect("basis index");
            out.push((format!("~G{i}"), g.tilde()));
            out.insert(out.len() - 1, (format!("G{i}"), g));
        }
    }
    Ok(out)
}

pub fn basis(k: usize) -> Result<Vec<GMap>> {
    Ok(basis_named(k)?.into_iter().map(|(_, g)| g).collect())
}

/// Dimension of the subspace of k-localized G-maps whose linearization at `e` is zero.
pub fn linearization_kernel_dim(k: usize) -> Result<usize> {
    let maps = basis(k)?;
    let rows = 2 * k + 1;
    let mut m = DMatrix::<f64>::zeros(rows, maps.len());
    for (col, g) in maps.iter().enumerate() {
        for t in g.terms() {
            m[((t.a + k as i32) as usize, col)] += t.c;
            m[((t.b + k as i32) as usize, col)] += t.c;
        }
    }
    Ok(maps.len() - m.rank(1e-9))
}

/// A parsed expression together with its canonical map.
#[derive(Debug, Clone, PartialEq)]
pub struct GMapExpr {
    pub source: String,
    pub resolved: GMap,
}

/// Parses `expr ::= term (('+'|'-') term)*`, `term ::= [real '*'] ['~'] 'G' digit`.
/// A leading sign on the first term is accepted.
pub fn parse(expr: &str) -> Result<GMapExpr> {
    let mut p = Parser { src: expr, chars: expr.char_indices().collect(), pos: 0 };
    let resolved = p.expr()?;
    Ok(GMapExpr { source: expr.to_string(), resolved })
}

impl FromStr for GMap {
    type Err = Error;
    fn from_str(s: &str) -> Result<GMap> {
        Ok(parse(s)?.resolved)
    }
}

struct Parser<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.src.len(), |&(i, _)| i)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos: self.offset(), msg: msg.into() })
    }

    fn expr(&mut self) -> Result<GMap> {
        self.skip_ws();
        if self.peek().is_none() {
            return self.err("empty expression");
        }
        let mut sign = 1.0;
        if let Some(c @ ('+' | '-')) = self.peek() {
            sign = if c == '-' { -1.0 } else { 1.0 };
            self.pos += 1;
        }
        let mut acc = self.term()?.scaled(sign);
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Ok(acc),
                Some(c @ ('+' | '-')) => {
                    self.pos += 1;
                    let t = self.term()?;
                    acc = if c == '+' { &acc + &t } else { &acc - &t };
                }
                Some(c) => return self.err(format!("expected '+' or '-', found '{c}'")),
            }
        }
    }

    fn term(&mut self) -> Result<GMap> {
        self.skip_ws();
        let mut coeff = 1.0;
        if matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            coeff = self.number()?;
            self.skip_ws();
            if self.peek() != Some('*') {
                return self.err("expected '*' after coefficient");
            }
            self.pos += 1;
            self.skip_ws();
        }
        let mut reflect = false;
        if self.peek() == Some('~') {
            reflect = true;
            self.pos += 1;
            self.skip_ws();
        }
        match self.peek() {
            Some('G') => self.pos += 1,
            None => return self.err("expected a map name, found end of input"),
            Some(c) => return self.err(format!("unknown name starting with '{c}'")),
        }
        let start = self.offset();
        let digit = match self.peek() {
            Some(c) if c.is_ascii_digit() => c.to_digit(10).unwrap(),
            _ => return self.err("expected a digit after 'G'"),
        };
        self.pos += 1;
        if matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
            return Err(Error::Parse { pos: start, msg: "unknown map name".into() });
        }
        let g = named(digit).ok_or_else(|| Error::Parse {
            pos: start,
            msg: format!("unknown map G{digit} (known: G0..G8)"),
        })?;
        let g = if reflect { g.tilde() } else { g };
        Ok(g.scaled(coeff))
    }

    fn number(&mut self) -> Result<f64> {
        let start_pos = self.pos;
        let start = self.offset();
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        let text = &self.src[start..self.offset()];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => {
                self.pos = start_pos;
                self.err(format!("malformed coefficient '{text}'"))
            }
        }
    }
}
