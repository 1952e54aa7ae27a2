use std::fmt;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::model::params::MAX_DIM;

/// Maximum total degree of any polynomial.
pub const DEGREE_CAP: usize = 8;

/// Exponents per coordinate; unused coordinates are zero.
pub type MultiIndex = [u8; MAX_DIM];

const SIDE: usize = DEGREE_CAP + 1;

/// Graded monomial basis for one dimension: all monomials of total degree
/// at most `DEGREE_CAP`, ordered by degree and then lexicographically
/// descending.
pub(crate) struct Basis {
    pub exps: Vec<MultiIndex>,
    /// `offset[k]` is the index of the first monomial of degree k.
    pub offset: Vec<usize>,
    lookup: Vec<u32>,
}

impl Basis {
    fn build(dim: usize) -> Basis {
        let mut exps = Vec::new();
        let mut offset = Vec::with_capacity(SIDE + 1);
        for deg in 0..=DEGREE_CAP {
            offset.push(exps.len());
            let mut block = Vec::new();
            collect(dim, deg, &mut [0u8; MAX_DIM], 0, &mut block);
            block.sort_by(|a, b| b.cmp(a));
            exps.extend(block);
        }
        offset.push(exps.len());
        let mut lookup = vec![u32::MAX; SIDE * SIDE * SIDE];
        for (i, e) in exps.iter().enumerate() {
            lookup[key(e)] = i as u32;
        }
        Basis { exps, offset, lookup }
    }

    #[inline]
    pub fn index(&self, e: &MultiIndex) -> usize {
        self.lookup[key(e)] as usize
    }

    pub fn len_for_degree(&self, deg: usize) -> usize {
        self.offset[deg + 1]
    }
}

fn collect(dim: usize, rest: usize, cur: &mut MultiIndex, pos: usize, out: &mut Vec<MultiIndex>) {
    if pos == dim - 1 {
        cur[pos] = rest as u8;
        out.push(*cur);
        cur[pos] = 0;
        return;
    }
    for k in 0..=rest {
        cur[pos] = k as u8;
        collect(dim, rest - k, cur, pos + 1, out);
    }
    cur[pos] = 0;
}

#[inline]
fn key(e: &MultiIndex) -> usize {
    (e[0] as usize * SIDE + e[1] as usize) * SIDE + e[2] as usize
}

pub(crate) fn basis(dim: usize) -> &'static Basis {
    static BASES: [OnceLock<Basis>; MAX_DIM] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    BASES[dim - 1].get_or_init(|| Basis::build(dim))
}

pub fn total_degree(e: &MultiIndex) -> usize {
    e.iter().map(|&k| k as usize).sum()
}

/// Real polynomial in `dim` variables with degree at most `DEGREE_CAP`.
///
/// Coefficients are stored densely in the graded basis, truncated after the
/// highest nonzero degree block. `terms` only reports nonzero coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    dim: usize,
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Polynomial {
        assert!((1..=MAX_DIM).contains(&dim), "dimension out of range");
        Polynomial { dim, coeffs: Vec::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Polynomial {
        let mut p = Polynomial::zero(dim);
        if c != 0.0 {
            p.coeffs.push(c);
        }
        p
    }

    pub fn monomial(dim: usize, exps: MultiIndex, c: f64) -> Result<Polynomial> {
        let deg = total_degree(&exps);
        if deg > DEGREE_CAP {
            return Err(Error::DegreeCap { degree: deg, cap: DEGREE_CAP });
        }
        if exps[dim..].iter().any(|&k| k != 0) {
            return Err(Error::DimensionMismatch { expected: dim, got: MAX_DIM });
        }
        let mut p = Polynomial::zero(dim);
        p.set(exps, c);
        Ok(p)
    }

    /// The coordinate function x_{i+1}.
    pub fn coordinate(dim: usize, i: usize) -> Polynomial {
        let mut e = [0u8; MAX_DIM];
        e[i] = 1;
        Polynomial::monomial(dim, e, 1.0).expect("degree 1 fits the cap")
    }

    /// Build from (multi-index, coefficient) pairs; repeated indices add up.
    pub fn from_terms(dim: usize, terms: &[(MultiIndex, f64)]) -> Result<Polynomial> {
        let mut p = Polynomial::zero(dim);
        for (e, c) in terms {
            p = p.add(&Polynomial::monomial(dim, *e, *c)?);
        }
        Ok(p)
    }

    pub(crate) fn from_dense(dim: usize, coeffs: Vec<f64>) -> Polynomial {
        let mut p = Polynomial { dim, coeffs };
        p.trim();
        p
    }

    pub(crate) fn dense(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Total degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            return None;
        }
        let b = basis(self.dim);
        let last = self.coeffs.len() - 1;
        Some(total_degree(&b.exps[last]))
    }

    pub fn coeff(&self, exps: MultiIndex) -> f64 {
        if total_degree(&exps) > DEGREE_CAP {
            return 0.0;
        }
        let i = basis(self.dim).index(&exps);
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    fn set(&mut self, exps: MultiIndex, c: f64) {
        let b = basis(self.dim);
        let i = b.index(&exps);
        if i >= self.coeffs.len() {
            if c == 0.0 {
                return;
            }
            let deg = total_degree(&exps);
            self.coeffs.resize(b.len_for_degree(deg), 0.0);
        }
        self.coeffs[i] = c;
        self.trim();
    }

    /// Nonzero terms in basis order (ascending degree).
    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        let b = basis(self.dim);
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(move |(i, c)| (b.exps[i], *c))
    }

    fn trim(&mut self) {
        if self.coeffs.iter().all(|c| *c == 0.0) {
            self.coeffs.clear();
            return;
        }
        let b = basis(self.dim);
        loop {
            let n = self.coeffs.len();
            let deg = total_degree(&b.exps[n - 1]);
            let start = b.offset[deg];
            if self.coeffs[start..].iter().any(|c| *c != 0.0) {
                break;
            }
            self.coeffs.truncate(start);
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        if self.dim == 1 {
            return self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x[0] + c);
        }
        let b = basis(self.dim);
        let deg = self.degree().unwrap_or(0);
        let mut pows = [[1.0f64; SIDE]; MAX_DIM];
        for (i, xi) in x.iter().enumerate() {
            for k in 1..=deg {
                pows[i][k] = pows[i][k - 1] * xi;
            }
        }
        let mut s = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            if *c != 0.0 {
                let e = b.exps[i];
                let mut m = *c;
                for j in 0..self.dim {
                    m *= pows[j][e[j] as usize];
                }
                s += m;
            }
        }
        s
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.axpy(-1.0, other)
    }

    /// self + a * other.
    pub fn axpy(&self, a: f64, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        out.axpy_assign(a, other);
        out
    }

    pub fn axpy_assign(&mut self, a: f64, other: &Polynomial) {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        if other.coeffs.len() > self.coeffs.len() {
            self.coeffs.resize(other.coeffs.len(), 0.0);
        }
        for (s, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *s += a * o;
        }
        self.trim();
    }

    pub fn scale(&self, a: f64) -> Polynomial {
        Polynomial::from_dense(self.dim, self.coeffs.iter().map(|c| a * c).collect())
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial> {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let (Some(da), Some(db)) = (self.degree(), other.degree()) else {
            return Ok(Polynomial::zero(self.dim));
        };
        if da + db > DEGREE_CAP {
            return Err(Error::DegreeCap { degree: da + db, cap: DEGREE_CAP });
        }
        let b = basis(self.dim);
        let mut out = vec![0.0; b.len_for_degree(da + db)];
        if self.dim == 1 {
            for (i, x) in self.coeffs.iter().enumerate() {
                for (j, y) in other.coeffs.iter().enumerate() {
                    out[i + j] += x * y;
                }
            }
        } else {
            for (i, x) in self.coeffs.iter().enumerate() {
                if *x == 0.0 {
                    continue;
                }
                let ei = b.exps[i];
                for (j, y) in other.coeffs.iter().enumerate() {
                    if *y == 0.0 {
                        continue;
                    }
                    let ej = b.exps[j];
                    let e = [ei[0] + ej[0], ei[1] + ej[1], ei[2] + ej[2]];
                    out[b.index(&e)] += x * y;
                }
            }
        }
        Ok(Polynomial::from_dense(self.dim, out))
    }

    pub fn powi(&self, k: usize) -> Result<Polynomial> {
        let mut out = Polynomial::constant(self.dim, 1.0);
        for _ in 0..k {
            out = out.mul(self)?;
        }
        Ok(out)
    }

    /// Partial derivative in coordinate i.
    pub fn derivative(&self, i: usize) -> Polynomial {
        let b = basis(self.dim);
        let mut out = vec![0.0; self.coeffs.len()];
        for (j, c) in self.coeffs.iter().enumerate() {
            let e = b.exps[j];
            if *c != 0.0 && e[i] > 0 {
                let mut d = e;
                d[i] -= 1;
                out[b.index(&d)] += c * e[i] as f64;
            }
        }
        Polynomial::from_dense(self.dim, out)
    }

    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.dim).map(|i| self.derivative(i)).collect()
    }

    /// Polynomial with every coefficient replaced by its absolute value.
    pub fn abs_coeffs(&self) -> Polynomial {
        Polynomial { dim: self.dim, coeffs: self.coeffs.iter().map(|c| c.abs()).collect() }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Parse the text form, e.g. `0.5 * x1^2 - 3 * x1 * x2 + 1`.
    /// A bare `x` means `x1`.
    pub fn parse(s: &str, dim: usize) -> Result<Polynomial> {
        Parser { src: s.as_bytes(), pos: 0, dim }.polynomial()
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<_> = self.terms().collect();
        if terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (e, c)) in terms.iter().rev().enumerate() {
            let mag = if n == 0 {
                if *c < 0.0 {
                    write!(f, "-")?;
                }
                c.abs()
            } else {
                write!(f, " {} ", if *c < 0.0 { '-' } else { '+' })?;
                c.abs()
            };
            write!(f, "{mag:?}")?;
            for (i, k) in e.iter().enumerate().take(self.dim) {
                match k {
                    0 => {}
                    1 => write!(f, " * x{}", i + 1)?,
                    k => write!(f, " * x{}^{}", i + 1, k)?,
                }
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn err<T>(&self, msg: &str) -> Result<T> {
        Err(Error::Parse { pos: self.pos, msg: msg.to_string() })
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

    fn polynomial(&mut self) -> Result<Polynomial> {
        let mut acc = Polynomial::zero(self.dim);
        let mut sign = 1.0;
        match self.peek() {
            Some(b'-') => {
                sign = -1.0;
                self.pos += 1;
            }
            Some(b'+') => self.pos += 1,
            None => return self.err("empty polynomial"),
            _ => {}
        }
        loop {
            let (c, e) = self.term()?;
            acc = acc.add(&Polynomial::monomial(self.dim, e, sign * c)?);
            match self.peek() {
                None => return Ok(acc),
                Some(b'+') => sign = 1.0,
                Some(b'-') => sign = -1.0,
                Some(_) => return self.err("expected '+' or '-'"),
            }
            self.pos += 1;
            match self.peek() {
                Some(b'-') => {
                    sign = -sign;
                    self.pos += 1;
                }
                Some(b'+') => self.pos += 1,
                _ => {}
            }
        }
    }

    fn term(&mut self) -> Result<(f64, MultiIndex)> {
        let mut c = 1.0;
        let mut e = [0u8; MAX_DIM];
        let mut first = true;
        loop {
            match self.peek() {
                Some(b'*') if !first => {
                    self.pos += 1;
                    continue;
                }
                Some(ch) if ch.is_ascii_digit() || ch == b'.' => c *= self.number()?,
                Some(b'x') => {
                    let (i, k) = self.variable()?;
                    let total = e[i] as usize + k;
                    if total > DEGREE_CAP {
                        return Err(Error::DegreeCap { degree: total, cap: DEGREE_CAP });
                    }
                    e[i] = total as u8;
                }
                _ if first => return self.err("expected a number or variable"),
                _ => return Ok((c, e)),
            }
            first = false;
        }
    }

    fn number(&mut self) -> Result<f64> {
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
                i = j;
                while i < s.len() && s[i].is_ascii_digit() {
                    i += 1;
                }
            }
        }
        self.pos = i;
        let text = std::str::from_utf8(&s[start..i]).expect("ascii");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => {
                self.pos = start;
                self.err("invalid number")
            }
        }
    }

    fn variable(&mut self) -> Result<(usize, usize)> {
        self.pos += 1;
        let s = self.src;
        let start = self.pos;
        while self.pos < s.len() && s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let idx = if start == self.pos {
            1
        } else {
            std::str::from_utf8(&s[start..self.pos]).expect("ascii").parse::<usize>().unwrap_or(0)
        };
        if idx == 0 || idx > self.dim {
            self.pos = start;
            return self.err(&format!("variable index must be in 1..={}", self.dim));
        }
        let mut k = 1;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let es = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if es == self.pos {
                return self.err("expected exponent");
            }
            k = std::str::from_utf8(&s[es..self.pos])
                .expect("ascii")
                .parse::<usize>()
                .map_err(|_| Error::Parse { pos: es, msg: "exponent too large".into() })?;
        }
        Ok((idx - 1, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_sizes() {
        assert_eq!(basis(1).exps.len(), 9);
        assert_eq!(basis(2).exps.len(), 45);
        assert_eq!(basis(3).exps.len(), 165);
        for d in 1..=3 {
            let b = basis(d);
            for (i, e) in b.exps.iter().enumerate() {
                assert_eq!(b.index(e), i);
            }
        }
    }

    #[test]
    fn parse_and_print() {
        let p = Polynomial::parse("x^2 - 0.5", 1).unwrap();
        assert_eq!(p.coeff([2, 0, 0]), 1.0);
        assert_eq!(p.coeff([0, 0, 0]), -0.5);
        assert_eq!(p.to_string(), "1.0 * x1^2 - 0.5");
        let q = Polynomial::parse("3 x1 x2^2 + -2*x3", 3).unwrap();
        assert_eq!(q.coeff([1, 2, 0]), 3.0);
        assert_eq!(q.coeff([0, 0, 1]), -2.0);
        assert_eq!(Polynomial::parse(&q.to_string(), 3).unwrap(), q);
        assert!(Polynomial::parse("x4", 3).is_err());
        assert!(Polynomial::parse("x^9", 1).is_err());
        assert!(Polynomial::parse("", 1).is_err());
        assert_eq!(Polynomial::zero(2).to_string(), "0");
    }

    #[test]
    fn degree_cap_on_product() {
        let p = Polynomial::parse("x^5", 1).unwrap();
        assert!(matches!(p.mul(&p), Err(Error::DegreeCap { degree: 10, .. })));
    }

    #[test]
    fn eval_and_derivative() {
        let p = Polynomial::parse("2 * x1^2 * x2 + x2 - 1", 2).unwrap();
        assert_eq!(p.eval(&[3.0, 2.0]), 2.0 * 9.0 * 2.0 + 2.0 - 1.0);
        let d = p.derivative(0);
        assert_eq!(d.eval(&[3.0, 2.0]), 4.0 * 3.0 * 2.0);
        assert_eq!(p.degree(), Some(3));
        assert_eq!(p.sub(&p).degree(), None);
    }
}
