//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! All symbolic computation in this crate (Lie brackets, homogeneity
//! checks, commutator determinants) runs on these polynomials, so the
//! arithmetic here is exact: coefficients are arbitrary-precision
//! rationals and zero terms are never stored. Floating point enters
//! only at point evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::MpError;

/// Exact coefficient type.
pub type Coeff = BigRational;

/// Convenience constructor for an integer coefficient.
pub fn coeff_int(n: i64) -> Coeff {
    BigRational::from_integer(BigInt::from(n))
}

/// Convenience constructor for the rational `num/den`.
pub fn coeff_ratio(num: i64, den: i64) -> Coeff {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// A sparse polynomial in `dim` variables.
///
/// Terms map an exponent multi-index to a nonzero rational coefficient.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<Vec<u32>, Coeff>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Polynomial { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: Coeff) -> Self {
        let mut p = Polynomial::zero(dim);
        if !c.is_zero() {
            p.terms.insert(vec![0; dim], c);
        }
        p
    }

    pub fn one(dim: usize) -> Self {
        Polynomial::constant(dim, Coeff::one())
    }

    /// The coordinate variable `x_{i+1}` (zero-based index `i`).
    pub fn variable(dim: usize, i: usize) -> Self {
        assert!(i < dim, "variable index out of range");
        let mut exps = vec![0u32; dim];
        exps[i] = 1;
        let mut p = Polynomial::zero(dim);
        p.terms.insert(exps, Coeff::one());
        p
    }

    /// Build from raw (exponents, coefficient) pairs; zero coefficients dropped.
    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (Vec<u32>, Coeff)>) -> Self {
        let mut p = Polynomial::zero(dim);
        for (e, c) in terms {
            assert_eq!(e.len(), dim, "exponent multi-index has wrong length");
            p.add_term(e, c);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], &Coeff)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    fn add_term(&mut self, exps: Vec<u32>, c: Coeff) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(exps) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let sum = o.get() + &c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Polynomial {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -c.clone();
        }
        out
    }

    pub fn scale(&self, s: &Coeff) -> Polynomial {
        if s.is_zero() {
            return Polynomial::zero(self.dim);
        }
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = c.clone() * s;
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut out = Polynomial::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let exps: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(exps, ca * cb);
            }
        }
        out
    }

    /// Partial derivative with respect to variable `i` (zero-based).
    pub fn partial(&self, i: usize) -> Polynomial {
        assert!(i < self.dim, "variable index out of range");
        let mut out = Polynomial::zero(self.dim);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut exps = e.clone();
            exps[i] -= 1;
            out.add_term(exps, c * coeff_int(i64::from(e[i])));
        }
        out
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "point has wrong dimension");
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut m = rational_to_f64(c);
            for (xi, &ei) in x.iter().zip(e) {
                m *= xi.powi(ei as i32);
            }
            acc += m;
        }
        acc
    }

    pub fn eval_rational(&self, x: &[Coeff]) -> Coeff {
        assert_eq!(x.len(), self.dim, "point has wrong dimension");
        let mut acc = Coeff::zero();
        for (e, c) in &self.terms {
            let mut m = c.clone();
            for (xi, &ei) in x.iter().zip(e) {
                for _ in 0..ei {
                    m *= xi;
                }
            }
            acc += m;
        }
        acc
    }

    /// Weighted degree of a monomial under the exponents `sigma`.
    pub fn weighted_degree_of(exps: &[u32], sigma: &[u32]) -> u64 {
        exps.iter().zip(sigma).map(|(&e, &s)| u64::from(e) * u64::from(s)).sum()
    }

    /// If every monomial has the same weighted degree under `sigma`,
    /// returns it; `None` for the zero polynomial or mixed degrees.
    pub fn uniform_weighted_degree(&self, sigma: &[u32]) -> Option<u64> {
        let mut deg = None;
        for e in self.terms.keys() {
            let d = Self::weighted_degree_of(e, sigma);
            match deg {
                None => deg = Some(d),
                Some(prev) if prev != d => return None,
                _ => {}
            }
        }
        deg
    }

    /// Substitute `x_i -> lambda^{sigma_i} x_i` with an exact rational `lambda`.
    pub fn dilate(&self, sigma: &[u32], lambda: &Coeff) -> Polynomial {
        let mut out = Polynomial::zero(self.dim);
        for (e, c) in &self.terms {
            let mut factor = Coeff::one();
            for (&ei, &si) in e.iter().zip(sigma) {
                for _ in 0..(ei as u64 * u64::from(si)) {
                    factor *= lambda;
                }
            }
            out.add_term(e.clone(), c * factor);
        }
        out
    }
}

pub fn rational_to_f64(c: &Coeff) -> f64 {
    // Good enough for the coefficient sizes arising from brackets of
    // preset fields; avoids the bigint-to-f64 precision cliff by going
    // through a division of rounded parts only when they fit.
    let n = c.numer();
    let d = c.denom();
    match (to_f64_exactish(n), to_f64_exactish(d)) {
        (Some(nf), Some(df)) => nf / df,
        _ => {
            // Fall back to a string round-trip for enormous values.
            let s = c.to_string();
            parse_big_ratio_f64(&s)
        }
    }
}

fn to_f64_exactish(n: &BigInt) -> Option<f64> {
    use num_traits::ToPrimitive;
    n.to_f64().filter(|f| f.is_finite())
}

fn parse_big_ratio_f64(s: &str) -> f64 {
    match s.split_once('/') {
        Some((a, b)) => a.parse::<f64>().unwrap_or(f64::NAN) / b.parse::<f64>().unwrap_or(f64::NAN),
        None => s.parse::<f64>().unwrap_or(f64::NAN),
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let vars: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &ei)| ei > 0)
                .map(|(i, &ei)| {
                    if ei == 1 {
                        format!("x{}", i + 1)
                    } else {
                        format!("x{}^{}", i + 1, ei)
                    }
                })
                .collect();
            if vars.is_empty() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{}", vars.join("*"))?;
            } else {
                write!(f, "{}*{}", mag, vars.join("*"))?;
            }
        }
        Ok(())
    }
}

/// Parse a polynomial in the operator config grammar.
///
/// Terms are joined by `+`/`-`; each term is a product of an optional
/// rational coefficient and variable powers, joined by `*`:
/// `-1/2*x2`, `x1^2*x2`, `3`, `0`.
pub fn parse_polynomial(input: &str, dim: usize) -> Result<Polynomial, MpError> {
    let s = input.trim();
    if s.is_empty() {
        return Err(MpError::Parse("empty polynomial string".into()));
    }
    let mut out = Polynomial::zero(dim);
    for (sign, term) in split_terms(s)? {
        let (exps, coeff) = parse_term(term, dim)?;
        let signed = if sign { -coeff } else { coeff };
        out.add_term(exps, signed);
    }
    Ok(out)
}

/// Split on top-level `+`/`-`, returning (is_negative, term) pairs.
fn split_terms(s: &str) -> Result<Vec<(bool, &str)>, MpError> {
    let bytes = s.as_bytes();
    let mut parts = Vec::new();
    let mut start = 0usize;
    let mut neg = false;
    let mut i = 0usize;
    // Leading sign.
    if bytes[0] == b'+' || bytes[0] == b'-' {
        neg = bytes[0] == b'-';
        start = 1;
        i = 1;
    }
    while i < bytes.len() {
        let b = bytes[i];
        if (b == b'+' || b == b'-') && i > start {
            let prev = bytes[i - 1];
            // A sign following '*', '^' or '/' belongs to the term.
            if prev != b'*' && prev != b'^' && prev != b'/' {
                parts.push((neg, s[start..i].trim()));
                neg = b == b'-';
                start = i + 1;
            }
        }
        i += 1;
    }
    if start >= bytes.len() {
        return Err(MpError::Parse(format!("dangling sign in `{s}`")));
    }
    parts.push((neg, s[start..].trim()));
    Ok(parts)
}

fn parse_term(term: &str, dim: usize) -> Result<(Vec<u32>, Coeff), MpError> {
    let mut coeff = Coeff::one();
    let mut exps = vec![0u32; dim];
    for factor in term.split('*') {
        let f = factor.trim();
        if f.is_empty() {
            return Err(MpError::Parse(format!("empty factor in `{term}`")));
        }
        if let Some(rest) = f.strip_prefix('x') {
            let (idx_str, exp) = match rest.split_once('^') {
                Some((i, e)) => {
                    let exp: u32 = e
                        .trim()
                        .parse()
                        .map_err(|_| MpError::Parse(format!("bad exponent in `{f}`")))?;
                    (i.trim(), exp)
                }
                None => (rest.trim(), 1),
            };
            let idx: usize = idx_str
                .parse()
                .map_err(|_| MpError::Parse(format!("bad variable `{f}`")))?;
            if idx == 0 || idx > dim {
                return Err(MpError::Parse(format!(
                    "variable x{idx} out of range for dimension {dim}"
                )));
            }
            exps[idx - 1] += exp;
        } else {
            let c = Coeff::from_str(f)
                .map_err(|_| MpError::Parse(format!("bad coefficient `{f}`")))?;
            coeff *= c;
        }
    }
    Ok((exps, coeff))
}
