//! Multivariate monomials, sparse real polynomials and the moment-side
//! objects built from them: the Riesz functional, moment matrices and
//! localizing matrices.
//!
//! Monomials are ordered graded-lexicographically with `x1 > x2 > ... > xn`,
//! listed by increasing degree. For two variables and degree two the basis is
//! `1, x1, x2, x1^2, x1 x2, x2^2`.

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected} variables, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("moment order overflow: need moments up to degree {needed}, have {available}")]
    OrderOverflow { needed: usize, available: usize },
}

/// Exponent vector `alpha` of the monomial `x^alpha`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    /// The monomial `x_i` (zero-based `i`).
    pub fn unit(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.0.len(), other.0.len());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&e, &xi)| xi.powi(e as i32))
            .product()
    }
}

impl Ord for MultiIndex {
    /// Basis order: total degree first, then lexicographic with larger
    /// leading exponents placed first (`x1` before `x2`).
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.0 {
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// `s(t) = (n+t)! / (t! n!)`, the number of monomials of degree at most `t`.
pub fn num_monomials(n: usize, t: usize) -> usize {
    let mut r: u128 = 1;
    for k in 1..=t as u128 {
        r = r * (n as u128 + k) / k;
    }
    r as usize
}

/// All monomials in `n` variables of degree at most `t`, in basis order, with
/// the inverse lookup table.
#[derive(Clone, Debug)]
pub struct MonomialBasis {
    n: usize,
    t: usize,
    monomials: Vec<MultiIndex>,
    index: HashMap<MultiIndex, usize>,
}

fn push_degree(n: usize, d: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if prefix.len() == n - 1 {
        prefix.push(d);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for first in (0..=d).rev() {
        prefix.push(first);
        push_degree(n, d - first, prefix, out);
        prefix.pop();
    }
}

impl MonomialBasis {
    pub fn new(n: usize, t: usize) -> Self {
        assert!(n >= 1, "monomial basis needs at least one variable");
        let mut monomials = Vec::with_capacity(num_monomials(n, t));
        let mut prefix = Vec::with_capacity(n);
        for d in 0..=t as u32 {
            push_degree(n, d, &mut prefix, &mut monomials);
        }
        let index = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        MonomialBasis {
            n,
            t,
            monomials,
            index,
        }
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn max_degree(&self) -> usize {
        self.t
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Option<usize> {
        self.index.get(alpha).copied()
    }

    pub fn monomial_at(&self, i: usize) -> &MultiIndex {
        &self.monomials[i]
    }

    pub fn monomials(&self) -> &[MultiIndex] {
        &self.monomials
    }

    /// Number of leading basis elements of degree at most `d`.
    pub fn prefix_len(&self, d: usize) -> usize {
        num_monomials(self.n, d.min(self.t))
    }

    /// Evaluates every monomial at `x`: the vector `v_t(x)`.
    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.monomials.iter().map(|m| m.eval(x)))
    }
}

/// Convenience wrapper matching the usual operation name.
pub fn enumerate_basis(n: usize, t: usize) -> MonomialBasis {
    MonomialBasis::new(n, t)
}

/// Sparse real polynomial. Zero coefficients are never stored.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(n);
        p.add_term(MultiIndex::zero(n), c);
        p
    }

    /// The polynomial `x_i` (zero-based).
    pub fn var(n: usize, i: usize) -> Self {
        let mut p = Polynomial::zero(n);
        p.add_term(MultiIndex::unit(n, i), 1.0);
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (Vec<u32>, f64)>>(n: usize, terms: I) -> Self {
        let mut p = Polynomial::zero(n);
        for (e, c) in terms {
            assert_eq!(e.len(), n, "exponent vector length must equal n");
            p.add_term(MultiIndex(e), c);
        }
        p
    }

    pub fn add_term(&mut self, alpha: MultiIndex, c: f64) {
        debug_assert_eq!(alpha.nvars(), self.n);
        match self.terms.entry(alpha) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
            Entry::Vacant(v) => {
                if c != 0.0 {
                    v.insert(c);
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(k, v)| (k, *v))
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Highest total degree among stored terms; 0 for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    /// `ceil(deg / 2)`.
    pub fn half_degree(&self) -> usize {
        self.degree().div_ceil(2)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.n {
            return Err(PolyError::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(self.terms.iter().map(|(a, c)| c * a.eval(x)).sum())
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut p = Polynomial::zero(self.n);
        if s != 0.0 {
            for (a, c) in &self.terms {
                p.terms.insert(a.clone(), c * s);
            }
        }
        p
    }

    /// Multiplies by the monomial `x^alpha`.
    pub fn shift(&self, alpha: &MultiIndex) -> Polynomial {
        Polynomial {
            n: self.n,
            terms: self.terms.iter().map(|(a, c)| (a.add(alpha), *c)).collect(),
        }
    }

    /// Partial derivative with respect to `x_i`.
    pub fn derivative(&self, i: usize) -> Polynomial {
        let mut p = Polynomial::zero(self.n);
        for (a, c) in &self.terms {
            let e = a.0[i];
            if e > 0 {
                let mut b = a.clone();
                b.0[i] -= 1;
                p.add_term(b, c * e as f64);
            }
        }
        p
    }

    pub fn gradient(&self, x: &[f64]) -> Result<DVector<f64>, PolyError> {
        let mut g = DVector::zeros(self.n);
        for i in 0..self.n {
            g[i] = self.derivative(i).eval(x)?;
        }
        Ok(g)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>, PolyError> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let di = self.derivative(i);
            for j in i..self.n {
                let v = di.derivative(j).eval(x)?;
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(h)
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(a, c)| format!("{c}*x^{a:?}"))
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.n, rhs.n);
        let mut p = self.clone();
        for (a, c) in &rhs.terms {
            p.add_term(a.clone(), *c);
        }
        p
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &rhs.scale(-1.0)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.n, rhs.n);
        let mut p = Polynomial::zero(self.n);
        for (a, c) in &self.terms {
            for (b, d) in &rhs.terms {
                p.add_term(a.add(b), c * d);
            }
        }
        p
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: Polynomial) -> Polynomial {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

pub fn poly_eval(p: &Polynomial, x: &[f64]) -> Result<f64, PolyError> {
    p.eval(x)
}

/// Truncated moment sequence `y_alpha`, `|alpha| <= order`, in basis order.
#[derive(Clone, Debug)]
pub struct MomentVector {
    basis: MonomialBasis,
    values: Vec<f64>,
}

impl MomentVector {
    pub fn new(basis: MonomialBasis, values: Vec<f64>) -> Self {
        assert_eq!(basis.len(), values.len(), "moment vector length mismatch");
        MomentVector { basis, values }
    }

    pub fn zeros(n: usize, order: usize) -> Self {
        let basis = MonomialBasis::new(n, order);
        let values = vec![0.0; basis.len()];
        MomentVector { basis, values }
    }

    pub fn nvars(&self) -> usize {
        self.basis.nvars()
    }

    pub fn order(&self) -> usize {
        self.basis.max_degree()
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, alpha: &MultiIndex) -> Option<f64> {
        self.basis.index_of(alpha).map(|i| self.values[i])
    }

    /// First-order moments `(y_{e_1}, ..., y_{e_n})`.
    pub fn first_order(&self) -> Vec<f64> {
        (1..=self.nvars()).map(|i| self.values[i]).collect()
    }

    /// Linear combination `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &MomentVector, b: f64) -> MomentVector {
        assert_eq!(self.values.len(), other.values.len());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| a * u + b * v)
            .collect();
        MomentVector {
            basis: self.basis.clone(),
            values,
        }
    }
}

/// Moments of the Dirac measure at `x`: `y_alpha = x^alpha`.
pub fn dirac_moments(x: &[f64], order: usize) -> MomentVector {
    let basis = MonomialBasis::new(x.len(), order);
    let values = basis.monomials().iter().map(|m| m.eval(x)).collect();
    MomentVector { basis, values }
}

fn check_poly(y: &MomentVector, p: &Polynomial) -> Result<(), PolyError> {
    if p.nvars() != y.nvars() {
        return Err(PolyError::DimensionMismatch {
            expected: y.nvars(),
            got: p.nvars(),
        });
    }
    Ok(())
}

/// Riesz functional `L_y(p) = sum_alpha p_alpha y_alpha`.
pub fn riesz(y: &MomentVector, p: &Polynomial) -> Result<f64, PolyError> {
    check_poly(y, p)?;
    if p.degree() > y.order() {
        return Err(PolyError::OrderOverflow {
            needed: p.degree(),
            available: y.order(),
        });
    }
    let mut acc = 0.0;
    for (a, c) in p.terms() {
        let i = y.basis.index_of(a).expect("degree checked above");
        acc += c * y.values[i];
    }
    Ok(acc)
}

/// One entry of a matrix that is linear in the moments:
/// `M[row, col] += coef * y[var]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearEntry {
    pub row: usize,
    pub col: usize,
    pub var: usize,
    pub coef: f64,
}

/// Symbolic localizing matrix `M_t(q y)` as a list of linear entries over the
/// moment indices of `full` (which must contain degree `2t + deg q`).
/// Only the upper triangle (`row <= col`) is emitted.
pub fn localizing_entries(
    q: &Polynomial,
    t: usize,
    full: &MonomialBasis,
) -> Result<Vec<LinearEntry>, PolyError> {
    if q.nvars() != full.nvars() {
        return Err(PolyError::DimensionMismatch {
            expected: full.nvars(),
            got: q.nvars(),
        });
    }
    let needed = 2 * t + q.degree();
    if needed > full.max_degree() {
        return Err(PolyError::OrderOverflow {
            needed,
            available: full.max_degree(),
        });
    }
    let rows = &full.monomials()[..full.prefix_len(t)];
    let mut out = Vec::new();
    for (a, ma) in rows.iter().enumerate() {
        for (b, mb) in rows.iter().enumerate().skip(a) {
            let ab = ma.add(mb);
            for (g, c) in q.terms() {
                let var = full.index_of(&ab.add(g)).expect("degree checked above");
                out.push(LinearEntry {
                    row: a,
                    col: b,
                    var,
                    coef: c,
                });
            }
        }
    }
    Ok(out)
}

/// Moment matrix `M_t(y)` with entries `y_{alpha+beta}`.
pub fn moment_matrix(y: &MomentVector, t: usize) -> Result<DMatrix<f64>, PolyError> {
    if 2 * t > y.order() {
        return Err(PolyError::OrderOverflow {
            needed: 2 * t,
            available: y.order(),
        });
    }
    let rows = &y.basis.monomials()[..y.basis.prefix_len(t)];
    let s = rows.len();
    let mut m = DMatrix::zeros(s, s);
    for a in 0..s {
        for b in a..s {
            let i = y
                .basis
                .index_of(&rows[a].add(&rows[b]))
                .expect("order checked above");
            m[(a, b)] = y.values[i];
            m[(b, a)] = y.values[i];
        }
    }
    Ok(m)
}

/// Localizing matrix `M_t(q y)` with entries `sum_gamma q_gamma y_{alpha+beta+gamma}`.
pub fn localizing_matrix(
    y: &MomentVector,
    q: &Polynomial,
    t: usize,
) -> Result<DMatrix<f64>, PolyError> {
    check_poly(y, q)?;
    let entries = localizing_entries(q, t, &y.basis)?;
    let s = y.basis.prefix_len(t);
    let mut m = DMatrix::zeros(s, s);
    for e in entries {
        m[(e.row, e.col)] += e.coef * y.values[e.var];
    }
    for a in 0..s {
        for b in a + 1..s {
            m[(b, a)] = m[(a, b)];
        }
    }
    Ok(m)
}
