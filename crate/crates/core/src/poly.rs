//! Sparse multivariate polynomials with `f64` coefficients, and dense
//! matrices of them.
//!
//! Terms are kept in a [`BTreeMap`] keyed by [`Monomial`] under graded
//! lexicographic order, so iteration, printing and anything derived from
//! term order (SDP row layout in particular) is reproducible.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::math::powu;

/// Terms whose magnitude falls below this after arithmetic are dropped.
pub const COEFF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("variable count mismatch: {left} vs {right}")]
    VarCount { left: usize, right: usize },
    #[error("point has {got} coordinates, expected {expected}")]
    PointLength { expected: usize, got: usize },
    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    Shape {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("cannot parse monomial `{0}`")]
    Parse(String),
}

/// Exponent vector `x1^e1 * ... * xn^en`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    /// The constant monomial in `nvars` variables.
    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    /// The degree-one monomial `x_i` (0-based).
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Monomial(e)
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// Product of two monomials over the same variables.
    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.0.len(), other.0.len());
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self / x_i`, if `x_i` divides `self`.
    pub fn div_var(&self, i: usize) -> Option<Monomial> {
        if self.0.get(i).copied().unwrap_or(0) == 0 {
            return None;
        }
        let mut e = self.0.clone();
        e[i] -= 1;
        Some(Monomial(e))
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(point)
            .fold(1.0, |acc, (&e, &x)| if e == 0 { acc } else { acc * powu(x, e) })
    }

    /// Append `extra` zero exponents (new trailing variables).
    pub fn extend(&self, extra: usize) -> Monomial {
        let mut e = self.0.clone();
        e.resize(self.0.len() + extra, 0);
        Monomial(e)
    }

    /// Parses text such as `x1^2*x3` (`1` is the constant monomial).
    pub fn parse(text: &str, nvars: usize) -> Result<Monomial, PolyError> {
        let err = || PolyError::Parse(String::from(text));
        let mut e = vec![0u32; nvars];
        let text = text.trim();
        if text == "1" {
            return Ok(Monomial(e));
        }
        for factor in text.split('*') {
            let factor = factor.trim();
            let (var, pow) = match factor.split_once('^') {
                Some((v, p)) => (v.trim(), p.trim().parse::<u32>().map_err(|_| err())?),
                None => (factor, 1),
            };
            let idx: usize = var
                .strip_prefix('x')
                .and_then(|d| d.parse().ok())
                .filter(|&i| i >= 1 && i <= nvars)
                .ok_or_else(err)?;
            e[idx - 1] += pow;
        }
        Ok(Monomial(e))
    }

    /// Keep only the first `nvars` exponents.
    pub fn truncate(&self, nvars: usize) -> Monomial {
        Monomial(self.0[..nvars].to_vec())
    }
}

impl Ord for Monomial {
    /// Graded lexicographic: total degree first, then a larger exponent on an
    /// earlier variable ranks higher (`x1 > x2`).
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
            .then_with(|| self.0.len().cmp(&other.0.len()))
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
            return f.write_str("1");
        }
        let mut first = true;
        for (i, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                f.write_str("*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, e)?;
            }
        }
        Ok(())
    }
}

/// All monomials of total degree exactly `degree` in `nvars` variables,
/// highest power of `x1` first.
pub fn monomials_of_degree(nvars: usize, degree: u32) -> Vec<Monomial> {
    fn rec(nvars: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Monomial>) {
        if prefix.len() + 1 == nvars {
            prefix.push(left);
            out.push(Monomial(prefix.clone()));
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            rec(nvars, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if nvars == 0 {
        if degree == 0 {
            out.push(Monomial(Vec::new()));
        }
        return out;
    }
    rec(nvars, degree, &mut Vec::with_capacity(nvars), &mut out);
    out
}

/// Monomials of degree `min_deg..=max_deg`, ordered by degree and then with
/// earlier variables first.
pub fn monomials_up_to(nvars: usize, min_deg: u32, max_deg: u32) -> Vec<Monomial> {
    (min_deg..=max_deg)
        .flat_map(|d| monomials_of_degree(nvars, d))
        .collect()
}

/// Basis for Gram-matrix parameterisations.
///
/// Without `linear_in`, every monomial of degree at most `max_deg`. With a
/// variable subset, only monomials that are exactly linear in that subset
/// (one of its variables, to the first power) times a monomial in the
/// remaining variables, total degree at most `max_deg`.
pub fn gram_basis(nvars: usize, max_deg: u32, linear_in: Option<&[usize]>) -> Vec<Monomial> {
    let Some(lin) = linear_in else {
        return monomials_up_to(nvars, 0, max_deg);
    };
    if max_deg == 0 || lin.is_empty() {
        return Vec::new();
    }
    let rest: Vec<usize> = (0..nvars).filter(|v| !lin.contains(v)).collect();
    let mut out = Vec::new();
    for base in monomials_up_to(rest.len(), 0, max_deg - 1) {
        for &y in lin {
            let mut e = vec![0u32; nvars];
            for (k, &v) in rest.iter().enumerate() {
                e[v] = base.0[k];
            }
            e[y] = 1;
            out.push(Monomial(e));
        }
    }
    out
}

/// Sparse polynomial in a fixed number of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::term(Monomial::one(nvars), c)
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        Self::term(Monomial::var(nvars, i), 1.0)
    }

    pub fn term(m: Monomial, c: f64) -> Self {
        let mut p = Polynomial::zero(m.nvars());
        p.add_term(m, c);
        p.normalize();
        p
    }

    /// Builds a polynomial from `(monomial, coefficient)` pairs; repeated
    /// monomials are summed.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Polynomial::zero(nvars);
        for (m, c) in terms {
            if m.nvars() != nvars {
                return Err(PolyError::VarCount {
                    left: nvars,
                    right: m.nvars(),
                });
            }
            p.add_term(m, c);
        }
        p.normalize();
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().next_back().map(Monomial::degree)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        *self.terms.entry(m).or_insert(0.0) += c;
    }

    /// Drops terms with `|c| < COEFF_TOL`.
    pub fn normalize(&mut self) {
        self.terms.retain(|_, c| c.abs() >= COEFF_TOL);
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    fn check_vars(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::VarCount {
                left: self.nvars,
                right: other.nvars,
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_vars(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        out.normalize();
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_vars(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), -c);
        }
        out.normalize();
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_vars(other)?;
        let mut out = Polynomial::zero(self.nvars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out.normalize();
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (m, &c) in &self.terms {
            out.add_term(m.clone(), c * s);
        }
        out.normalize();
        out
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::PointLength {
                expected: self.nvars,
                got: point.len(),
            });
        }
        Ok(self.terms.iter().map(|(m, &c)| c * m.eval(point)).sum())
    }

    /// Substitutes `x_i -> factors[i] * x_i`.
    pub fn scale_vars(&self, factors: &[f64]) -> Polynomial {
        debug_assert_eq!(factors.len(), self.nvars);
        let mut out = Polynomial::zero(self.nvars);
        for (m, &c) in &self.terms {
            out.add_term(m.clone(), c * m.eval(factors));
        }
        out.normalize();
        out
    }

    /// The same polynomial viewed in `nvars + extra` variables.
    pub fn extend_vars(&self, extra: usize) -> Polynomial {
        Polynomial {
            nvars: self.nvars + extra,
            terms: self
                .terms
                .iter()
                .map(|(m, &c)| (m.extend(extra), c))
                .collect(),
        }
    }
}

impl core::ops::Add for &Polynomial {
    type Output = Polynomial;
    /// Panics on a variable-count mismatch; see [`Polynomial::checked_add`].
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.checked_add(rhs).expect("polynomial add")
    }
}

impl core::ops::Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.checked_sub(rhs).expect("polynomial sub")
    }
}

impl core::ops::Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.checked_mul(rhs).expect("polynomial mul")
    }
}

impl core::ops::Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// Coefficient text used by the canonical rendering.
pub fn format_coeff(c: f64) -> String {
    let a = c.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        alloc::format!("{}", c)
    } else {
        alloc::format!("{:e}", c)
    }
}

impl fmt::Display for Polynomial {
    /// Canonical form: descending graded-lex, `*` products, `^` powers, e.g.
    /// `3*x1^2 - 0.5*x1*x2 + 1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (k, (m, &c)) in self.terms.iter().rev().enumerate() {
            let mag = format_coeff(c.abs());
            match (k, c < 0.0) {
                (0, false) => {}
                (0, true) => f.write_str("-")?,
                (_, false) => f.write_str(" + ")?,
                (_, true) => f.write_str(" - ")?,
            }
            if m.is_constant() {
                f.write_str(&mag)?;
            } else {
                write!(f, "{}*{}", mag, m)?;
            }
        }
        Ok(())
    }
}

/// Dense matrix of polynomials sharing one variable count.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    nvars: usize,
    entries: Vec<Polynomial>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize, nvars: usize) -> Self {
        PolyMatrix {
            rows,
            cols,
            nvars,
            entries: vec![Polynomial::zero(nvars); rows * cols],
        }
    }

    pub fn identity(n: usize, nvars: usize) -> Self {
        let mut m = Self::zeros(n, n, nvars);
        for i in 0..n {
            m.set(i, i, Polynomial::constant(nvars, 1.0));
        }
        m
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        nvars: usize,
        mut f: impl FnMut(usize, usize) -> Polynomial,
    ) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let p = f(i, j);
                assert_eq!(p.nvars(), nvars, "entry ({i},{j}) has wrong variable count");
                entries.push(p);
            }
        }
        PolyMatrix {
            rows,
            cols,
            nvars,
            entries,
        }
    }

    pub fn from_constant(m: &DMatrix<f64>, nvars: usize) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), nvars, |i, j| {
            Polynomial::constant(nvars, m[(i, j)])
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Polynomial) {
        assert_eq!(p.nvars(), self.nvars);
        self.entries[i * self.cols + j] = p;
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.entries
    }

    pub fn degree(&self) -> Option<u32> {
        self.entries.iter().filter_map(Polynomial::degree).max()
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn transpose(&self) -> PolyMatrix {
        Self::from_fn(self.cols, self.rows, self.nvars, |i, j| self.get(j, i).clone())
    }

    fn check_same_shape(&self, other: &PolyMatrix) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::VarCount {
                left: self.nvars,
                right: other.nvars,
            });
        }
        if self.rows != other.rows || self.cols != other.cols {
            return Err(self.shape_err(other));
        }
        Ok(())
    }

    fn shape_err(&self, other: &PolyMatrix) -> PolyError {
        PolyError::Shape {
            left_rows: self.rows,
            left_cols: self.cols,
            right_rows: other.rows,
            right_cols: other.cols,
        }
    }

    pub fn add(&self, other: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        self.check_same_shape(other)?;
        Ok(Self::from_fn(self.rows, self.cols, self.nvars, |i, j| {
            self.get(i, j) + other.get(i, j)
        }))
    }

    pub fn sub(&self, other: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        self.check_same_shape(other)?;
        Ok(Self::from_fn(self.rows, self.cols, self.nvars, |i, j| {
            self.get(i, j) - other.get(i, j)
        }))
    }

    pub fn mul(&self, other: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::VarCount {
                left: self.nvars,
                right: other.nvars,
            });
        }
        if self.cols != other.rows {
            return Err(self.shape_err(other));
        }
        Ok(Self::from_fn(self.rows, other.cols, self.nvars, |i, j| {
            let mut acc = Polynomial::zero(self.nvars);
            for k in 0..self.cols {
                let (a, b) = (self.get(i, k), other.get(k, j));
                if !a.is_zero() && !b.is_zero() {
                    acc = &acc + &(a * b);
                }
            }
            acc
        }))
    }

    /// `c * self` for a constant matrix `c`.
    pub fn left_mul_constant(&self, c: &DMatrix<f64>) -> Result<PolyMatrix, PolyError> {
        if c.ncols() != self.rows {
            return Err(PolyError::Shape {
                left_rows: c.nrows(),
                left_cols: c.ncols(),
                right_rows: self.rows,
                right_cols: self.cols,
            });
        }
        Ok(Self::from_fn(c.nrows(), self.cols, self.nvars, |i, j| {
            let mut out = Polynomial::zero(self.nvars);
            for k in 0..self.rows {
                let w = c[(i, k)];
                if w != 0.0 {
                    for (m, v) in self.get(k, j).terms() {
                        out.add_term(m.clone(), w * v);
                    }
                }
            }
            out.normalize();
            out
        }))
    }

    /// `self * c` for a constant matrix `c`.
    pub fn right_mul_constant(&self, c: &DMatrix<f64>) -> Result<PolyMatrix, PolyError> {
        Ok(self
            .transpose()
            .left_mul_constant(&c.transpose())?
            .transpose())
    }

    pub fn scale(&self, s: f64) -> PolyMatrix {
        Self::from_fn(self.rows, self.cols, self.nvars, |i, j| self.get(i, j).scale(s))
    }

    pub fn map(&self, mut f: impl FnMut(&Polynomial) -> Polynomial) -> PolyMatrix {
        let entries: Vec<Polynomial> = self.entries.iter().map(&mut f).collect();
        let nvars = entries.first().map_or(self.nvars, Polynomial::nvars);
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            nvars,
            entries,
        }
    }

    pub fn eval(&self, point: &[f64]) -> Result<DMatrix<f64>, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::PointLength {
                expected: self.nvars,
                got: point.len(),
            });
        }
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self.get(i, j).eval(point)?;
            }
        }
        Ok(out)
    }

    /// Largest coefficient magnitude over all entries.
    pub fn max_abs_coeff(&self) -> f64 {
        self.entries.iter().fold(0.0, |a, p| a.max(p.max_abs_coeff()))
    }
}
