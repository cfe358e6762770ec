//! Symbolic SOS programs and their compilation to block SDPs.
//!
//! Decision objects are linear combinations of decision scalars. A scalar is
//! either free or one upper-triangular entry of a PSD block. Constraints are
//! polynomial identities matched coefficient by coefficient; each SOS
//! constraint gets its own Gram block.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::poly::{gram_basis, monomials_up_to, Monomial, PolyMatrix, Polynomial};
use crate::sdp::{SdpProblem, SdpSolution, SparseRow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SosError {
    #[error("shape mismatch in constraint {constraint}: {detail}")]
    Shape { constraint: usize, detail: &'static str },
    #[error("variable count mismatch: expected {expected}, got {got}")]
    VarCount { expected: usize, got: usize },
    #[error("constraint {constraint}: matrix is not symmetric")]
    NotSymmetric { constraint: usize },
    #[error("constraint {constraint}: odd-degree leading terms cannot be represented by a Gram matrix")]
    Degree { constraint: usize },
}

/// `constant + sum coeffs[id] * v_id` over decision scalars.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Affine {
    pub constant: f64,
    pub coeffs: BTreeMap<usize, f64>,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine {
            constant: c,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn var(id: usize) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(id, 1.0);
        Affine { constant: 0.0, coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.coeffs.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Affine, s: f64) {
        if s == 0.0 {
            return;
        }
        self.constant += s * other.constant;
        for (&id, &c) in &other.coeffs {
            let e = self.coeffs.entry(id).or_insert(0.0);
            *e += s * c;
            if *e == 0.0 {
                self.coeffs.remove(&id);
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Affine {
        let mut out = Affine::default();
        out.add_scaled(self, s);
        out
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|(&id, &c)| c * values[id]).sum::<f64>()
    }
}

/// Polynomial whose coefficients are affine in the decision scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyExpr {
    nvars: usize,
    terms: BTreeMap<Monomial, Affine>,
}

impl PolyExpr {
    pub fn zero(nvars: usize) -> Self {
        PolyExpr {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_poly(p: &Polynomial) -> Self {
        let mut e = PolyExpr::zero(p.nvars());
        for (m, c) in p.terms() {
            e.add_term(m.clone(), &Affine::constant(c), 1.0);
        }
        e
    }

    pub fn from_affine(nvars: usize, a: Affine) -> Self {
        let mut e = PolyExpr::zero(nvars);
        e.add_term(Monomial::one(nvars), &a, 1.0);
        e
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Affine)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> Option<&Affine> {
        self.terms.get(m)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).max()
    }

    fn add_term(&mut self, m: Monomial, a: &Affine, s: f64) {
        let e = self.terms.entry(m.clone()).or_default();
        e.add_scaled(a, s);
        if e.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn add(&self, other: &PolyExpr) -> PolyExpr {
        self.add_scaled(other, 1.0)
    }

    pub fn sub(&self, other: &PolyExpr) -> PolyExpr {
        self.add_scaled(other, -1.0)
    }

    pub fn add_scaled(&self, other: &PolyExpr, s: f64) -> PolyExpr {
        assert_eq!(self.nvars, other.nvars, "expression variable count mismatch");
        let mut out = self.clone();
        for (m, a) in &other.terms {
            out.add_term(m.clone(), a, s);
        }
        out
    }

    pub fn scale(&self, s: f64) -> PolyExpr {
        PolyExpr::zero(self.nvars).add_scaled(self, s)
    }

    pub fn mul_poly(&self, p: &Polynomial) -> PolyExpr {
        assert_eq!(self.nvars, p.nvars(), "expression variable count mismatch");
        let mut out = PolyExpr::zero(self.nvars);
        for (m, a) in &self.terms {
            for (pm, pc) in p.terms() {
                out.add_term(m.mul(pm), a, pc);
            }
        }
        out
    }

    /// View in `nvars + extra` variables.
    pub fn extend_vars(&self, extra: usize) -> PolyExpr {
        PolyExpr {
            nvars: self.nvars + extra,
            terms: self.terms.iter().map(|(m, a)| (m.extend(extra), a.clone())).collect(),
        }
    }

    /// Substitute decision values.
    pub fn eval(&self, values: &[f64]) -> Polynomial {
        Polynomial::from_terms(self.nvars, self.terms.iter().map(|(m, a)| (m.clone(), a.eval(values))))
            .expect("consistent variable count")
    }
}

/// Dense matrix of [`PolyExpr`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExprMatrix {
    rows: usize,
    cols: usize,
    nvars: usize,
    entries: Vec<PolyExpr>,
}

impl ExprMatrix {
    pub fn zeros(rows: usize, cols: usize, nvars: usize) -> Self {
        ExprMatrix {
            rows,
            cols,
            nvars,
            entries: vec![PolyExpr::zero(nvars); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, nvars: usize, mut f: impl FnMut(usize, usize) -> PolyExpr) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        ExprMatrix {
            rows,
            cols,
            nvars,
            entries,
        }
    }

    pub fn from_poly_matrix(m: &PolyMatrix) -> Self {
        Self::from_fn(m.rows(), m.cols(), m.nvars(), |i, j| PolyExpr::from_poly(m.get(i, j)))
    }

    pub fn from_constant(m: &DMatrix<f64>, nvars: usize) -> Self {
        Self::from_poly_matrix(&PolyMatrix::from_constant(m, nvars))
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

    pub fn get(&self, i: usize, j: usize) -> &PolyExpr {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, e: PolyExpr) {
        self.entries[i * self.cols + j] = e;
    }

    pub fn transpose(&self) -> ExprMatrix {
        Self::from_fn(self.cols, self.rows, self.nvars, |i, j| self.get(j, i).clone())
    }

    pub fn add(&self, other: &ExprMatrix) -> ExprMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(self.rows, self.cols, self.nvars, |i, j| self.get(i, j).add(other.get(i, j)))
    }

    pub fn sub(&self, other: &ExprMatrix) -> ExprMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(self.rows, self.cols, self.nvars, |i, j| self.get(i, j).sub(other.get(i, j)))
    }

    pub fn scale(&self, s: f64) -> ExprMatrix {
        Self::from_fn(self.rows, self.cols, self.nvars, |i, j| self.get(i, j).scale(s))
    }

    /// `c * self` for a constant matrix.
    pub fn left_mul_constant(&self, c: &DMatrix<f64>) -> ExprMatrix {
        assert_eq!(c.ncols(), self.rows);
        Self::from_fn(c.nrows(), self.cols, self.nvars, |i, j| {
            let mut acc = PolyExpr::zero(self.nvars);
            for k in 0..self.rows {
                if c[(i, k)] != 0.0 {
                    acc = acc.add_scaled(self.get(k, j), c[(i, k)]);
                }
            }
            acc
        })
    }

    /// `p * self` for a polynomial matrix.
    pub fn left_mul_poly(&self, p: &PolyMatrix) -> ExprMatrix {
        assert_eq!(p.cols(), self.rows);
        Self::from_fn(p.rows(), self.cols, self.nvars, |i, j| {
            let mut acc = PolyExpr::zero(self.nvars);
            for k in 0..self.rows {
                let pk = p.get(i, k);
                if !pk.is_zero() {
                    acc = acc.add(&self.get(k, j).mul_poly(pk));
                }
            }
            acc
        })
    }

    /// `[[a, b], [c, d]]`.
    pub fn block2(a: &ExprMatrix, b: &ExprMatrix, c: &ExprMatrix, d: &ExprMatrix) -> ExprMatrix {
        assert_eq!(a.rows, b.rows);
        assert_eq!(c.rows, d.rows);
        assert_eq!(a.cols, c.cols);
        assert_eq!(b.cols, d.cols);
        let (r, k) = (a.rows, a.cols);
        Self::from_fn(a.rows + c.rows, a.cols + b.cols, a.nvars, |i, j| {
            match (i < r, j < k) {
                (true, true) => a.get(i, j).clone(),
                (true, false) => b.get(i, j - k).clone(),
                (false, true) => c.get(i - r, j).clone(),
                (false, false) => d.get(i - r, j - k).clone(),
            }
        })
    }

    /// `p * I_d`.
    pub fn scaled_identity(p: &PolyExpr, d: usize) -> ExprMatrix {
        Self::from_fn(d, d, p.nvars(), |i, j| if i == j { p.clone() } else { PolyExpr::zero(p.nvars()) })
    }

    pub fn eval(&self, values: &[f64]) -> PolyMatrix {
        PolyMatrix::from_fn(self.rows, self.cols, self.nvars, |i, j| self.get(i, j).eval(values))
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Handle to a decision object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub enum VarKind {
    Scalar,
    /// PSD matrix of the given order.
    SymMatrix(usize),
    /// `rows x cols` polynomials over the coefficient basis.
    Polynomial { basis: Vec<Monomial>, rows: usize, cols: usize },
    /// `z^T G z` with `G` PSD.
    SosPolynomial { gram_basis: Vec<Monomial> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVar {
    pub id: VarId,
    pub kind: VarKind,
    /// Decision scalars owned by this object, in creation order.
    pub scalars: Vec<usize>,
    /// Gram/PSD block index, when the object owns one.
    pub block: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    Free,
    Psd { block: usize, i: usize, j: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    Equality,
    Sos,
    MatrixSos,
}

/// Recorded SOS constraint: `expr == z^T G z` with `G` the block's matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SosRecord {
    pub constraint: usize,
    pub block: usize,
    pub basis: Vec<Monomial>,
    pub expr: PolyExpr,
}

#[derive(Debug, Clone, PartialEq)]
struct Constraint {
    kind: ConstraintKind,
    /// Entries must vanish identically.
    residual: ExprMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosProgram {
    nvars: usize,
    vars: Vec<DecisionVar>,
    scalars: Vec<Scalar>,
    blocks: Vec<usize>,
    constraints: Vec<Constraint>,
    sos: Vec<SosRecord>,
    objective: Option<Affine>,
}

/// Empty program over `nvars` indeterminates.
pub fn new_program(nvars: usize) -> SosProgram {
    SosProgram::new(nvars)
}

impl SosProgram {
    pub fn new(nvars: usize) -> Self {
        SosProgram {
            nvars,
            vars: Vec::new(),
            scalars: Vec::new(),
            blocks: Vec::new(),
            constraints: Vec::new(),
            sos: Vec::new(),
            objective: None,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn vars(&self) -> &[DecisionVar] {
        &self.vars
    }

    pub fn num_scalars(&self) -> usize {
        self.scalars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn sos_records(&self) -> &[SosRecord] {
        &self.sos
    }

    fn push_var(&mut self, kind: VarKind, scalars: Vec<usize>, block: Option<usize>) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(DecisionVar { id, kind, scalars, block });
        id
    }

    fn new_free(&mut self) -> usize {
        self.scalars.push(Scalar::Free);
        self.scalars.len() - 1
    }

    /// New PSD block; returns the scalar id of each upper entry, row-major.
    fn new_block(&mut self, d: usize) -> (usize, Vec<Vec<usize>>) {
        let block = self.blocks.len();
        self.blocks.push(d);
        let mut ids = vec![vec![0; d]; d];
        for i in 0..d {
            for j in i..d {
                self.scalars.push(Scalar::Psd { block, i, j });
                ids[i][j] = self.scalars.len() - 1;
                ids[j][i] = ids[i][j];
            }
        }
        (block, ids)
    }

    pub fn add_scalar(&mut self) -> (VarId, Affine) {
        let s = self.new_free();
        (self.push_var(VarKind::Scalar, vec![s], None), Affine::var(s))
    }

    /// Symmetric `d x d` matrix constrained PSD.
    pub fn add_psd_matrix(&mut self, d: usize) -> (VarId, ExprMatrix) {
        let (block, ids) = self.new_block(d);
        let nv = self.nvars;
        let m = ExprMatrix::from_fn(d, d, nv, |i, j| PolyExpr::from_affine(nv, Affine::var(ids[i][j])));
        let scalars = upper(&ids);
        (self.push_var(VarKind::SymMatrix(d), scalars, Some(block)), m)
    }

    /// `rows x cols` matrix of free polynomials of total degree `<= degree`.
    pub fn add_poly_var(&mut self, degree: u32, rows: usize, cols: usize) -> (VarId, ExprMatrix) {
        let basis = monomials_up_to(self.nvars, 0, degree);
        self.add_poly_var_with_basis(basis, rows, cols)
    }

    pub fn add_poly_var_with_basis(&mut self, basis: Vec<Monomial>, rows: usize, cols: usize) -> (VarId, ExprMatrix) {
        let nv = self.nvars;
        let mut scalars = Vec::with_capacity(rows * cols * basis.len());
        let mut entries = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let mut e = PolyExpr::zero(nv);
            for m in &basis {
                let s = self.new_free();
                scalars.push(s);
                e.add_term(m.clone(), &Affine::var(s), 1.0);
            }
            entries.push(e);
        }
        let m = ExprMatrix {
            rows,
            cols,
            nvars: nv,
            entries,
        };
        (self.push_var(VarKind::Polynomial { basis, rows, cols }, scalars, None), m)
    }

    /// SOS polynomial of degree `<= 2 * half_degree`.
    pub fn add_sos_poly(&mut self, half_degree: u32) -> (VarId, PolyExpr) {
        let basis = gram_basis(self.nvars, half_degree, None);
        let (block, ids) = self.new_block(basis.len());
        let expr = gram_expr(self.nvars, &basis, &ids);
        let scalars = upper(&ids);
        let id = self.push_var(VarKind::SosPolynomial { gram_basis: basis }, scalars, Some(block));
        (id, expr)
    }

    pub fn set_objective(&mut self, minimize: Affine) {
        self.objective = Some(minimize);
    }

    /// Coefficientwise `lhs == rhs`. Returns the constraint index.
    pub fn add_equality(&mut self, lhs: &ExprMatrix, rhs: &ExprMatrix) -> Result<usize, SosError> {
        let id = self.constraints.len();
        if lhs.rows != rhs.rows || lhs.cols != rhs.cols {
            return Err(SosError::Shape {
                constraint: id,
                detail: "equality sides differ in shape",
            });
        }
        self.check_nvars(lhs.nvars)?;
        self.check_nvars(rhs.nvars)?;
        self.constraints.push(Constraint {
            kind: ConstraintKind::Equality,
            residual: lhs.sub(rhs),
        });
        Ok(id)
    }

    fn check_nvars(&self, got: usize) -> Result<(), SosError> {
        if got != self.nvars {
            return Err(SosError::VarCount {
                expected: self.nvars,
                got,
            });
        }
        Ok(())
    }

    /// `expr` must be SOS. The Gram basis covers half the expression degree,
    /// rounded down; any odd top-degree terms must then cancel.
    pub fn add_sos(&mut self, expr: &PolyExpr) -> Result<usize, SosError> {
        self.check_nvars(expr.nvars)?;
        let half = expr.degree().unwrap_or(0) / 2;
        let basis = gram_basis(self.nvars, half, None);
        Ok(self.push_sos(expr.clone(), basis, ConstraintKind::Sos))
    }

    /// `S(x)` must be matrix-SOS: `y^T S(x) y` is SOS in `(x, y)` over a Gram
    /// basis linear in `y`.
    pub fn add_matrix_sos(&mut self, s: &ExprMatrix) -> Result<usize, SosError> {
        let id = self.constraints.len();
        self.check_nvars(s.nvars)?;
        if s.rows != s.cols {
            return Err(SosError::Shape {
                constraint: id,
                detail: "matrix SOS needs a square matrix",
            });
        }
        if !s.is_symmetric() {
            return Err(SosError::NotSymmetric { constraint: id });
        }
        let (n, d) = (self.nvars, s.rows);
        let mut lifted = PolyExpr::zero(n + d);
        for i in 0..d {
            for j in i..d {
                let e = s.get(i, j);
                if e.is_zero() {
                    continue;
                }
                let w = if i == j { 1.0 } else { 2.0 };
                let yy = Polynomial::term(Monomial::var(n + d, n + i).mul(&Monomial::var(n + d, n + j)), w);
                lifted = lifted.add(&e.extend_vars(d).mul_poly(&yy));
            }
        }
        let xdeg = s.entries.iter().filter_map(PolyExpr::degree).max().unwrap_or(0);
        let y: Vec<usize> = (n..n + d).collect();
        let basis = gram_basis(n + d, xdeg / 2 + 1, Some(&y));
        Ok(self.push_sos(lifted, basis, ConstraintKind::MatrixSos))
    }

    fn push_sos(&mut self, expr: PolyExpr, basis: Vec<Monomial>, kind: ConstraintKind) -> usize {
        let id = self.constraints.len();
        let (block, ids) = self.new_block(basis.len());
        let nv = expr.nvars;
        let gram = gram_expr(nv, &basis, &ids);
        self.push_var(VarKind::SosPolynomial { gram_basis: basis.clone() }, upper(&ids), Some(block));
        self.constraints.push(Constraint {
            kind,
            residual: ExprMatrix {
                rows: 1,
                cols: 1,
                nvars: nv,
                entries: vec![expr.sub(&gram)],
            },
        });
        self.sos.push(SosRecord {
            constraint: id,
            block,
            basis,
            expr,
        });
        id
    }

    /// Position of each decision scalar in the SDP vector: free scalars
    /// first, then each block's upper triangle row-major.
    pub fn sdp_index(&self) -> Vec<usize> {
        let nfree = self.scalars.iter().filter(|s| matches!(s, Scalar::Free)).count();
        let mut offsets = Vec::with_capacity(self.blocks.len());
        let mut acc = nfree;
        for &d in &self.blocks {
            offsets.push(acc);
            acc += d * (d + 1) / 2;
        }
        let mut next_free = 0;
        self.scalars
            .iter()
            .map(|s| match *s {
                Scalar::Free => {
                    next_free += 1;
                    next_free - 1
                }
                Scalar::Psd { block, i, j } => {
                    let d = self.blocks[block];
                    offsets[block] + upper_pos(d, i, j)
                }
            })
            .collect()
    }

    pub fn compile(&self) -> Result<SdpProblem, SosError> {
        let index = self.sdp_index();
        let nfree = self.scalars.iter().filter(|s| matches!(s, Scalar::Free)).count();
        let mut rows = Vec::new();
        for (cid, c) in self.constraints.iter().enumerate() {
            let mut keyed: BTreeMap<(Monomial, usize), &Affine> = BTreeMap::new();
            for (k, e) in c.residual.entries.iter().enumerate() {
                for (m, a) in e.terms() {
                    keyed.insert((m.clone(), k), a);
                }
            }
            for a in keyed.values() {
                let mut coeffs: Vec<(usize, f64)> = a
                    .coeffs
                    .iter()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(&id, &v)| (index[id], v))
                    .collect();
                if coeffs.is_empty() {
                    if a.constant.abs() <= crate::poly::COEFF_TOL {
                        continue;
                    }
                    if c.kind != ConstraintKind::Equality {
                        return Err(SosError::Degree { constraint: cid });
                    }
                }
                coeffs.sort_by_key(|&(j, _)| j);
                rows.push(SparseRow {
                    coeffs,
                    rhs: -a.constant,
                });
            }
        }
        let objective = match &self.objective {
            Some(a) => {
                let mut v: Vec<(usize, f64)> = a.coeffs.iter().map(|(&id, &c)| (index[id], c)).collect();
                v.sort_by_key(|&(j, _)| j);
                v
            }
            None => Vec::new(),
        };
        Ok(SdpProblem {
            blocks: self.blocks.clone(),
            num_free: nfree,
            rows,
            objective,
        })
    }

    /// Decision-scalar values read back from a solved SDP.
    pub fn recover(&self, sol: &SdpSolution) -> Vec<f64> {
        self.sdp_index().iter().map(|&k| sol.x[k]).collect()
    }

    /// Gram matrix of an SOS record under the given decision values.
    pub fn gram_matrix(&self, record: &SosRecord, values: &[f64]) -> DMatrix<f64> {
        let d = record.basis.len();
        let var = self
            .vars
            .iter()
            .find(|v| v.block == Some(record.block))
            .expect("record block has an owner");
        let mut g = DMatrix::zeros(d, d);
        let mut k = 0;
        for i in 0..d {
            for j in i..d {
                g[(i, j)] = values[var.scalars[k]];
                g[(j, i)] = g[(i, j)];
                k += 1;
            }
        }
        g
    }
}

fn upper(ids: &[Vec<usize>]) -> Vec<usize> {
    let d = ids.len();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            out.push(ids[i][j]);
        }
    }
    out
}

/// Offset of `(i, j)`, `i <= j`, in a row-major upper triangle.
pub fn upper_pos(d: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * d - i * (i + 1) / 2 + j
}

fn gram_expr(nvars: usize, basis: &[Monomial], ids: &[Vec<usize>]) -> PolyExpr {
    let mut e = PolyExpr::zero(nvars);
    for i in 0..basis.len() {
        for j in i..basis.len() {
            let w = if i == j { 1.0 } else { 2.0 };
            e.add_term(basis[i].mul(&basis[j]), &Affine::var(ids[i][j]), w);
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upper_positions() {
        let d = 3;
        let mut k = 0;
        for i in 0..d {
            for j in i..d {
                assert_eq!(upper_pos(d, i, j), k);
                k += 1;
            }
        }
    }

    #[test]
    fn empty_program() {
        let p = new_program(2);
        assert_eq!((p.vars().len(), p.num_constraints()), (0, 0));
        let sdp = p.compile().unwrap();
        assert!(sdp.blocks.is_empty() && sdp.rows.is_empty() && sdp.num_free == 0);
    }

    #[test]
    fn single_scalar_equality() {
        let mut p = new_program(1);
        let (_, c) = p.add_scalar();
        let lhs = ExprMatrix::from_fn(1, 1, 1, |_, _| PolyExpr::from_affine(1, c.clone()));
        let rhs = ExprMatrix::from_constant(&DMatrix::from_element(1, 1, 3.0), 1);
        p.add_equality(&lhs, &rhs).unwrap();
        let sdp = p.compile().unwrap();
        assert_eq!(sdp.num_free, 1);
        assert_eq!(sdp.rows.len(), 1);
        assert_eq!(sdp.rows[0].coeffs, vec![(0, 1.0)]);
        assert_eq!(sdp.rows[0].rhs, 3.0);
    }

    #[test]
    fn disjoint_support_equality() {
        let mut p = new_program(2);
        let (_, c) = p.add_scalar();
        let (_, d) = p.add_scalar();
        let lhs = PolyExpr::from_affine(2, c).mul_poly(&Polynomial::var(2, 0));
        let rhs = PolyExpr::from_affine(2, d).mul_poly(&Polynomial::var(2, 1));
        let wrap = |e: PolyExpr| ExprMatrix::from_fn(1, 1, 2, |_, _| e.clone());
        p.add_equality(&wrap(lhs), &wrap(rhs)).unwrap();
        let sdp = p.compile().unwrap();
        assert_eq!(sdp.rows.len(), 2);
        assert!(sdp.rows.iter().all(|r| r.rhs == 0.0 && r.coeffs.len() == 1));
        let zero = ExprMatrix::zeros(1, 1, 2);
        p.add_equality(&zero, &zero).unwrap();
        assert_eq!(p.compile().unwrap().rows.len(), 2);
    }

    #[test]
    fn poly_var_counts() {
        let mut p = new_program(2);
        let (id, h) = p.add_poly_var(2, 15, 2);
        assert_eq!(p.vars()[id.0].scalars.len(), 180);
        assert_eq!((h.rows(), h.cols()), (15, 2));
        let mut q = new_program(2);
        let (id, _) = q.add_poly_var(0, 1, 1);
        assert_eq!(q.vars()[id.0].scalars.len(), 1);
    }

    #[test]
    fn odd_constant_leading_term_is_a_degree_error() {
        let mut p = new_program(1);
        let cube = Polynomial::term(Monomial::new(vec![3]), 1.0);
        p.add_sos(&PolyExpr::from_poly(&cube)).unwrap();
        assert!(matches!(p.compile(), Err(SosError::Degree { constraint: 0 })));
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let mut p = new_program(1);
        let mut s = ExprMatrix::zeros(2, 2, 1);
        s.set(0, 1, PolyExpr::from_poly(&Polynomial::var(1, 0)));
        assert!(matches!(p.add_matrix_sos(&s), Err(SosError::NotSymmetric { .. })));
    }

    #[test]
    fn matrix_sos_block_census() {
        let mut p = new_program(2);
        let s = ExprMatrix::from_constant(&DMatrix::identity(2, 2), 2);
        p.add_matrix_sos(&s).unwrap();
        // Constant matrix: basis {y1, y2}.
        assert_eq!(p.sos_records()[0].basis.len(), 2);
        let sdp = p.compile().unwrap();
        assert_eq!(sdp.blocks, vec![2]);
        // Rows for y1^2, y1*y2, y2^2.
        assert_eq!(sdp.rows.len(), 3);
    }
}
