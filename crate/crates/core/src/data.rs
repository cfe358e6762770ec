//! Trajectory data, monomial lifting and the state-dependent transform
//! `theta(x)` with `theta(x) * x = M(x)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::poly::{monomials_up_to, Monomial, PolyMatrix, Polynomial};

/// Relative cut-off on singular values for numerical rank.
pub const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("insufficient data: need at least 2 samples, got {0}")]
    InsufficientData(usize),
    #[error("invalid basis: {0}")]
    Basis(String),
    #[error("invalid transform assignment: {0}")]
    Assignment(String),
}

/// One measured trajectory, already split into shifted data matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    /// Inputs `u(0..T-1)`, `m x T`.
    pub u_minus: DMatrix<f64>,
    /// States `x(0..T-1)`, `n x T`.
    pub x_minus: DMatrix<f64>,
    /// States `x(1..T)`, `n x T`.
    pub x_plus: DMatrix<f64>,
}

impl TrajectoryData {
    /// Builds the data matrices from `T + 1` consecutive states and at
    /// least `T` inputs (any trailing input is ignored).
    pub fn from_samples(states: &[Vec<f64>], inputs: &[Vec<f64>]) -> Result<Self, DataError> {
        if states.len() < 2 {
            return Err(DataError::InsufficientData(states.len()));
        }
        let t = states.len() - 1;
        let n = states[0].len();
        if n == 0 {
            return Err(DataError::Schema("state dimension is zero".into()));
        }
        if inputs.len() < t {
            return Err(DataError::Schema(format!(
                "{} inputs for {} transitions",
                inputs.len(),
                t
            )));
        }
        let m = inputs[0].len();
        if m == 0 {
            return Err(DataError::Schema("input dimension is zero".into()));
        }
        for (k, s) in states.iter().enumerate() {
            if s.len() != n {
                return Err(DataError::Schema(format!("state row {k} has {} entries, expected {n}", s.len())));
            }
        }
        for (k, u) in inputs.iter().take(t).enumerate() {
            if u.len() != m {
                return Err(DataError::Schema(format!("input row {k} has {} entries, expected {m}", u.len())));
            }
        }
        Ok(TrajectoryData {
            u_minus: DMatrix::from_fn(m, t, |i, k| inputs[k][i]),
            x_minus: DMatrix::from_fn(n, t, |i, k| states[k][i]),
            x_plus: DMatrix::from_fn(n, t, |i, k| states[k + 1][i]),
        })
    }

    pub fn from_matrices(
        u_minus: DMatrix<f64>,
        x_minus: DMatrix<f64>,
        x_plus: DMatrix<f64>,
    ) -> Result<Self, DataError> {
        let t = x_minus.ncols();
        if t == 0 {
            return Err(DataError::InsufficientData(1));
        }
        if u_minus.ncols() != t || x_plus.ncols() != t || x_plus.nrows() != x_minus.nrows() {
            return Err(DataError::Schema("data matrices have inconsistent shapes".into()));
        }
        Ok(TrajectoryData { u_minus, x_minus, x_plus })
    }

    pub fn n(&self) -> usize {
        self.x_minus.nrows()
    }

    pub fn m(&self) -> usize {
        self.u_minus.nrows()
    }

    /// Number of recorded transitions.
    pub fn samples(&self) -> usize {
        self.x_minus.ncols()
    }

    /// `X+[:, k] == X-[:, k+1]` bit for bit.
    pub fn is_shift_consistent(&self) -> bool {
        (0..self.samples().saturating_sub(1))
            .all(|k| self.x_plus.column(k) == self.x_minus.column(k + 1))
    }
}

/// Ordered list of non-constant monomials containing every state variable.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    nvars: usize,
    entries: Vec<Monomial>,
}

impl MonomialBasis {
    pub fn new(nvars: usize, entries: Vec<Monomial>) -> Result<Self, DataError> {
        for (i, m) in entries.iter().enumerate() {
            if m.nvars() != nvars {
                return Err(DataError::Basis(format!("entry {i} ({m}) has {} variables, expected {nvars}", m.nvars())));
            }
            if m.is_constant() {
                return Err(DataError::Basis(format!("entry {i} is constant")));
            }
            if entries[..i].contains(m) {
                return Err(DataError::Basis(format!("entry {i} ({m}) is duplicated")));
            }
        }
        for v in 0..nvars {
            if !entries.contains(&Monomial::var(nvars, v)) {
                return Err(DataError::Basis(format!("missing linear monomial x{}", v + 1)));
            }
        }
        Ok(MonomialBasis { nvars, entries })
    }

    /// Every monomial of degree `1..=degree`.
    pub fn up_to_degree(nvars: usize, degree: u32) -> Self {
        MonomialBasis {
            nvars,
            entries: monomials_up_to(nvars, 1, degree.max(1)),
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Monomial] {
        &self.entries
    }

    pub fn max_degree(&self) -> u32 {
        self.entries.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.entries.len(), self.entries.iter().map(|m| m.eval(x)))
    }

    /// `M(x)` as a column of polynomials.
    pub fn as_poly_matrix(&self) -> PolyMatrix {
        PolyMatrix::from_fn(self.entries.len(), 1, self.nvars, |i, _| {
            Polynomial::term(self.entries[i].clone(), 1.0)
        })
    }
}

/// `theta(x)` with exactly one nonzero per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMap {
    pub assignment: Vec<usize>,
    pub theta: PolyMatrix,
}

impl TransformMap {
    /// Exact symbolic check of `theta(x) * x == M(x)`.
    pub fn satisfies_identity(&self, basis: &MonomialBasis) -> bool {
        let n = basis.nvars();
        let x = PolyMatrix::from_fn(n, 1, n, |i, _| Polynomial::var(n, i));
        match self.theta.mul(&x) {
            Ok(lhs) => lhs == basis.as_poly_matrix(),
            Err(_) => false,
        }
    }
}

/// Builds `theta`. Each row defaults to the lowest-index variable dividing
/// its monomial; `overrides` maps a basis monomial to a different variable.
pub fn build_transform(
    basis: &MonomialBasis,
    overrides: &BTreeMap<Monomial, usize>,
) -> Result<TransformMap, DataError> {
    let n = basis.nvars();
    for (m, &v) in overrides {
        if !basis.entries().contains(m) {
            return Err(DataError::Assignment(format!("{m} is not in the basis")));
        }
        if v >= n || m.exponents()[v] == 0 {
            return Err(DataError::Assignment(format!("x{} does not divide {m}", v + 1)));
        }
    }
    let mut assignment = Vec::with_capacity(basis.len());
    let mut theta = PolyMatrix::zeros(basis.len(), n, n);
    for (i, m) in basis.entries().iter().enumerate() {
        let v = match overrides.get(m) {
            Some(&v) => v,
            None => m
                .exponents()
                .iter()
                .position(|&e| e > 0)
                .ok_or_else(|| DataError::Assignment(format!("row {i} is constant")))?,
        };
        let q = m.div_var(v).expect("validated divisor");
        theta.set(i, v, Polynomial::term(q, 1.0));
        assignment.push(v);
    }
    Ok(TransformMap { assignment, theta })
}

/// Lifted data matrix with its singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedData {
    pub m_minus: DMatrix<f64>,
    pub rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
}

pub fn singular_values_desc(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Rank under the `sigma_1 * RANK_RTOL` cut-off.
pub fn numerical_rank(singular_values: &[f64]) -> usize {
    let Some(&s1) = singular_values.first() else {
        return 0;
    };
    if s1 <= 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > s1 * RANK_RTOL).count()
}

pub fn build_lifted_matrix(traj: &TrajectoryData, basis: &MonomialBasis) -> Result<LiftedData, DataError> {
    if basis.nvars() != traj.n() {
        return Err(DataError::Basis(format!(
            "basis has {} variables but the data has {} states",
            basis.nvars(),
            traj.n()
        )));
    }
    let t = traj.samples();
    let mut m_minus = DMatrix::zeros(basis.len(), t);
    let mut x = alloc::vec![0.0; traj.n()];
    for k in 0..t {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = traj.x_minus[(i, k)];
        }
        for (i, mono) in basis.entries().iter().enumerate() {
            m_minus[(i, k)] = mono.eval(&x);
        }
    }
    let singular_values = singular_values_desc(&m_minus);
    let rank = numerical_rank(&singular_values);
    Ok(LiftedData {
        m_minus,
        rank,
        singular_values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    /// Basis size.
    pub rows: usize,
    pub samples: usize,
    pub rank: usize,
    pub pass: bool,
}

pub fn check_persistency(lift: &LiftedData) -> RankReport {
    let rows = lift.m_minus.nrows();
    let samples = lift.m_minus.ncols();
    RankReport {
        rows,
        samples,
        rank: lift.rank,
        pass: samples >= rows && lift.rank == rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn mono(e: &[u32]) -> Monomial {
        Monomial::new(e.to_vec())
    }

    #[test]
    fn trajectory_shift() {
        let states = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let inputs = vec![vec![0.5], vec![-0.5]];
        let t = TrajectoryData::from_samples(&states, &inputs).unwrap();
        assert_eq!((t.n(), t.m(), t.samples()), (2, 1, 2));
        assert!(t.is_shift_consistent());
        assert_eq!(t.x_plus[(1, 1)], 6.0);
        assert!(matches!(
            TrajectoryData::from_samples(&states[..1], &inputs),
            Err(DataError::InsufficientData(1))
        ));
    }

    #[test]
    fn basis_validation() {
        assert!(MonomialBasis::new(2, vec![mono(&[1, 0])]).is_err());
        assert!(MonomialBasis::new(2, vec![mono(&[1, 0]), mono(&[0, 1]), mono(&[0, 0])]).is_err());
        assert!(MonomialBasis::new(2, vec![mono(&[1, 0]), mono(&[0, 1]), mono(&[1, 0])]).is_err());
        assert_eq!(MonomialBasis::up_to_degree(2, 3).len(), 9);
    }

    #[test]
    fn linear_basis_gives_identity_theta() {
        let b = MonomialBasis::up_to_degree(3, 1);
        let t = build_transform(&b, &BTreeMap::new()).unwrap();
        assert_eq!(t.theta.eval(&[7.0, -1.0, 2.0]).unwrap(), DMatrix::identity(3, 3));
        assert!(t.satisfies_identity(&b));
    }

    #[test]
    fn invalid_override() {
        let b = MonomialBasis::up_to_degree(2, 2);
        let mut o = BTreeMap::new();
        o.insert(mono(&[2, 0]), 1);
        assert!(matches!(build_transform(&b, &o), Err(DataError::Assignment(_))));
    }

    #[test]
    fn fixed_point_is_rank_deficient() {
        let states = vec![vec![1.0, 1.0]; 16];
        let inputs = vec![vec![0.0]; 15];
        let t = TrajectoryData::from_samples(&states, &inputs).unwrap();
        let lift = build_lifted_matrix(&t, &MonomialBasis::up_to_degree(2, 3)).unwrap();
        let r = check_persistency(&lift);
        assert_eq!(r.rank, 1);
        assert!(!r.pass);
    }

    #[test]
    fn zero_trajectory_rank_zero() {
        let states = vec![vec![0.0, 0.0]; 4];
        let inputs = vec![vec![1.0]; 3];
        let t = TrajectoryData::from_samples(&states, &inputs).unwrap();
        let lift = build_lifted_matrix(&t, &MonomialBasis::up_to_degree(2, 2)).unwrap();
        assert_eq!(lift.rank, 0);
        assert!(lift.m_minus.iter().all(|&v| v == 0.0));
    }
}
