//! Block semidefinite programs with free variables and equality rows, and a
//! dense interior-point solver for them.
//!
//! Variables are laid out as `num_free` free scalars followed, for each PSD
//! block of order `d`, by its `d (d + 1) / 2` upper-triangle entries in
//! row-major order. A row `sum coef * v = rhs` counts every scalar once, so
//! an off-diagonal entry `X_ij` contributes `coef * X_ij` (not twice).

mod ipm;
mod presolve;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use nalgebra::DMatrix;
use thiserror::Error;

pub use ipm::solve;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    /// `(variable index, coefficient)`, sorted by index.
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    pub num_free: usize,
    pub rows: Vec<SparseRow>,
    /// Linear objective to minimize; empty for a feasibility problem.
    pub objective: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    Asymmetric(f64),
}

impl SdpProblem {
    pub fn num_vars(&self) -> usize {
        self.num_free + self.blocks.iter().map(|d| d * (d + 1) / 2).sum::<usize>()
    }

    /// Start index of each block in the variable vector.
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut acc = self.num_free;
        self.blocks
            .iter()
            .map(|d| {
                let o = acc;
                acc += d * (d + 1) / 2;
                o
            })
            .collect()
    }

    /// `sum coef * v - rhs` per row.
    pub fn row_residuals(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|&(j, c)| c * x[j]).sum::<f64>() - r.rhs)
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, c)| c * x[j]).sum()
    }

    pub fn max_abs_rhs(&self) -> f64 {
        self.rows.iter().fold(0.0, |a, r| a.max(r.rhs.abs()))
    }

    /// Sparse text form:
    ///
    /// ```text
    /// sdp
    /// blocks <count> <d1> <d2> ...
    /// free <count>
    /// objective <nnz>
    /// <index> <coef>
    /// rows <count>
    /// row <nnz> <rhs>
    /// <index> <coef>
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("sdp\n");
        let _ = write!(s, "blocks {}", self.blocks.len());
        for d in &self.blocks {
            let _ = write!(s, " {d}");
        }
        s.push('\n');
        let _ = writeln!(s, "free {}", self.num_free);
        let _ = writeln!(s, "objective {}", self.objective.len());
        for &(j, c) in &self.objective {
            let _ = writeln!(s, "{j} {c:e}");
        }
        let _ = writeln!(s, "rows {}", self.rows.len());
        for r in &self.rows {
            let _ = writeln!(s, "row {} {:e}", r.coeffs.len(), r.rhs);
            for &(j, c) in &r.coeffs {
                let _ = writeln!(s, "{j} {c:e}");
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<SdpProblem, SdpError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines.next().ok_or(SdpError::Parse {
                line: 0,
                msg: format!("unexpected end of input, expected {what}"),
            })
        };
        let (ln, head) = next("header")?;
        if head != "sdp" {
            return Err(perr(ln, "missing `sdp` header"));
        }
        let (ln, l) = next("blocks")?;
        let f = fields(l, "blocks", ln)?;
        let nb: usize = num(f.first(), ln)?;
        if f.len() != nb + 1 {
            return Err(perr(ln, "block count does not match the sizes given"));
        }
        let blocks = f[1..].iter().map(|t| num(Some(t), ln)).collect::<Result<Vec<usize>, _>>()?;
        let (ln, l) = next("free")?;
        let num_free = num(fields(l, "free", ln)?.first(), ln)?;
        let mut prob = SdpProblem {
            blocks,
            num_free,
            rows: Vec::new(),
            objective: Vec::new(),
        };
        let nv = prob.num_vars();
        let (ln, l) = next("objective")?;
        let nnz: usize = num(fields(l, "objective", ln)?.first(), ln)?;
        for _ in 0..nnz {
            let (ln, l) = next("objective entry")?;
            prob.objective.push(pair(l, ln, nv)?);
        }
        let (ln, l) = next("rows")?;
        let nrows: usize = num(fields(l, "rows", ln)?.first(), ln)?;
        for _ in 0..nrows {
            let (ln, l) = next("row")?;
            let f = fields(l, "row", ln)?;
            let nnz: usize = num(f.first(), ln)?;
            let rhs: f64 = num(f.get(1), ln)?;
            let mut coeffs = Vec::with_capacity(nnz);
            for _ in 0..nnz {
                let (ln, l) = next("row entry")?;
                coeffs.push(pair(l, ln, nv)?);
            }
            prob.rows.push(SparseRow { coeffs, rhs });
        }
        if let Some((ln, _)) = lines.next() {
            return Err(perr(ln, "trailing content"));
        }
        Ok(prob)
    }
}

fn perr(line: usize, msg: &str) -> SdpError {
    SdpError::Parse {
        line,
        msg: String::from(msg),
    }
}

fn fields<'a>(l: &'a str, key: &str, ln: usize) -> Result<Vec<&'a str>, SdpError> {
    let mut it = l.split_whitespace();
    if it.next() != Some(key) {
        return Err(perr(ln, &format!("expected `{key}`")));
    }
    Ok(it.collect())
}

fn num<T: core::str::FromStr>(t: Option<&&str>, ln: usize) -> Result<T, SdpError> {
    t.and_then(|s| s.parse().ok()).ok_or_else(|| perr(ln, "bad number"))
}

fn pair(l: &str, ln: usize, nv: usize) -> Result<(usize, f64), SdpError> {
    let f: Vec<&str> = l.split_whitespace().collect();
    if f.len() != 2 {
        return Err(perr(ln, "expected `<index> <value>`"));
    }
    let j: usize = num(f.first(), ln)?;
    if j >= nv {
        return Err(perr(ln, "variable index out of range"));
    }
    Ok((j, num(f.get(1), ln)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Objective minimized within tolerance.
    Optimal,
    /// A point satisfying every constraint (no objective given).
    Feasible,
    /// Certified by a dual improving ray.
    Infeasible,
    /// Certified by a primal improving ray.
    Unbounded,
    NumericalFailure,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Feasible => "feasible",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::NumericalFailure => "numerical-failure",
        }
    }

    pub fn is_solved(self) -> bool {
        matches!(self, Status::Optimal | Status::Feasible)
    }

    pub fn parse(text: &str) -> Option<Status> {
        [
            Status::Optimal,
            Status::Feasible,
            Status::Infeasible,
            Status::Unbounded,
            Status::NumericalFailure,
        ]
        .into_iter()
        .find(|s| s.as_str() == text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Absolute tolerance on equality rows, scaled by `1 + max |rhs|`.
    pub feas_tol: f64,
    /// Relative duality-gap tolerance.
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-8,
            gap_tol: 1e-7,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: Status,
    /// Full variable vector in the problem's layout.
    pub x: Vec<f64>,
    pub free: Vec<f64>,
    pub blocks: Vec<DMatrix<f64>>,
    /// Row multipliers.
    pub y: Vec<f64>,
    /// Max row residual divided by `1 + max |rhs|`.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub objective: f64,
    pub iterations: usize,
    /// For infeasible problems: `y` with `sum_i y_i a_i` negative
    /// semidefinite on every block, zero on free columns, and `b^T y > 0`.
    pub certificate: Option<Vec<f64>>,
}

impl SdpSolution {
    pub fn failed(prob: &SdpProblem, status: Status, iterations: usize) -> Self {
        SdpSolution {
            status,
            x: vec![0.0; prob.num_vars()],
            free: vec![0.0; prob.num_free],
            blocks: prob.blocks.iter().map(|&d| DMatrix::zeros(d, d)).collect(),
            y: vec![0.0; prob.rows.len()],
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            gap: f64::INFINITY,
            objective: f64::NAN,
            iterations,
            certificate: None,
        }
    }
}

impl SdpSolution {
    /// Text form read back by [`SdpSolution::from_text`]:
    ///
    /// ```text
    /// solution
    /// status <optimal|feasible|infeasible|unbounded|numerical-failure>
    /// iterations <k>
    /// residuals <primal> <dual> <gap>
    /// objective <value>
    /// x <count>
    /// <value>
    /// y <count>
    /// <value>
    /// certificate <count>
    /// <value>
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("solution\n");
        let _ = writeln!(s, "status {}", self.status.as_str());
        let _ = writeln!(s, "iterations {}", self.iterations);
        let _ = writeln!(s, "residuals {:e} {:e} {:e}", self.primal_residual, self.dual_residual, self.gap);
        let _ = writeln!(s, "objective {:e}", self.objective);
        let empty = Vec::new();
        for (key, v) in [("x", &self.x), ("y", &self.y), ("certificate", self.certificate.as_ref().unwrap_or(&empty))] {
            let _ = writeln!(s, "{key} {}", v.len());
            for a in v {
                let _ = writeln!(s, "{a:e}");
            }
        }
        s
    }

    pub fn from_text(prob: &SdpProblem, text: &str) -> Result<SdpSolution, SdpError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines.next().ok_or(SdpError::Parse {
                line: 0,
                msg: format!("unexpected end of input, expected {what}"),
            })
        };
        let (ln, head) = next("header")?;
        if head != "solution" {
            return Err(perr(ln, "missing `solution` header"));
        }
        let (ln, l) = next("status")?;
        let f = fields(l, "status", ln)?;
        let status = f.first().and_then(|t| Status::parse(t)).ok_or_else(|| perr(ln, "unknown status"))?;
        let (ln, l) = next("iterations")?;
        let iterations = num(fields(l, "iterations", ln)?.first(), ln)?;
        let (ln, l) = next("residuals")?;
        let f = fields(l, "residuals", ln)?;
        let (primal_residual, dual_residual, gap) = (num(f.first(), ln)?, num(f.get(1), ln)?, num(f.get(2), ln)?);
        let (ln, l) = next("objective")?;
        let objective = num(fields(l, "objective", ln)?.first(), ln)?;
        let mut vectors: Vec<Vec<f64>> = Vec::new();
        for key in ["x", "y", "certificate"] {
            let (ln, l) = next(key)?;
            let count: usize = num(fields(l, key, ln)?.first(), ln)?;
            let mut v = Vec::with_capacity(count);
            for _ in 0..count {
                let (ln, l) = next("value")?;
                v.push(num(Some(&l), ln)?);
            }
            vectors.push(v);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(perr(ln, "trailing content"));
        }
        let certificate = vectors.pop().filter(|c| !c.is_empty());
        let y = vectors.pop().unwrap_or_default();
        let x = vectors.pop().unwrap_or_default();
        if status.is_solved() && x.len() != prob.num_vars() {
            return Err(perr(0, "solution length does not match the problem"));
        }
        if !y.is_empty() && y.len() != prob.rows.len() {
            return Err(perr(0, "multiplier length does not match the problem"));
        }
        let x = if x.is_empty() { vec![0.0; prob.num_vars()] } else { x };
        Ok(SdpSolution {
            status,
            free: x[..prob.num_free].to_vec(),
            blocks: blocks_from_x(prob, &x),
            x,
            y,
            primal_residual,
            dual_residual,
            gap,
            objective,
            iterations,
            certificate,
        })
    }
}

/// A solver that can be swapped in for the built-in one.
pub trait Backend {
    fn name(&self) -> &str;
    fn solve(&self, prob: &SdpProblem, opts: &SolverOptions) -> SdpSolution;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinSolver;

impl Backend for BuiltinSolver {
    fn name(&self) -> &str {
        "builtin"
    }

    fn solve(&self, prob: &SdpProblem, opts: &SolverOptions) -> SdpSolution {
        solve(prob, opts)
    }
}

/// Tolerated asymmetry for [`min_eigenvalue`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64, SdpError> {
    let asym = asymmetry(m);
    let scale = m.amax().max(1.0);
    if asym > SYMMETRY_TOL * scale {
        return Err(SdpError::Asymmetric(asym));
    }
    Ok(sym_min_eig(m))
}

pub(crate) fn asymmetry(m: &DMatrix<f64>) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let mut a: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..i {
            a = a.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    a
}

/// Minimum eigenvalue of the symmetric part, without checks.
pub(crate) fn sym_min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Rebuilds block matrices from scalar values in the problem layout.
pub fn blocks_from_x(prob: &SdpProblem, x: &[f64]) -> Vec<DMatrix<f64>> {
    prob.blocks
        .iter()
        .zip(prob.block_offsets())
        .map(|(&d, off)| {
            let mut m = DMatrix::zeros(d, d);
            let mut k = off;
            for i in 0..d {
                for j in i..d {
                    m[(i, j)] = x[k];
                    m[(j, i)] = x[k];
                    k += 1;
                }
            }
            m
        })
        .collect()
}
