//! Machine-readable solution file, read back by `verify`, `simulate` and
//! `export-plot`. Coefficients are stored as `(exponents, value)` pairs so
//! the round trip is exact.

use std::path::Path;

use cbc_core::data::TrajectoryData;
use cbc_core::poly::{Monomial, PolyMatrix, Polynomial};
use cbc_core::sdp::Status;
use cbc_core::synthesis::{extract_controller, quadratic_form, CbcSolution, MultiplierDegrees, SolveStats};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT: &str = "cbc-solution/1";

type Terms = Vec<(Vec<u32>, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub format: String,
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    pub p: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub delta: f64,
    pub deg_h: u32,
    pub multipliers: Degrees,
    pub epsilon: f64,
    pub barrier: String,
    pub controller: Vec<String>,
    pub h: Vec<Vec<Terms>>,
    pub lambda: Vec<Terms>,
    pub lambda0: Vec<Vec<Terms>>,
    pub lambda_u: Vec<Vec<Terms>>,
    pub solves: Vec<SolveRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Degrees {
    pub state: u32,
    pub initial: u32,
    pub unsafe_set: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRecord {
    pub stage: String,
    pub status: String,
    pub iterations: usize,
    pub primal_residual: f64,
    pub gap: f64,
    pub rows: usize,
    pub blocks: Vec<usize>,
    pub free: usize,
}

impl SolveRecord {
    pub fn new(stage: &str, s: &SolveStats) -> Self {
        SolveRecord {
            stage: stage.to_owned(),
            status: s.status.as_str().to_owned(),
            iterations: s.iterations,
            primal_residual: s.primal_residual,
            gap: s.gap,
            rows: s.rows,
            blocks: s.blocks.clone(),
            free: s.free,
        }
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn terms(p: &Polynomial) -> Terms {
    p.terms().map(|(m, c)| (m.exponents().to_vec(), c)).collect()
}

fn poly(n: usize, t: &Terms) -> Result<Polynomial, String> {
    if let Some((e, _)) = t.iter().find(|(e, _)| e.len() != n) {
        return Err(format!("monomial {e:?} does not have {n} exponents"));
    }
    Polynomial::from_terms(n, t.iter().map(|(e, c)| (Monomial::new(e.clone()), *c))).map_err(|e| e.to_string())
}

impl SolutionFile {
    pub fn from_solution(sol: &CbcSolution, traj: &TrajectoryData) -> Self {
        let h = &sol.h;
        SolutionFile {
            format: FORMAT.to_owned(),
            n: traj.n(),
            m: traj.m(),
            samples: traj.samples(),
            p: matrix_rows(&sol.p),
            z: matrix_rows(&sol.z),
            alpha1: sol.alpha1,
            alpha2: sol.alpha2,
            delta: sol.delta,
            deg_h: sol.deg_h,
            multipliers: Degrees {
                state: sol.multipliers.state,
                initial: sol.multipliers.initial,
                unsafe_set: sol.multipliers.unsafe_set,
            },
            epsilon: sol.epsilon,
            barrier: sol.barrier.to_string(),
            controller: sol.controller.iter().map(ToString::to_string).collect(),
            h: (0..h.rows()).map(|i| (0..h.cols()).map(|j| terms(h.get(i, j))).collect()).collect(),
            lambda: sol.lambda.iter().map(terms).collect(),
            lambda0: sol.lambda0.iter().map(|v| v.iter().map(terms).collect()).collect(),
            lambda_u: sol.lambda_u.iter().map(|v| v.iter().map(terms).collect()).collect(),
            solves: sol.stats.iter().map(|(s, st)| SolveRecord::new(s, st)).collect(),
        }
    }

    /// Rebuilds the solution; the controller is recomputed from `H` and `P`.
    pub fn to_solution(&self, traj: &TrajectoryData) -> Result<CbcSolution, String> {
        let n = self.n;
        if self.format != FORMAT {
            return Err(format!("unsupported format `{}`", self.format));
        }
        if (n, self.m, self.samples) != (traj.n(), traj.m(), traj.samples()) {
            return Err(format!(
                "solution is for n={}, m={}, T={} but the data have n={}, m={}, T={}",
                n,
                self.m,
                self.samples,
                traj.n(),
                traj.m(),
                traj.samples()
            ));
        }
        let square = |rows: &Vec<Vec<f64>>, what: &str| {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(format!("{what} must be {n}x{n}"));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
        };
        let p = square(&self.p, "p")?;
        let z = square(&self.z, "z")?;
        if self.h.len() != self.samples || self.h.iter().any(|r| r.len() != n) {
            return Err(format!("h must be {}x{n}", self.samples));
        }
        let mut entries = Vec::with_capacity(self.samples * n);
        for row in &self.h {
            for t in row {
                entries.push(poly(n, t)?);
            }
        }
        let mut it = entries.into_iter();
        let h = PolyMatrix::from_fn(self.samples, n, n, |_, _| it.next().expect("counted"));
        let lambda = self.lambda.iter().map(|t| poly(n, t)).collect::<Result<Vec<_>, _>>()?;
        let nested = |v: &Vec<Vec<Terms>>| {
            v.iter()
                .map(|r| r.iter().map(|t| poly(n, t)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()
        };
        let stats = self
            .solves
            .iter()
            .map(|r| {
                let status = Status::parse(&r.status).ok_or_else(|| format!("unknown status `{}`", r.status))?;
                Ok((
                    r.stage.clone(),
                    SolveStats {
                        status,
                        iterations: r.iterations,
                        primal_residual: r.primal_residual,
                        gap: r.gap,
                        rows: r.rows,
                        blocks: r.blocks.clone(),
                        free: r.free,
                    },
                ))
            })
            .collect::<Result<Vec<_>, String>>()?;
        let (controller, gain) = extract_controller(&traj.u_minus, &h, &p);
        Ok(CbcSolution {
            barrier: quadratic_form(&p),
            p,
            z,
            h,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            delta: self.delta,
            controller,
            gain,
            lambda,
            lambda0: nested(&self.lambda0)?,
            lambda_u: nested(&self.lambda_u)?,
            deg_h: self.deg_h,
            multipliers: MultiplierDegrees {
                state: self.multipliers.state,
                initial: self.multipliers.initial,
                unsafe_set: self.multipliers.unsafe_set,
            },
            epsilon: self.epsilon,
            stats,
        })
    }
}

pub fn write(path: &Path, sol: &CbcSolution, traj: &TrajectoryData) -> Result<(), CliError> {
    let file = SolutionFile::from_solution(sol, traj);
    let text = serde_json::to_string_pretty(&file).expect("plain data serializes") + "\n";
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path, traj: &TrajectoryData) -> Result<CbcSolution, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: SolutionFile =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    file.to_solution(traj).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
