//! Certificate and controller synthesis from one trajectory.
//!
//! Step 3 finds `Z = P^-1` and `H(x)` with `M- H(x) = theta(x) Z` and the
//! block matrix `[[Z, X+ H(x)], [*, Z]]` SOS-nonnegative on the state set.
//! Step 4 certifies the levels `alpha1`, `alpha2` of `B(x) = x^T P x` on the
//! initial and unsafe sets. The controller is `u(x) = U- H(x) P x`.
//!
//! Internally every SOS program runs in box-normalized coordinates
//! `x = s * xt` so that monomial magnitudes stay near one.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::data::{
    build_lifted_matrix, build_transform, check_persistency, DataError, LiftedData, MonomialBasis, RankReport,
    TrajectoryData, TransformMap,
};
use crate::poly::{Monomial, PolyMatrix, Polynomial};
use crate::sdp::{Backend, SdpSolution, SolverOptions, Status};
use crate::sos::{Affine, ExprMatrix, PolyExpr, SosError, SosProgram};

/// Axis-aligned box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        BoxSet { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// The closed boxes share at least one point.
    pub fn overlaps(&self, other: &BoxSet) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= other.hi[i] && other.lo[i] <= self.hi[i])
    }

    /// `g_i(x) = (x_i - lo_i)(hi_i - x_i)`.
    pub fn inequalities(&self) -> Vec<Polynomial> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let x = Polynomial::var(n, i);
                let l = &x - &Polynomial::constant(n, self.lo[i]);
                let r = &Polynomial::constant(n, self.hi[i]) - &x;
                &l * &r
            })
            .collect()
    }

    pub fn max_abs(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| a.abs().max(b.abs())).collect()
    }

    pub fn corners(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| (0..n).map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] }).collect())
            .collect()
    }
}

/// Finite union of boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiAlgebraicSet {
    pub boxes: Vec<BoxSet>,
}

impl SemiAlgebraicSet {
    pub fn new(boxes: Vec<BoxSet>) -> Result<Self, SynthesisError> {
        let Some(first) = boxes.first() else {
            return Err(SynthesisError::InvalidSet("no boxes".into()));
        };
        let n = first.dim();
        for (k, b) in boxes.iter().enumerate() {
            if b.lo.len() != n || b.hi.len() != n || n == 0 {
                return Err(SynthesisError::InvalidSet(format!("box {k} has the wrong dimension")));
            }
            for i in 0..n {
                if !(b.lo[i] < b.hi[i]) {
                    return Err(SynthesisError::InvalidSet(format!(
                        "box {k}: lower bound {} is not below upper bound {} in x{}",
                        b.lo[i],
                        b.hi[i],
                        i + 1
                    )));
                }
            }
        }
        Ok(SemiAlgebraicSet { boxes })
    }

    pub fn single(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, SynthesisError> {
        Self::new(vec![BoxSet::new(lo, hi)])
    }

    pub fn dim(&self) -> usize {
        self.boxes[0].dim()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.boxes.iter().any(|b| b.contains(x))
    }

    /// Per-coordinate max of `|lo|, |hi|` over all boxes.
    pub fn max_abs(&self) -> Vec<f64> {
        let mut s = vec![0.0f64; self.dim()];
        for b in &self.boxes {
            for (si, v) in s.iter_mut().zip(b.max_abs()) {
                *si = si.max(v);
            }
        }
        s
    }
}

/// One inequality vector per box.
pub fn box_to_inequalities(set: &SemiAlgebraicSet) -> Result<Vec<Vec<Polynomial>>, SynthesisError> {
    if set.boxes.is_empty() {
        return Err(SynthesisError::InvalidSet("no boxes".into()));
    }
    Ok(set.boxes.iter().map(BoxSet::inequalities).collect())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("invalid set: {0}")]
    InvalidSet(String),
    #[error("{0}")]
    Sos(#[from] SosError),
    #[error("step 3 infeasible at deg H = {deg_h}; try a larger H or multiplier degree")]
    Infeasible { deg_h: u32 },
    #[error("{stage}: solver reported {status}")]
    Solver { stage: &'static str, status: &'static str },
    #[error("Z is ill-conditioned (condition number {0:e})")]
    Conditioning(f64),
    #[error("Z is not positive definite (min eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("level gap too small: alpha2 = {alpha2:e} < alpha1 + delta = {threshold:e}")]
    LevelGap { alpha1: f64, alpha2: f64, threshold: f64 },
    #[error("{stage}: certificate program infeasible")]
    LevelInfeasible { stage: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub status: Status,
    pub iterations: usize,
    pub primal_residual: f64,
    pub gap: f64,
    pub rows: usize,
    pub blocks: Vec<usize>,
    pub free: usize,
}

impl SolveStats {
    fn new(prob: &crate::sdp::SdpProblem, sol: &SdpSolution) -> Self {
        SolveStats {
            status: sol.status,
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            gap: sol.gap,
            rows: prob.rows.len(),
            blocks: prob.blocks.clone(),
            free: prob.num_free,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramSolution {
    pub z: DMatrix<f64>,
    pub h: PolyMatrix,
    /// Multipliers for the state-set inequalities.
    pub lambda: Vec<Polynomial>,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOptions {
    pub deg_h: u32,
    /// Degree of the state-set multipliers (even).
    pub deg_mult: u32,
    pub epsilon: f64,
    pub solver: SolverOptions,
}

fn diag_scale(s: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(s))
}

fn gram_solve(
    prog: &SosProgram,
    backend: &dyn Backend,
    opts: &SolverOptions,
) -> Result<(SdpSolution, Vec<f64>, SolveStats), SynthesisError> {
    let prob = prog.compile()?;
    let sol = backend.solve(&prob, opts);
    let stats = SolveStats::new(&prob, &sol);
    let vals = if sol.status.is_solved() { prog.recover(&sol) } else { Vec::new() };
    Ok((sol, vals, stats))
}

enum ZSpec<'a> {
    Free(f64),
    Fixed(&'a DMatrix<f64>),
}

/// Step 3: `Z`, `H(x)` and multipliers. `x_set` must be a single box.
pub fn synthesize_gram(
    lift: &LiftedData,
    traj: &TrajectoryData,
    theta: &TransformMap,
    x_set: &SemiAlgebraicSet,
    opts: &StepOptions,
    backend: &dyn Backend,
) -> Result<GramSolution, SynthesisError> {
    gram_program(lift, traj, theta, x_set, ZSpec::Free(opts.epsilon), opts, backend)
}

/// Step 3 with `Z` given, solving only for `H(x)` and the multipliers.
pub fn synthesize_fixed_z(
    lift: &LiftedData,
    traj: &TrajectoryData,
    theta: &TransformMap,
    x_set: &SemiAlgebraicSet,
    z: &DMatrix<f64>,
    opts: &StepOptions,
    backend: &dyn Backend,
) -> Result<GramSolution, SynthesisError> {
    gram_program(lift, traj, theta, x_set, ZSpec::Fixed(z), opts, backend)
}

fn gram_program(
    lift: &LiftedData,
    traj: &TrajectoryData,
    theta: &TransformMap,
    x_set: &SemiAlgebraicSet,
    zspec: ZSpec<'_>,
    opts: &StepOptions,
    backend: &dyn Backend,
) -> Result<GramSolution, SynthesisError> {
    let n = traj.n();
    let t = traj.samples();
    if x_set.boxes.len() != 1 {
        return Err(SynthesisError::InvalidSet("the state set must be a single box".into()));
    }
    let bx = &x_set.boxes[0];
    let s = bx.max_abs();
    let inv_s: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
    let mut prog = SosProgram::new(n);

    // Every constraint is homogeneous in (Z, H, lambda): solve at unit scale
    // and multiply back, so solver tolerances are relative to the solution.
    let (k, zspec) = match zspec {
        ZSpec::Free(eps) => (eps, ZSpec::Free(1.0)),
        ZSpec::Fixed(zv) => (zv.amax(), ZSpec::Fixed(zv)),
    };
    let (z, trace) = match zspec {
        ZSpec::Free(eps) => {
            let (_, zg) = prog.add_psd_matrix(n);
            let z = ExprMatrix::from_fn(n, n, n, |i, j| {
                let e = zg.get(i, j).clone();
                if i == j {
                    e.add(&PolyExpr::from_affine(n, Affine::constant(eps)))
                } else {
                    e
                }
            });
            let mut obj = Affine::default();
            for i in 0..n {
                if let Some(a) = zg.get(i, i).coeff(&Monomial::one(n)) {
                    obj.add_scaled(a, 1.0);
                }
            }
            (z, Some(obj))
        }
        ZSpec::Fixed(zv) => (ExprMatrix::from_constant(&(zv / k), n), None),
    };
    let (_, h) = prog.add_poly_var(opts.deg_h, t, n);

    // M- H(xt) = theta(s xt) Z
    let theta_s = theta.theta.map(|p| p.scale_vars(&s));
    let lhs = h.left_mul_constant(&lift.m_minus);
    let rhs = z.left_mul_poly(&theta_s);
    prog.add_equality(&lhs, &rhs)?;

    // [[Z, X+ H], [*, Z]] - (sum lambda_i g_i) I
    let xh = h.left_mul_constant(&traj.x_plus);
    let lo: Vec<f64> = bx.lo.iter().zip(&inv_s).map(|(a, k)| a * k).collect();
    let hi: Vec<f64> = bx.hi.iter().zip(&inv_s).map(|(a, k)| a * k).collect();
    let g_scaled = BoxSet::new(lo, hi).inequalities();
    let mut lam_sum = PolyExpr::zero(n);
    let mut lam_exprs = Vec::with_capacity(n);
    for g in &g_scaled {
        let (_, l) = prog.add_sos_poly(opts.deg_mult / 2);
        lam_sum = lam_sum.add(&l.mul_poly(g));
        lam_exprs.push(l);
    }
    let block = ExprMatrix::block2(&z, &xh, &xh.transpose(), &z);
    let s_mat = block.sub(&ExprMatrix::scaled_identity(&lam_sum, 2 * n));
    prog.add_matrix_sos(&s_mat)?;
    if let Some(obj) = trace {
        prog.set_objective(obj);
    }

    let (sol, vals, stats) = gram_solve(&prog, backend, &opts.solver)?;
    match sol.status {
        Status::Optimal | Status::Feasible => {}
        Status::Infeasible => return Err(SynthesisError::Infeasible { deg_h: opts.deg_h }),
        other => {
            return Err(SynthesisError::Solver {
                stage: "gram program",
                status: other.as_str(),
            })
        }
    }
    let zv = z.eval(&vals).eval(&vec![0.0; n]).expect("constant matrix");
    let zv = (&zv + zv.transpose()) * (0.5 * k);
    let h_orig = h.eval(&vals).map(|p| p.scale_vars(&inv_s).scale(k));
    let lambda = lam_exprs
        .iter()
        .enumerate()
        .map(|(i, l)| l.eval(&vals).scale_vars(&inv_s).scale(k * inv_s[i] * inv_s[i]))
        .collect();
    Ok(GramSolution {
        z: zv,
        h: h_orig,
        lambda,
        stats,
    })
}

/// Largest condition number accepted when inverting `Z`.
pub const MAX_CONDITION: f64 = 1e12;

/// `P = Z^-1`, symmetrized.
pub fn invert_z(z: &DMatrix<f64>) -> Result<DMatrix<f64>, SynthesisError> {
    let eig = z.clone().symmetric_eigen();
    let lmin = eig.eigenvalues.min();
    let lmax = eig.eigenvalues.max();
    if !(lmin > 0.0) {
        return Err(SynthesisError::NotPositive(lmin));
    }
    let cond = lmax / lmin;
    if cond > MAX_CONDITION {
        return Err(SynthesisError::Conditioning(cond));
    }
    let inv = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v)) * eig.eigenvectors.transpose();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// `x^T P x`.
pub fn quadratic_form(p: &DMatrix<f64>) -> Polynomial {
    let n = p.nrows();
    let mut b = Polynomial::zero(n);
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] != 0.0 {
                let m = Monomial::var(n, i).mul(&Monomial::var(n, j));
                b = &b + &Polynomial::term(m, p[(i, j)]);
            }
        }
    }
    b
}

#[derive(Debug, Clone, PartialEq)]
pub struct Levels {
    pub alpha1: f64,
    pub alpha2: f64,
    pub delta: f64,
    /// Per box of the initial set.
    pub lambda0: Vec<Vec<Polynomial>>,
    /// Per box of the unsafe set.
    pub lambda_u: Vec<Vec<Polynomial>>,
    pub stats: [SolveStats; 2],
}

/// Certified bound of `x^T P x` over a union of boxes: an upper bound
/// (`upper = true`, minimized) or a lower bound (maximized). One SOS
/// constraint per box, all sharing the level.
pub fn certified_bound(
    p: &DMatrix<f64>,
    set: &SemiAlgebraicSet,
    upper: bool,
    deg_mult: u32,
    solver: &SolverOptions,
    backend: &dyn Backend,
) -> Result<(f64, Vec<Vec<Polynomial>>, SolveStats), SynthesisError> {
    let n = p.nrows();
    let s = set.max_abs();
    let inv_s: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
    let ps = diag_scale(&s) * p * diag_scale(&s);
    let norm = ps.amax().max(f64::MIN_POSITIVE);
    let bt = quadratic_form(&(ps / norm));
    let mut prog = SosProgram::new(n);
    let (_, alpha) = prog.add_scalar();
    let alpha_e = PolyExpr::from_affine(n, alpha.clone());
    let mut mults = Vec::new();
    for bx in &set.boxes {
        let lo: Vec<f64> = bx.lo.iter().zip(&inv_s).map(|(a, k)| a * k).collect();
        let hi: Vec<f64> = bx.hi.iter().zip(&inv_s).map(|(a, k)| a * k).collect();
        let gs = BoxSet::new(lo, hi).inequalities();
        let base = if upper {
            alpha_e.sub(&PolyExpr::from_poly(&bt))
        } else {
            PolyExpr::from_poly(&bt).sub(&alpha_e)
        };
        let mut expr = base;
        let mut ls = Vec::new();
        for g in &gs {
            let (_, l) = prog.add_sos_poly(deg_mult / 2);
            expr = expr.sub(&l.mul_poly(g));
            ls.push(l);
        }
        prog.add_sos(&expr)?;
        mults.push(ls);
    }
    prog.set_objective(if upper { alpha } else { alpha.scaled(-1.0) });
    let stage = if upper { "initial-set level" } else { "unsafe-set level" };
    let (sol, vals, stats) = gram_solve(&prog, backend, solver)?;
    match sol.status {
        Status::Optimal | Status::Feasible => {}
        Status::Infeasible | Status::Unbounded => return Err(SynthesisError::LevelInfeasible { stage }),
        other => {
            return Err(SynthesisError::Solver {
                stage,
                status: other.as_str(),
            })
        }
    }
    let level = alpha_e.eval(&vals).coeff(&Monomial::one(n)) * norm;
    let lambdas = mults
        .iter()
        .map(|ls| {
            ls.iter()
                .enumerate()
                .map(|(i, l)| l.eval(&vals).scale_vars(&inv_s).scale(norm * inv_s[i] * inv_s[i]))
                .collect()
        })
        .collect();
    Ok((level, lambdas, stats))
}

/// Step 4: `alpha1` minimized over the initial set, then `alpha2` maximized
/// over the unsafe set; requires `alpha2 >= alpha1 + delta_rel * alpha1`.
pub fn compute_levels(
    p: &DMatrix<f64>,
    x0: &SemiAlgebraicSet,
    xu: &SemiAlgebraicSet,
    degrees: MultiplierDegrees,
    delta_rel: f64,
    solver: &SolverOptions,
    backend: &dyn Backend,
) -> Result<Levels, SynthesisError> {
    let (alpha1, lambda0, s1) = certified_bound(p, x0, true, degrees.initial, solver, backend)?;
    let (alpha2, lambda_u, s2) = certified_bound(p, xu, false, degrees.unsafe_set, solver, backend)?;
    let delta = delta_rel * alpha1.abs();
    if alpha2 < alpha1 + delta {
        return Err(SynthesisError::LevelGap {
            alpha1,
            alpha2,
            threshold: alpha1 + delta,
        });
    }
    Ok(Levels {
        alpha1,
        alpha2,
        delta,
        lambda0,
        lambda_u,
        stats: [s1, s2],
    })
}

/// `(u(x), F(x))` with `F(x) = U- H(x) P` and `u(x) = F(x) x`.
pub fn extract_controller(u_minus: &DMatrix<f64>, h: &PolyMatrix, p: &DMatrix<f64>) -> (Vec<Polynomial>, PolyMatrix) {
    let n = p.nrows();
    let gain = h
        .left_mul_constant(u_minus)
        .and_then(|uh| uh.right_mul_constant(p))
        .expect("conforming shapes");
    let x = PolyMatrix::from_fn(n, 1, n, |i, _| Polynomial::var(n, i));
    let u = gain.mul(&x).expect("conforming shapes");
    ((0..u.rows()).map(|i| u.get(i, 0).clone()).collect(), gain)
}

/// Degrees of the SOS multipliers attached to each set (all even).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiplierDegrees {
    pub state: u32,
    pub initial: u32,
    pub unsafe_set: u32,
}

impl Default for MultiplierDegrees {
    fn default() -> Self {
        MultiplierDegrees {
            state: 2,
            initial: 2,
            unsafe_set: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbcSolution {
    pub p: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub h: PolyMatrix,
    pub alpha1: f64,
    pub alpha2: f64,
    pub delta: f64,
    pub barrier: Polynomial,
    pub controller: Vec<Polynomial>,
    pub gain: PolyMatrix,
    pub lambda: Vec<Polynomial>,
    pub lambda0: Vec<Vec<Polynomial>>,
    pub lambda_u: Vec<Vec<Polynomial>>,
    pub deg_h: u32,
    pub multipliers: MultiplierDegrees,
    pub epsilon: f64,
    pub stats: Vec<(String, SolveStats)>,
}

impl CbcSolution {
    /// Same certificate under `(Z, H) -> (c Z, c H)`; `B` scales by `1 / c`.
    pub fn rescaled(&self, c: f64) -> CbcSolution {
        let mut out = self.clone();
        out.z = &self.z * c;
        out.p = &self.p / c;
        out.h = self.h.scale(c);
        out.alpha1 = self.alpha1 / c;
        out.alpha2 = self.alpha2 / c;
        out.delta = self.delta / c;
        out.barrier = self.barrier.scale(1.0 / c);
        out.lambda = self.lambda.iter().map(|l| l.scale(c)).collect();
        for l in out.lambda0.iter_mut().chain(out.lambda_u.iter_mut()).flatten() {
            *l = l.scale(1.0 / c);
        }
        out
    }
}

/// Everything Algorithm-level that a run needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisProblem {
    pub basis: MonomialBasis,
    pub overrides: alloc::collections::BTreeMap<Monomial, usize>,
    pub x_set: SemiAlgebraicSet,
    pub x0: SemiAlgebraicSet,
    pub xu: SemiAlgebraicSet,
    pub deg_h: u32,
    pub multipliers: MultiplierDegrees,
    pub epsilon: f64,
    pub delta_rel: f64,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("data stage: {0}")]
    Data(#[from] DataError),
    #[error("rank stage: rank {} of {} rows with {} samples", .0.rank, .0.rows, .0.samples)]
    Rank(RankReport),
    #[error("transform stage: {0}")]
    Transform(DataError),
    #[error("step 3: {0}")]
    Gram(SynthesisError),
    #[error("inversion: {0}")]
    Invert(SynthesisError),
    #[error("step 4: {0}")]
    Levels(SynthesisError),
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Data(_) => "data",
            PipelineError::Rank(_) => "rank",
            PipelineError::Transform(_) => "transform",
            PipelineError::Gram(_) => "step3",
            PipelineError::Invert(_) => "invert",
            PipelineError::Levels(_) => "step4",
        }
    }

    /// Solver trouble, as opposed to a certified negative outcome.
    pub fn is_numerical(&self) -> bool {
        match self {
            PipelineError::Gram(e) | PipelineError::Invert(e) | PipelineError::Levels(e) => {
                matches!(e, SynthesisError::Solver { .. } | SynthesisError::Conditioning(_) | SynthesisError::NotPositive(_))
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub lift: LiftedData,
    pub rank: RankReport,
    pub theta: TransformMap,
}

/// Lift, rank check and transform.
pub fn prepare(traj: &TrajectoryData, problem: &SynthesisProblem) -> Result<Prepared, PipelineError> {
    let lift = build_lifted_matrix(traj, &problem.basis)?;
    let rank = check_persistency(&lift);
    if !rank.pass {
        return Err(PipelineError::Rank(rank));
    }
    let theta = build_transform(&problem.basis, &problem.overrides).map_err(PipelineError::Transform)?;
    Ok(Prepared { lift, rank, theta })
}

/// Steps 1 to 5 of the synthesis procedure.
pub fn synthesize(
    traj: &TrajectoryData,
    problem: &SynthesisProblem,
    backend: &dyn Backend,
) -> Result<(Prepared, CbcSolution), PipelineError> {
    let prep = prepare(traj, problem)?;
    let gram = synthesize_gram(&prep.lift, traj, &prep.theta, &problem.x_set, &step_options(problem), backend)
        .map_err(PipelineError::Gram)?;
    let p = invert_z(&gram.z).map_err(PipelineError::Invert)?;
    let sol = finish(traj, problem, gram, p, None, backend)?;
    Ok((prep, sol))
}

/// Same pipeline with `P` given: `Z = P^-1` is fixed and only `H` and the
/// multipliers are searched. With `alphas` the levels are taken as given
/// instead of certified.
pub fn synthesize_with_p(
    traj: &TrajectoryData,
    problem: &SynthesisProblem,
    p: &DMatrix<f64>,
    alphas: Option<(f64, f64)>,
    backend: &dyn Backend,
) -> Result<(Prepared, CbcSolution), PipelineError> {
    let prep = prepare(traj, problem)?;
    let z = invert_z(p).map_err(PipelineError::Invert)?;
    let gram = synthesize_fixed_z(&prep.lift, traj, &prep.theta, &problem.x_set, &z, &step_options(problem), backend)
        .map_err(PipelineError::Gram)?;
    let sol = finish(traj, problem, gram, p.clone(), alphas, backend)?;
    Ok((prep, sol))
}

fn step_options(problem: &SynthesisProblem) -> StepOptions {
    StepOptions {
        deg_h: problem.deg_h,
        deg_mult: problem.multipliers.state,
        epsilon: problem.epsilon,
        solver: problem.solver.clone(),
    }
}

fn finish(
    traj: &TrajectoryData,
    problem: &SynthesisProblem,
    gram: GramSolution,
    p: DMatrix<f64>,
    alphas: Option<(f64, f64)>,
    backend: &dyn Backend,
) -> Result<CbcSolution, PipelineError> {
    let mut stats = vec![("step3".into(), gram.stats)];
    let levels = match alphas {
        Some((alpha1, alpha2)) => (alpha1, alpha2, problem.delta_rel * alpha1.abs(), Vec::new(), Vec::new()),
        None => {
            let l = compute_levels(
                &p,
                &problem.x0,
                &problem.xu,
                problem.multipliers,
                problem.delta_rel,
                &problem.solver,
                backend,
            )
            .map_err(PipelineError::Levels)?;
            let [s1, s2] = l.stats;
            stats.push(("alpha1".into(), s1));
            stats.push(("alpha2".into(), s2));
            (l.alpha1, l.alpha2, l.delta, l.lambda0, l.lambda_u)
        }
    };
    let (alpha1, alpha2, delta, lambda0, lambda_u) = levels;
    let (controller, gain) = extract_controller(&traj.u_minus, &gram.h, &p);
    Ok(CbcSolution {
        barrier: quadratic_form(&p),
        p,
        z: gram.z,
        h: gram.h,
        alpha1,
        alpha2,
        delta,
        controller,
        gain,
        lambda: gram.lambda,
        lambda0,
        lambda_u,
        deg_h: problem.deg_h,
        multipliers: problem.multipliers,
        epsilon: problem.epsilon,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::BuiltinSolver;

    #[test]
    fn box_inequalities() {
        let s = SemiAlgebraicSet::single(vec![0.0, -2.0], vec![2.0, 2.0]).unwrap();
        let g = box_to_inequalities(&s).unwrap();
        assert_eq!(g[0].len(), 2);
        assert_eq!(g[0][0].eval(&[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(g[0][0].eval(&[2.0, 0.0]).unwrap(), 0.0);
        assert_eq!(g[0][1].eval(&[0.0, 0.0]).unwrap(), 4.0);
        let unit = SemiAlgebraicSet::single(vec![-1.0], vec![1.0]).unwrap();
        let g = &box_to_inequalities(&unit).unwrap()[0][0];
        assert_eq!(g.eval(&[1.0]).unwrap(), 0.0);
        assert_eq!(g.eval(&[-1.0]).unwrap(), 0.0);
        assert!(SemiAlgebraicSet::single(vec![1.0], vec![0.0]).is_err());
        assert!(SemiAlgebraicSet::new(vec![]).is_err());
    }

    #[test]
    fn invert_simple() {
        assert_eq!(invert_z(&DMatrix::identity(2, 2)).unwrap(), DMatrix::identity(2, 2));
        let p = invert_z(&DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]))).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15 && (p[(1, 1)] - 0.25).abs() < 1e-15);
        assert!(invert_z(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-14]))).is_err());
    }

    #[test]
    fn unit_disc_level() {
        let x0 = SemiAlgebraicSet::single(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let (a, _, _) =
            certified_bound(&DMatrix::identity(2, 2), &x0, true, 2, &SolverOptions::default(), &BuiltinSolver).unwrap();
        assert!((a - 2.0).abs() < 1e-6, "{a}");
    }

    #[test]
    fn zero_h_gives_zero_controller() {
        let h = PolyMatrix::zeros(4, 2, 2);
        let (u, _) = extract_controller(&DMatrix::from_element(1, 4, 1.0), &h, &DMatrix::identity(2, 2));
        assert!(u[0].is_zero());
    }
}
