//! Independent checks of a synthesized certificate.
//!
//! Three tiers are reported separately:
//! - `certificate`: exact algebraic facts about the solved program.
//! - `sampled`: grid and random-point evaluation (evidence, not proof).
//! - `oracle`: closed-loop simulation against a model identified by least
//!   squares from the same trajectory. This is a test oracle only; the
//!   synthesis never uses it.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{numerical_rank, singular_values_desc, LiftedData, MonomialBasis, TrajectoryData, TransformMap};
use crate::math::{cos, sin, sqrt};
use crate::poly::{Monomial, PolyMatrix, Polynomial};
use crate::sdp::sym_min_eig;
use crate::synthesis::{quadratic_form, BoxSet, CbcSolution, SemiAlgebraicSet};

pub const EQUALITY_TOL: f64 = 1e-6;
pub const PZ_TOL: f64 = 1e-8;
pub const LMI_TOL: f64 = 1e-6;
pub const SCHUR_TOL: f64 = 1e-5;
pub const DECREASE_RTOL: f64 = 1e-7;
pub const LEVEL_RTOL: f64 = 1e-6;
pub const THETA_PINV_RTOL: f64 = 1e-5;
/// Oracle tolerance when the identified model reproduces the data exactly.
pub const ORACLE_TOL: f64 = 1e-5;
/// Oracle tolerance for quantized data (identification residual above
/// `EXACT_FIT_RTOL * |X+|`).
pub const ORACLE_TOL_QUANTIZED: f64 = 1e-2;
pub const EXACT_FIT_RTOL: f64 = 1e-6;
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("oracle unavailable: stacked data matrix is {rows}x{cols} with rank {rank}")]
    OracleUnavailable { rows: usize, cols: usize, rank: usize },
}

/// Least-squares fit `X+ ~ A_hat M- + B_hat U-`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedModel {
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    /// Frobenius norm of the fit residual.
    pub residual: f64,
    /// `residual / |X+|_F`.
    pub relative_residual: f64,
}

impl IdentifiedModel {
    pub fn step(&self, basis: &MonomialBasis, x: &[f64], u: &[f64]) -> DVector<f64> {
        &self.a_hat * basis.eval(x) + &self.b_hat * DVector::from_row_slice(u)
    }

    pub fn is_exact_fit(&self) -> bool {
        self.relative_residual <= EXACT_FIT_RTOL
    }
}

pub fn identify_model(lift: &LiftedData, traj: &TrajectoryData) -> Result<IdentifiedModel, VerifyError> {
    let nm = lift.m_minus.nrows();
    let m = traj.m();
    let t = traj.samples();
    let mut stack = DMatrix::zeros(nm + m, t);
    stack.view_mut((0, 0), (nm, t)).copy_from(&lift.m_minus);
    stack.view_mut((nm, 0), (m, t)).copy_from(&traj.u_minus);
    // Rows differ in scale by orders of magnitude (inputs against cubic
    // monomials); rank and solve use unit-norm rows.
    let d = DVector::from_iterator(
        nm + m,
        stack.row_iter().map(|r| {
            let nr = r.norm();
            if nr > 0.0 {
                1.0 / nr
            } else {
                1.0
            }
        }),
    );
    let scaled = DMatrix::from_diagonal(&d) * &stack;
    let rank = numerical_rank(&singular_values_desc(&scaled));
    if t < nm + m || rank < nm + m {
        return Err(VerifyError::OracleUnavailable {
            rows: nm + m,
            cols: t,
            rank,
        });
    }
    let svd = scaled.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v requested");
    let sinv = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s));
    let pinv = vt.transpose() * sinv * u.transpose() * DMatrix::from_diagonal(&d);
    let ab = &traj.x_plus * pinv;
    let fit = &ab * &stack;
    let residual = (&traj.x_plus - fit).norm();
    let xn = traj.x_plus.norm();
    Ok(IdentifiedModel {
        a_hat: ab.columns(0, nm).into_owned(),
        b_hat: ab.columns(nm, m).into_owned(),
        residual,
        relative_residual: if xn > 0.0 { residual / xn } else { residual },
    })
}

/// `X+ H(x)`, the data-based closed-loop matrix before `P`.
pub fn closed_loop_matrix(sol: &CbcSolution, traj: &TrajectoryData) -> PolyMatrix {
    sol.h.left_mul_constant(&traj.x_plus).expect("conforming shapes")
}

/// `x+ = X+ H(x) P x`.
pub fn closed_loop_step(x: &[f64], sol: &CbcSolution, traj: &TrajectoryData) -> DVector<f64> {
    let k = closed_loop_matrix(sol, traj).eval(x).expect("state length");
    k * (&sol.p * DVector::from_row_slice(x))
}

pub fn eval_controller(sol: &CbcSolution, x: &[f64]) -> Vec<f64> {
    sol.controller.iter().map(|p| p.eval(x).expect("state length")).collect()
}

/// Largest coefficient of `M- H(x) - theta(x) Z`, accumulated without the
/// coefficient cleanup of polynomial arithmetic.
pub fn equality_residual(sol: &CbcSolution, lift: &LiftedData, theta: &TransformMap) -> f64 {
    let mm = &lift.m_minus;
    let th = &theta.theta;
    let mut worst: f64 = 0.0;
    for i in 0..mm.nrows() {
        for j in 0..sol.h.cols() {
            let mut acc: BTreeMap<&Monomial, f64> = BTreeMap::new();
            for k in 0..mm.ncols() {
                for (m, c) in sol.h.get(k, j).terms() {
                    *acc.entry(m).or_insert(0.0) += mm[(i, k)] * c;
                }
            }
            for l in 0..th.cols() {
                for (m, c) in th.get(i, l).terms() {
                    *acc.entry(m).or_insert(0.0) -= c * sol.z[(l, j)];
                }
            }
            worst = acc.values().fold(worst, |w, v| w.max(v.abs()));
        }
    }
    worst
}

fn block_matrix(z: &DMatrix<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(z);
    m.view_mut((n, n), (n, n)).copy_from(z);
    m.view_mut((0, n), (n, n)).copy_from(k);
    m.view_mut((n, 0), (n, n)).copy_from(&k.transpose());
    m
}

fn sym_min(m: &DMatrix<f64>) -> f64 {
    sym_min_eig(m)
}

/// Regular grid with `density` points per axis on one box.
pub fn box_grid(bx: &BoxSet, density: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
    let n = bx.dim();
    let d = density.max(2);
    let total = d.pow(n as u32);
    (0..total).map(move |mut idx| {
        let mut x = vec![0.0; n];
        for (i, xi) in x.iter_mut().enumerate() {
            let k = idx % d;
            idx /= d;
            *xi = if k == d - 1 {
                bx.hi[i]
            } else {
                bx.lo[i] + (bx.hi[i] - bx.lo[i]) * k as f64 / (d - 1) as f64
            };
        }
        x
    })
}

/// Extreme of `x^T P x` over a grid of every box of `set`.
pub fn level_extreme(p: &DMatrix<f64>, set: &SemiAlgebraicSet, density: usize, maximize: bool) -> (f64, Vec<f64>) {
    let mut best = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
    let mut arg = Vec::new();
    for bx in &set.boxes {
        for x in box_grid(bx, density) {
            let v = DVector::from_row_slice(&x);
            let b = v.dot(&(p * &v));
            if (maximize && b > best) || (!maximize && b < best) {
                best = b;
                arg = x;
            }
        }
    }
    (best, arg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMargins {
    pub x0_max: f64,
    pub x0_argmax: Vec<f64>,
    pub xu_min: f64,
    pub xu_argmin: Vec<f64>,
    pub lmi_min_eig: f64,
    pub lmi_argmin: Vec<f64>,
}

pub fn grid_check(
    sol: &CbcSolution,
    traj: &TrajectoryData,
    x0: &SemiAlgebraicSet,
    xu: &SemiAlgebraicSet,
    x_set: &SemiAlgebraicSet,
    density: usize,
) -> GridMargins {
    let (x0_max, x0_argmax) = level_extreme(&sol.p, x0, density, true);
    let (xu_min, xu_argmin) = level_extreme(&sol.p, xu, density, false);
    let k = closed_loop_matrix(sol, traj);
    let mut lmi_min_eig = f64::INFINITY;
    let mut lmi_argmin = Vec::new();
    for bx in &x_set.boxes {
        for x in box_grid(bx, density) {
            let e = sym_min(&block_matrix(&sol.z, &k.eval(&x).expect("state length")));
            if e < lmi_min_eig {
                lmi_min_eig = e;
                lmi_argmin = x;
            }
        }
    }
    GridMargins {
        x0_max,
        x0_argmax,
        xu_min,
        xu_argmin,
        lmi_min_eig,
        lmi_argmin,
    }
}

/// Points `p` with `p^T P p = alpha`: a closed curve (`n = 2`, `samples`
/// points) or a latitude/longitude mesh (`n = 3`, `samples^2` points).
pub fn level_set_points(p: &DMatrix<f64>, alpha: f64, samples: usize) -> Vec<Vec<f64>> {
    let n = p.nrows();
    let Some(chol) = p.clone().cholesky() else {
        return Vec::new();
    };
    // x = sqrt(alpha) L^-T v with |v| = 1.
    let lt = chol.l().transpose();
    let r = sqrt(alpha.max(0.0));
    let map = |v: DVector<f64>| -> Vec<f64> {
        let x = lt.solve_upper_triangular(&v).expect("positive diagonal") * r;
        x.iter().copied().collect()
    };
    match n {
        2 => (0..samples)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / samples as f64;
                map(DVector::from_vec(vec![cos(t), sin(t)]))
            })
            .collect(),
        3 => {
            let mut out = Vec::with_capacity(samples * samples);
            for i in 0..samples {
                let th = PI * (i as f64 + 0.5) / samples as f64;
                for j in 0..samples {
                    let ph = 2.0 * PI * j as f64 / samples as f64;
                    out.push(map(DVector::from_vec(vec![sin(th) * cos(ph), sin(th) * sin(ph), cos(th)])));
                }
            }
            out
        }
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Certificate,
    Sampled,
    Oracle,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Certificate => "certificate",
            Tier::Sampled => "sampled",
            Tier::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    Skipped,
}

impl Outcome {
    fn of(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub tier: Tier,
    pub outcome: Outcome,
    /// Measured quantity.
    pub value: f64,
    /// What `value` is compared against.
    pub bound: f64,
    pub detail: String,
    /// Worst offending point, if any.
    pub worst: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub points: Vec<Vec<f64>>,
    /// First step inside the unsafe set.
    pub unsafe_entry: Option<usize>,
    pub diverged: bool,
    /// Largest `B(x(k+1)) - B(x(k))` relative to `1 + B(x(k))`.
    pub max_increase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Points per axis; `0` picks 201 for `n <= 2`, else 61.
    pub grid_density: usize,
    pub random_points: usize,
    pub theta_points: usize,
    pub rollouts: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            grid_density: 0,
            random_points: 500,
            theta_points: 50,
            rollouts: 100,
            horizon: 100,
            seed: 0,
        }
    }
}

impl VerifyOptions {
    pub fn density_for(&self, n: usize) -> usize {
        match self.grid_density {
            0 if n <= 2 => 201,
            0 => 61,
            d => d,
        }
    }
}

pub struct VerifyContext<'a> {
    pub traj: &'a TrajectoryData,
    pub lift: &'a LiftedData,
    pub theta: &'a TransformMap,
    pub basis: &'a MonomialBasis,
    pub x_set: &'a SemiAlgebraicSet,
    pub x0: &'a SemiAlgebraicSet,
    pub xu: &'a SemiAlgebraicSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub grid: GridMargins,
    pub oracle: Option<IdentifiedModel>,
    pub oracle_tolerance: f64,
    pub rollouts: Vec<Rollout>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn tier_pass(&self, tier: Tier) -> bool {
        self.checks
            .iter()
            .filter(|c| c.tier == tier)
            .all(|c| c.outcome != Outcome::Fail)
    }
}

/// Uniform sample from a union of boxes, boxes weighted by volume.
pub fn sample_in(set: &SemiAlgebraicSet, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let vols: Vec<f64> = set
        .boxes
        .iter()
        .map(|b| b.lo.iter().zip(&b.hi).map(|(l, h)| h - l).product())
        .collect();
    let total: f64 = vols.iter().sum();
    let mut pick = rng.random::<f64>() * total;
    let mut idx = set.boxes.len() - 1;
    for (i, v) in vols.iter().enumerate() {
        if pick < *v {
            idx = i;
            break;
        }
        pick -= v;
    }
    let b = &set.boxes[idx];
    b.lo.iter().zip(&b.hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect()
}

fn b_of(p: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = DVector::from_row_slice(x);
    v.dot(&(p * &v))
}

/// `(min block eig, min Schur eig, sign agreement, worst point)` at random points.
fn lmi_random(sol: &CbcSolution, k: &PolyMatrix, pts: &[Vec<f64>]) -> (f64, f64, bool, Vec<f64>) {
    let mut emin = f64::INFINITY;
    let mut smin = f64::INFINITY;
    let mut agree = true;
    let mut worst = Vec::new();
    for x in pts {
        let kx = k.eval(x).expect("state length");
        let e = sym_min(&block_matrix(&sol.z, &kx));
        let s = sym_min(&(&sol.z - kx.transpose() * &sol.p * &kx));
        if (e >= -LMI_TOL) != (s >= -SCHUR_TOL) {
            agree = false;
        }
        if e < emin {
            emin = e;
            worst = x.clone();
        }
        smin = smin.min(s);
    }
    (emin, smin, agree, worst)
}

/// Worst `B(x+) - B(x) - tol (1 + B(x))` over the points.
fn decrease_random(sol: &CbcSolution, k: &PolyMatrix, pts: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let mut worst = f64::NEG_INFINITY;
    let mut arg = Vec::new();
    for x in pts {
        let v = DVector::from_row_slice(x);
        let next = k.eval(x).expect("state length") * (&sol.p * &v);
        let b0 = v.dot(&(&sol.p * &v));
        let b1 = next.dot(&(&sol.p * &next));
        let m = b1 - b0 - DECREASE_RTOL * (1.0 + b0);
        if m > worst {
            worst = m;
            arg = x.clone();
        }
    }
    (worst, arg)
}

/// Largest `|[theta+(z) M- H(z)]^-1 - P|_F / |P|_F`.
fn theta_pinv_error(sol: &CbcSolution, ctx: &VerifyContext<'_>, pts: &[Vec<f64>]) -> (f64, usize) {
    let mh = sol.h.left_mul_constant(&ctx.lift.m_minus).expect("conforming shapes");
    let pn = sol.p.norm();
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for z in pts {
        let th = ctx.theta.theta.eval(z).expect("state length");
        let gram = th.transpose() * &th;
        let Some(chol) = gram.cholesky() else { continue };
        let q = chol.solve(&(th.transpose() * mh.eval(z).expect("state length")));
        let Some(qinv) = q.try_inverse() else {
            worst = f64::INFINITY;
            continue;
        };
        used += 1;
        worst = worst.max((qinv - &sol.p).norm() / pn);
    }
    (worst, used)
}

struct SampledFlags {
    equality: bool,
    lmi: bool,
    decrease: bool,
}

fn sampled_flags(sol: &CbcSolution, ctx: &VerifyContext<'_>, pts: &[Vec<f64>]) -> SampledFlags {
    let k = closed_loop_matrix(sol, ctx.traj);
    let (e, s, agree, _) = lmi_random(sol, &k, pts);
    SampledFlags {
        equality: equality_residual(sol, ctx.lift, ctx.theta) <= EQUALITY_TOL,
        lmi: e >= -LMI_TOL && s >= -SCHUR_TOL && agree,
        decrease: decrease_random(sol, &k, pts).0 <= 0.0,
    }
}

/// Initial states for the rollouts, drawn from their own stream so that
/// they do not depend on how many other points were sampled.
pub fn rollout_starts(x0: &SemiAlgebraicSet, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..count).map(|_| sample_in(x0, &mut rng)).collect()
}

pub fn simulate(
    sol: &CbcSolution,
    model: &IdentifiedModel,
    basis: &MonomialBasis,
    starts: &[Vec<f64>],
    horizon: usize,
    xu: &SemiAlgebraicSet,
) -> Vec<Rollout> {
    starts
        .iter()
        .map(|x0| {
            let mut points = vec![x0.clone()];
            let mut unsafe_entry = if xu.contains(x0) { Some(0) } else { None };
            let mut diverged = false;
            let mut max_increase = f64::NEG_INFINITY;
            let mut x = x0.clone();
            for k in 1..=horizon {
                let u = eval_controller(sol, &x);
                let next: Vec<f64> = model.step(basis, &x, &u).iter().copied().collect();
                let b0 = b_of(&sol.p, &x);
                let b1 = b_of(&sol.p, &next);
                max_increase = max_increase.max((b1 - b0) / (1.0 + b0));
                if unsafe_entry.is_none() && xu.contains(&next) {
                    unsafe_entry = Some(k);
                }
                let norm = next.iter().map(|v| v * v).sum::<f64>();
                points.push(next.clone());
                if !(sqrt(norm) <= DIVERGENCE_NORM) {
                    diverged = true;
                    break;
                }
                x = next;
            }
            Rollout {
                points,
                unsafe_entry,
                diverged,
                max_increase,
            }
        })
        .collect()
}

fn check(name: &'static str, tier: Tier, pass: bool, value: f64, bound: f64, detail: String) -> Check {
    Check {
        name,
        tier,
        outcome: Outcome::of(pass),
        value,
        bound,
        detail,
        worst: None,
    }
}

/// Runs every check. Deterministic for a fixed `opts.seed`.
pub fn verify(sol: &CbcSolution, ctx: &VerifyContext<'_>, opts: &VerifyOptions) -> VerificationReport {
    let n = sol.p.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();

    // Certificate tier.
    let pz = (&sol.p * &sol.z - DMatrix::identity(n, n)).amax();
    checks.push(check("pz_identity", Tier::Certificate, pz <= PZ_TOL, pz, PZ_TOL, "max |P Z - I|".into()));
    let pmin = sym_min(&sol.p);
    let sym = (&sol.p - sol.p.transpose()).amax();
    checks.push(check(
        "p_positive",
        Tier::Certificate,
        pmin > 0.0 && sym <= 1e-12 * sol.p.amax(),
        pmin,
        0.0,
        "min eigenvalue of P".into(),
    ));
    let equality = equality_residual(sol, ctx.lift, ctx.theta);
    checks.push(check("equality_residual", Tier::Certificate, equality <= EQUALITY_TOL, equality, EQUALITY_TOL, "max coefficient of M- H(x) - theta(x) Z".into()));
    let gap = sol.alpha2 - sol.alpha1 - sol.delta;
    checks.push(check(
        "level_gap",
        Tier::Certificate,
        gap >= 0.0,
        gap,
        0.0,
        format!("alpha2 - alpha1 - delta with delta = {:e}", sol.delta),
    ));

    // Sampled tier.
    let density = opts.density_for(n);
    let grid = grid_check(sol, ctx.traj, ctx.x0, ctx.xu, ctx.x_set, density);
    let mut c = check(
        "x0_grid",
        Tier::Sampled,
        grid.x0_max <= sol.alpha1 + LEVEL_RTOL * sol.alpha1.abs(),
        grid.x0_max,
        sol.alpha1,
        format!("max B on a {density}-per-axis grid of the initial set"),
    );
    c.worst = Some(grid.x0_argmax.clone());
    checks.push(c);
    let mut c = check(
        "xu_grid",
        Tier::Sampled,
        grid.xu_min >= sol.alpha2 - LEVEL_RTOL * sol.alpha2.abs(),
        grid.xu_min,
        sol.alpha2,
        format!("min B on a {density}-per-axis grid of the unsafe set"),
    );
    c.worst = Some(grid.xu_argmin.clone());
    checks.push(c);
    let mut c = check(
        "lmi_grid",
        Tier::Sampled,
        grid.lmi_min_eig >= -LMI_TOL,
        grid.lmi_min_eig,
        -LMI_TOL,
        format!("min eigenvalue of [[Z, X+ H], [*, Z]] on a {density}-per-axis grid of X"),
    );
    c.worst = Some(grid.lmi_argmin.clone());
    checks.push(c);

    let pts: Vec<Vec<f64>> = (0..opts.random_points).map(|_| sample_in(ctx.x_set, &mut rng)).collect();
    let k = closed_loop_matrix(sol, ctx.traj);
    let (emin, smin, agree, worst) = lmi_random(sol, &k, &pts);
    let mut c = check(
        "schur_random",
        Tier::Sampled,
        emin >= -LMI_TOL && smin >= -SCHUR_TOL && agree,
        smin,
        -SCHUR_TOL,
        format!("block min eig {emin:e}, Schur min eig {smin:e}, signs agree: {agree}"),
    );
    c.worst = Some(worst);
    checks.push(c);
    let (dec, darg) = decrease_random(sol, &k, &pts);
    let mut c = check(
        "decrease_random",
        Tier::Sampled,
        dec <= 0.0,
        dec,
        0.0,
        "max B(x+) - B(x) - 1e-7 (1 + B(x))".into(),
    );
    c.worst = Some(darg);
    checks.push(c);
    let tpts: Vec<Vec<f64>> = (0..opts.theta_points).map(|_| sample_in(ctx.x_set, &mut rng)).collect();
    let (terr, used) = theta_pinv_error(sol, ctx, &tpts);
    checks.push(check(
        "theta_pinv",
        Tier::Sampled,
        terr <= THETA_PINV_RTOL && used > 0,
        terr,
        THETA_PINV_RTOL,
        format!("relative error of [theta+ M- H]^-1 against P at {used} points"),
    ));
    let base = sampled_flags(sol, ctx, &pts);
    let mut invariant = true;
    for c in [0.5, 2.0] {
        let f = sampled_flags(&sol.rescaled(c), ctx, &pts);
        invariant &= f.equality == base.equality && f.lmi == base.lmi && f.decrease == base.decrease;
    }
    checks.push(check(
        "scaling_invariance",
        Tier::Sampled,
        invariant,
        if invariant { 0.0 } else { 1.0 },
        0.0,
        "outcomes unchanged under (Z, H) -> (cZ, cH), c in {0.5, 2}".into(),
    ));

    // Oracle tier.
    let mut rollouts = Vec::new();
    let mut oracle_tolerance = ORACLE_TOL;
    let oracle = match identify_model(ctx.lift, ctx.traj) {
        Ok(model) => {
            let exact = model.is_exact_fit();
            let tol = if exact { ORACLE_TOL } else { ORACLE_TOL_QUANTIZED };
            let dtol = if exact { DECREASE_RTOL } else { ORACLE_TOL_QUANTIZED };
            oracle_tolerance = tol;
            checks.push(Check {
                name: "oracle_fit",
                tier: Tier::Oracle,
                outcome: Outcome::Pass,
                value: model.relative_residual,
                bound: EXACT_FIT_RTOL,
                detail: if exact {
                    "identified test oracle reproduces the data".into()
                } else {
                    format!("identified test oracle does not reproduce the data; tolerances widened to {tol:e}")
                },
                worst: None,
            });
            let mut worst = 0.0f64;
            let mut warg = Vec::new();
            for z in &pts {
                let u = eval_controller(sol, z);
                let lhs = model.step(ctx.basis, z, &u);
                let rhs = k.eval(z).expect("state length") * (&sol.p * DVector::from_row_slice(z));
                let zn = sqrt(z.iter().map(|v| v * v).sum::<f64>());
                let r = (lhs - rhs).amax() / (1.0 + zn * zn * zn);
                if !(r <= worst) {
                    worst = r;
                    warg = z.clone();
                }
            }
            let mut c = check(
                "oracle_equivalence",
                Tier::Oracle,
                worst <= tol,
                worst,
                tol,
                "max |A_hat M(z) + B_hat u(z) - X+ H(z) P z| / (1 + |z|^3)".into(),
            );
            c.worst = Some(warg);
            checks.push(c);

            let starts = rollout_starts(ctx.x0, opts.rollouts, opts.seed);
            rollouts = simulate(sol, &model, ctx.basis, &starts, opts.horizon, ctx.xu);
            let entries = rollouts.iter().filter(|r| r.unsafe_entry.is_some()).count();
            let diverged = rollouts.iter().filter(|r| r.diverged).count();
            checks.push(check(
                "rollout_safety",
                Tier::Oracle,
                entries == 0 && diverged == 0,
                entries as f64,
                0.0,
                format!("{entries} of {} rollouts entered the unsafe set, {diverged} diverged", rollouts.len()),
            ));
            let inc = rollouts.iter().map(|r| r.max_increase).fold(f64::NEG_INFINITY, f64::max);
            let bad = rollouts.iter().filter(|r| !(r.max_increase <= dtol)).count();
            checks.push(check(
                "rollout_decrease",
                Tier::Oracle,
                bad == 0,
                inc,
                dtol,
                format!("{bad} rollouts with B increasing by more than {dtol:e} relative"),
            ));
            Some(model)
        }
        Err(e) => {
            checks.push(Check {
                name: "oracle_fit",
                tier: Tier::Oracle,
                outcome: Outcome::Skipped,
                value: f64::NAN,
                bound: EXACT_FIT_RTOL,
                detail: format!("{e}"),
                worst: None,
            });
            None
        }
    };

    let pass = checks.iter().all(|c| c.outcome != Outcome::Fail);
    VerificationReport {
        checks,
        grid,
        oracle,
        oracle_tolerance,
        rollouts,
        pass,
    }
}

/// Barrier of an externally supplied `P` with its levels, for checking
/// given certificates against the same verifier.
pub fn barrier_of(p: &DMatrix<f64>) -> Polynomial {
    quadratic_form(p)
}
