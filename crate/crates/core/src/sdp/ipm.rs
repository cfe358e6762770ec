//! Homogeneous self-dual interior-point method with Nesterov-Todd scaling
//! and Mehrotra predictor-corrector steps.
//!
//! Works on the presolved problem `min c^T x, A x = b, x in K` with `A`
//! having orthonormal rows. The embedding
//!
//! ```text
//! A x - b tau = 0,  A^T y + s - c tau = 0,  b^T y - c^T x - kappa = 0
//! ```
//!
//! is followed from `x = s = I, y = 0, tau = kappa = 1`; `tau -> 0` with
//! `b^T y > 0` certifies primal infeasibility.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::presolve::{presolve, Cone, Outcome, Presolved};
use super::{blocks_from_x, SdpProblem, SdpSolution, SolverOptions, Status};
use crate::math::sqrt;

const STEP_FRACTION: f64 = 0.99;
const INFEAS_TOL: f64 = 1e-8;
const STALL_LIMIT: usize = 5;

pub fn solve(prob: &SdpProblem, opts: &SolverOptions) -> SdpSolution {
    let pre = presolve(prob, opts.feas_tol);
    let solved_status = if prob.objective.is_empty() {
        Status::Feasible
    } else {
        Status::Optimal
    };
    match &pre.outcome {
        Outcome::Infeasible(cert) => {
            let mut sol = SdpSolution::failed(prob, Status::Infeasible, 0);
            sol.certificate = Some(cert.clone());
            return sol;
        }
        Outcome::Unbounded => return SdpSolution::failed(prob, Status::Unbounded, 0),
        Outcome::Reduced => {}
    }
    if pre.cone.len == 0 {
        let x = DVector::zeros(0);
        let sol = finish(prob, &pre, &x, &DVector::zeros(pre.a.nrows()), solved_status, 0, 0.0, 0.0);
        if sol.primal_residual <= opts.feas_tol {
            return sol;
        }
        return SdpSolution {
            status: Status::NumericalFailure,
            ..sol
        };
    }
    Hsde::new(&pre).run(prob, &pre, opts, solved_status)
}

struct Scaling {
    g: Vec<DMatrix<f64>>,
    lambda: Vec<DVector<f64>>,
    /// Inverse Cholesky factors of the current `X` and `S` blocks.
    lx_inv: Vec<DMatrix<f64>>,
    ls_inv: Vec<DMatrix<f64>>,
}

struct Hsde {
    x: DVector<f64>,
    s: DVector<f64>,
    y: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: DVector<f64>,
    ds: DVector<f64>,
    dy: DVector<f64>,
    dtau: f64,
    dkappa: f64,
    dxt: DVector<f64>,
    dst: DVector<f64>,
}

struct System<'a> {
    pre: &'a Presolved,
    sc: Scaling,
    /// Rows of `A` in scaled coordinates, `G^T A_i G`.
    at: DMatrix<f64>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    ct: DVector<f64>,
    h: DVector<f64>,
    q: DVector<f64>,
}

impl Hsde {
    fn new(pre: &Presolved) -> Self {
        let e = pre.cone.identity();
        Hsde {
            x: e.clone(),
            s: e,
            y: DVector::zeros(pre.a.nrows()),
            tau: 1.0,
            kappa: 1.0,
        }
    }

    fn run(mut self, prob: &SdpProblem, pre: &Presolved, opts: &SolverOptions, solved: Status) -> SdpSolution {
        let cone = &pre.cone;
        let (a, b, c) = (&pre.a, &pre.b, &pre.c);
        let nu = cone.degree() as f64;
        let bnorm = 1.0 + b.amax();
        let cnorm = 1.0 + c.amax();
        let mut last = None;
        let mut stalled = 0;
        for iter in 0..=opts.max_iter {
            let rp = a * &self.x - b * self.tau;
            let rd = a.transpose() * &self.y + &self.s - c * self.tau;
            let rg = b.dot(&self.y) - c.dot(&self.x) - self.kappa;
            let mu = (self.x.dot(&self.s) + self.tau * self.kappa) / (nu + 1.0);

            // Termination on the normalized iterate.
            let xh = &self.x / self.tau;
            let yh = &self.y / self.tau;
            let pobj = c.dot(&xh);
            let dobj = b.dot(&yh);
            let dres = (&rd / self.tau).amax() / cnorm;
            let pres = (&rp / self.tau).amax() / bnorm;
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
            let cand = finish(prob, pre, &xh, &yh, solved, iter, dres, gap);
            let orig_ok = cand.primal_residual <= opts.feas_tol;
            let reduced_ok = pres <= opts.feas_tol && dres <= opts.feas_tol && gap <= opts.gap_tol;
            if orig_ok && reduced_ok {
                return cand;
            }
            // Converged on the reduced rows but not on the original ones:
            // further iterations cannot help.
            stalled = if reduced_ok { stalled + 1 } else { 0 };
            if stalled > STALL_LIMIT {
                last = Some(cand);
                break;
            }
            last = Some(cand);

            let by = b.dot(&self.y);
            if by > 0.0 {
                let ray = (a.transpose() * &self.y + &self.s).amax();
                if ray <= INFEAS_TOL * by {
                    return self.infeasible(prob, pre, by, iter);
                }
            }
            let cx = c.dot(&self.x);
            if cx < 0.0 && (a * &self.x).amax() <= INFEAS_TOL * -cx && self.tau < 1e-6 * self.kappa {
                return SdpSolution::failed(prob, Status::Unbounded, iter);
            }
            if iter == opts.max_iter || !mu.is_finite() {
                break;
            }

            let Some(sys) = System::build(pre, &self.x, &self.s) else {
                break;
            };

            // Predictor.
            let lam_neg: Vec<DMatrix<f64>> = sys.sc.lambda.iter().map(|l| DMatrix::from_diagonal(&(-l))).collect();
            let rt = svec_blocks(cone, &lam_neg);
            let aff = sys.direction(&self, 1.0, &rt, -self.tau * self.kappa, &rp, &rd, rg);
            let alpha_aff = self.max_step(&sys, &aff).min(1.0);
            let mu_aff = {
                let lx = sys.scaled_lambda_vec(cone);
                let xs = (&lx + &aff.dxt * alpha_aff).dot(&(&lx + &aff.dst * alpha_aff));
                (xs + (self.tau + alpha_aff * aff.dtau) * (self.kappa + alpha_aff * aff.dkappa)) / (nu + 1.0)
            };
            let sigma = {
                let r = (mu_aff / mu).max(0.0);
                (r * r * r).min(1.0)
            };

            // Corrector.
            let mut rblocks = Vec::with_capacity(cone.dims.len());
            for (bi, lam) in sys.sc.lambda.iter().enumerate() {
                let dxa = cone.smat(aff.dxt.as_slice(), bi);
                let dsa = cone.smat(aff.dst.as_slice(), bi);
                let prod = &dxa * &dsa;
                let d = lam.len();
                let mut r = DMatrix::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        let mut v = -0.5 * (prod[(i, j)] + prod[(j, i)]);
                        if i == j {
                            v += sigma * mu - lam[i] * lam[i];
                        }
                        r[(i, j)] = 2.0 * v / (lam[i] + lam[j]);
                    }
                }
                rblocks.push(r);
            }
            let rt = svec_blocks(cone, &rblocks);
            let rtk = sigma * mu - self.tau * self.kappa - aff.dtau * aff.dkappa;
            let dir = sys.direction(&self, 1.0 - sigma, &rt, rtk, &rp, &rd, rg);
            let alpha = (STEP_FRACTION * self.max_step(&sys, &dir)).min(1.0);
            if !(alpha > 1e-12) {
                break;
            }
            self.x += &dir.dx * alpha;
            self.s += &dir.ds * alpha;
            self.y += &dir.dy * alpha;
            self.tau += alpha * dir.dtau;
            self.kappa += alpha * dir.dkappa;
        }
        let mut sol = last.unwrap_or_else(|| SdpSolution::failed(prob, Status::NumericalFailure, 0));
        sol.status = Status::NumericalFailure;
        sol
    }

    fn infeasible(&self, prob: &SdpProblem, pre: &Presolved, by: f64, iter: usize) -> SdpSolution {
        let mut sol = SdpSolution::failed(prob, Status::Infeasible, iter);
        let cert = &pre.ty * (&self.y / by);
        sol.certificate = Some(cert.iter().copied().collect());
        sol
    }

    /// Largest step keeping every cone variable and `tau`, `kappa` feasible.
    fn max_step(&self, sys: &System<'_>, d: &Direction) -> f64 {
        let cone = &sys.pre.cone;
        let mut alpha = f64::INFINITY;
        for bi in 0..cone.dims.len() {
            for (v, linv) in [(&d.dx, &sys.sc.lx_inv[bi]), (&d.ds, &sys.sc.ls_inv[bi])] {
                let m = cone.smat(v.as_slice(), bi);
                let scaled = linv * m * linv.transpose();
                let lmin = super::sym_min_eig(&((&scaled + scaled.transpose()) * 0.5));
                if lmin < 0.0 {
                    alpha = alpha.min(-1.0 / lmin);
                }
            }
        }
        if d.dtau < 0.0 {
            alpha = alpha.min(-self.tau / d.dtau);
        }
        if d.dkappa < 0.0 {
            alpha = alpha.min(-self.kappa / d.dkappa);
        }
        alpha
    }
}

impl<'a> System<'a> {
    fn build(pre: &'a Presolved, x: &DVector<f64>, s: &DVector<f64>) -> Option<Self> {
        let cone = &pre.cone;
        let nb = cone.dims.len();
        let mut sc = Scaling {
            g: Vec::with_capacity(nb),
            lambda: Vec::with_capacity(nb),
            lx_inv: Vec::with_capacity(nb),
            ls_inv: Vec::with_capacity(nb),
        };
        for bi in 0..nb {
            let xm = cone.smat(x.as_slice(), bi);
            let sm = cone.smat(s.as_slice(), bi);
            let lx = xm.cholesky()?.l();
            let ls = sm.cholesky()?.l();
            let svd = (ls.transpose() * &lx).svd(false, true);
            let vt = svd.v_t?;
            let dvals = svd.singular_values;
            if dvals.iter().any(|&v| !(v > 0.0)) {
                return None;
            }
            let d = dvals.len();
            let lx_inv = lx.solve_lower_triangular(&DMatrix::identity(d, d))?;
            let ls_inv = ls.solve_lower_triangular(&DMatrix::identity(d, d))?;
            let dsq_inv = DMatrix::from_diagonal(&dvals.map(|v| 1.0 / sqrt(v)));
            let g = &lx * vt.transpose() * dsq_inv;
            sc.g.push(g);
            sc.lambda.push(dvals);
            sc.lx_inv.push(lx_inv);
            sc.ls_inv.push(ls_inv);
        }
        let m = pre.a.nrows();
        let mut at = DMatrix::zeros(m, cone.len);
        let mut row = vec![0.0; cone.len];
        for i in 0..m {
            for (bi, v) in row.iter_mut().enumerate() {
                *v = pre.a[(i, bi)];
            }
            let scaled = scale_s(cone, &sc, &row);
            at.row_mut(i).copy_from(&scaled.transpose());
        }
        let gram = &at * at.transpose();
        let chol = if m == 0 { None } else { Some(robust_cholesky(gram)?) };
        let ct = scale_s(cone, &sc, pre.c.as_slice());
        let h = &pre.b - &at * &ct;
        let mut sys = System {
            pre,
            sc,
            at,
            chol,
            ct,
            h,
            q: DVector::zeros(m),
        };
        let rhs = &sys.at * &sys.ct + &pre.b;
        sys.q = sys.solve_m(&rhs);
        Some(sys)
    }

    fn solve_m(&self, r: &DVector<f64>) -> DVector<f64> {
        match &self.chol {
            Some(c) => {
                // One step of iterative refinement.
                let x = c.solve(r);
                let res = r - &self.at * (self.at.transpose() * &x);
                x + c.solve(&res)
            }
            None => DVector::zeros(0),
        }
    }

    fn scaled_lambda_vec(&self, cone: &Cone) -> DVector<f64> {
        let blocks: Vec<DMatrix<f64>> = self.sc.lambda.iter().map(DMatrix::from_diagonal).collect();
        svec_blocks(cone, &blocks)
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        st: &Hsde,
        eta: f64,
        rt: &DVector<f64>,
        rtk: f64,
        rp: &DVector<f64>,
        rd: &DVector<f64>,
        rg: f64,
    ) -> Direction {
        let cone = &self.pre.cone;
        let rdt = scale_s(cone, &self.sc, rd.as_slice());
        let w = rt + &rdt * eta;
        let p = self.solve_m(&(-(rp * eta) - &self.at * &w));
        let num = -eta * rg - self.h.dot(&p) + self.ct.dot(&w) + rtk / st.tau;
        let den = self.h.dot(&self.q) + self.ct.dot(&self.ct) + st.kappa / st.tau;
        let dtau = num / den;
        let dy = &p + &self.q * dtau;
        let dst = -(&rdt * eta) - self.at.transpose() * &dy + &self.ct * dtau;
        let dxt = rt - &dst;
        let dx = unscale_x(cone, &self.sc, dxt.as_slice());
        let ds = -(rd * eta) - self.pre.a.transpose() * &dy + &self.pre.c * dtau;
        let dkappa = (rtk - st.kappa * dtau) / st.tau;
        Direction {
            dx,
            ds,
            dy,
            dtau,
            dkappa,
            dxt,
            dst,
        }
    }
}

/// Cholesky with a growing diagonal shift if the plain factorization fails.
fn robust_cholesky(m: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = m.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut shift = 0.0;
    for _ in 0..8 {
        let mut t = m.clone();
        for i in 0..t.nrows() {
            t[(i, i)] += shift;
        }
        if let Some(c) = t.cholesky() {
            return Some(c);
        }
        shift = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
    }
    None
}

fn svec_blocks(cone: &Cone, blocks: &[DMatrix<f64>]) -> DVector<f64> {
    let mut out = DVector::zeros(cone.len);
    for (bi, m) in blocks.iter().enumerate() {
        cone.svec_into(m, bi, out.as_mut_slice());
    }
    out
}

/// `svec(G^T smat(v) G)` per block.
fn scale_s(cone: &Cone, sc: &Scaling, v: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(cone.len);
    for (bi, g) in sc.g.iter().enumerate() {
        let m = cone.smat(v, bi);
        let t = g.transpose() * m * g;
        cone.svec_into(&t, bi, out.as_mut_slice());
    }
    out
}

/// `svec(G smat(v) G^T)` per block.
fn unscale_x(cone: &Cone, sc: &Scaling, v: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(cone.len);
    for (bi, g) in sc.g.iter().enumerate() {
        let m = cone.smat(v, bi);
        let t = g * m * g.transpose();
        cone.svec_into(&t, bi, out.as_mut_slice());
    }
    out
}

/// Maps a reduced primal/dual pair back to the original layout and checks
/// the original rows.
#[allow(clippy::too_many_arguments)]
fn finish(
    prob: &SdpProblem,
    pre: &Presolved,
    xh: &DVector<f64>,
    yh: &DVector<f64>,
    status: Status,
    iterations: usize,
    dual_residual: f64,
    gap: f64,
) -> SdpSolution {
    let f = pre.recover_free(xh);
    let mut x = Vec::with_capacity(prob.num_vars());
    x.extend(f.iter().copied());
    for (k, &v) in xh.iter().enumerate() {
        x.push(pre.cone.to_scalar(k, v));
    }
    let res = prob.row_residuals(&x).iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let y = &pre.g + &pre.ty * yh;
    let objective = prob.objective_value(&x);
    SdpSolution {
        status,
        blocks: blocks_from_x(prob, &x),
        free: f.iter().copied().collect(),
        x,
        y: y.iter().copied().collect(),
        primal_residual: res / (1.0 + prob.max_abs_rhs()),
        dual_residual,
        gap,
        objective,
        iterations,
        certificate: None,
    }
}
