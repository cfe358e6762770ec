//! Elimination of free variables and redundant rows.
//!
//! With free columns `F`, PSD part `A_X` (in svec coordinates) and right-hand
//! side `b`, an SVD `F = U S V^T` splits the rows: the part along `U1` fixes
//! the free values, the part along `U2` constrains only the PSD blocks.
//! Whitening `U2^T A_X` leaves an equivalent system with orthonormal rows.

use alloc::vec::Vec;
use core::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};

use super::SdpProblem;
use crate::math::sqrt;

const FREE_RANK_RTOL: f64 = 1e-13;
const ROW_RANK_RTOL: f64 = 1e-7;

/// svec layout of the PSD blocks.
#[derive(Debug, Clone)]
pub(crate) struct Cone {
    pub dims: Vec<usize>,
    pub offsets: Vec<usize>,
    pub len: usize,
    pub diag: Vec<bool>,
}

impl Cone {
    pub fn new(dims: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut diag = Vec::new();
        let mut acc = 0;
        for &d in dims {
            offsets.push(acc);
            acc += d * (d + 1) / 2;
            for i in 0..d {
                for j in i..d {
                    diag.push(i == j);
                }
            }
        }
        Cone {
            dims: dims.to_vec(),
            offsets,
            len: acc,
            diag,
        }
    }

    /// Sum of block orders (barrier parameter).
    pub fn degree(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn smat(&self, v: &[f64], b: usize) -> DMatrix<f64> {
        let d = self.dims[b];
        let mut m = DMatrix::zeros(d, d);
        let mut k = self.offsets[b];
        for i in 0..d {
            m[(i, i)] = v[k];
            k += 1;
            for j in i + 1..d {
                let e = v[k] / SQRT_2;
                m[(i, j)] = e;
                m[(j, i)] = e;
                k += 1;
            }
        }
        m
    }

    pub fn svec_into(&self, m: &DMatrix<f64>, b: usize, out: &mut [f64]) {
        let d = self.dims[b];
        let mut k = self.offsets[b];
        for i in 0..d {
            out[k] = m[(i, i)];
            k += 1;
            for j in i + 1..d {
                out[k] = SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]);
                k += 1;
            }
        }
    }

    pub fn identity(&self) -> DVector<f64> {
        DVector::from_iterator(self.len, self.diag.iter().map(|&d| if d { 1.0 } else { 0.0 }))
    }

    /// svec coordinate to problem scalar.
    pub fn to_scalar(&self, k: usize, v: f64) -> f64 {
        if self.diag[k] {
            v
        } else {
            v / SQRT_2
        }
    }
}

pub(crate) enum Outcome {
    Reduced,
    Infeasible(Vec<f64>),
    Unbounded,
}

pub(crate) struct Presolved {
    pub cone: Cone,
    /// Reduced rows with orthonormal rows, `r x N`.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    /// Original PSD columns in svec coordinates, `m x N`.
    pub ax: DMatrix<f64>,
    pub b_orig: DVector<f64>,
    /// `f = free_map * (b - A_X x)`, all in equilibrated rows.
    pub free_map: DMatrix<f64>,
    pub af: DMatrix<f64>,
    /// Original multipliers are `g + ty * y`.
    pub ty: DMatrix<f64>,
    pub g: DVector<f64>,
    pub outcome: Outcome,
}

impl Presolved {
    pub fn recover_free(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.free_map.nrows() == 0 {
            return DVector::zeros(0);
        }
        let rhs = &self.b_orig - &self.ax * x;
        let mut f = &self.free_map * &rhs;
        // The free block inherits the conditioning of the data; refine.
        for _ in 0..2 {
            let r = &rhs - &self.af * &f;
            f += &self.free_map * r;
        }
        f
    }
}

pub(crate) fn presolve(prob: &SdpProblem, feas_tol: f64) -> Presolved {
    let cone = Cone::new(&prob.blocks);
    let m = prob.rows.len();
    let nf = prob.num_free;
    let n = cone.len;
    let mut af = DMatrix::zeros(m, nf);
    let mut ax = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    // Row equilibration; multipliers of the original rows are `d * y`.
    let mut d = DVector::from_element(m, 1.0);
    for (i, r) in prob.rows.iter().enumerate() {
        let big = r.coeffs.iter().fold(0.0f64, |a, &(_, c)| a.max(c.abs()));
        if big > 0.0 {
            d[i] = 1.0 / big;
        }
        b[i] = r.rhs * d[i];
        for &(j, c) in &r.coeffs {
            let c = c * d[i];
            if j < nf {
                af[(i, j)] += c;
            } else {
                let k = j - nf;
                ax[(i, k)] += if cone.diag[k] { c } else { c / SQRT_2 };
            }
        }
    }
    let mut cf = DVector::zeros(nf);
    let mut cx = DVector::zeros(n);
    for &(j, c) in &prob.objective {
        if j < nf {
            cf[j] += c;
        } else {
            let k = j - nf;
            cx[k] += if cone.diag[k] { c } else { c / SQRT_2 };
        }
    }

    // Split rows against the free columns.
    let (u2, free_map, g, unbounded) = if nf == 0 || m == 0 {
        (DMatrix::identity(m, m), DMatrix::zeros(nf, m), DVector::zeros(m), cf.amax() > 0.0)
    } else {
        let padded = if m > nf {
            let mut p = DMatrix::zeros(m, m);
            p.view_mut((0, 0), (m, nf)).copy_from(&af);
            p
        } else {
            af.clone()
        };
        let svd = padded.svd(true, true);
        let u = svd.u.expect("u requested");
        let vt = svd.v_t.expect("v requested");
        let sv = &svd.singular_values;
        let s1 = sv[0];
        let r = sv.iter().filter(|&&s| s1 > 0.0 && s > s1 * FREE_RANK_RTOL).count();
        let u1 = u.columns(0, r).into_owned();
        let v1 = vt.rows(0, r).columns(0, nf).transpose();
        let sinv = DVector::from_iterator(r, sv.iter().take(r).map(|s| 1.0 / s));
        let free_map = &v1 * DMatrix::from_diagonal(&sinv) * u1.transpose();
        let g = &u1 * DMatrix::from_diagonal(&sinv) * (v1.transpose() * &cf);
        let proj: DVector<f64> = &v1 * (v1.transpose() * &cf);
        let unbounded = (&cf - proj).amax() > 1e-9 * (1.0 + cf.amax());
        let u2 = u.columns(r, m - r).into_owned();
        (u2, free_map, g, unbounded)
    };

    let c = &cx - ax.transpose() * &g;
    let a1 = u2.transpose() * &ax;
    let b1 = u2.transpose() * &b;
    let k = a1.nrows();

    let mut pre = Presolved {
        a: DMatrix::zeros(0, n),
        b: DVector::zeros(0),
        c,
        ax,
        b_orig: b,
        free_map,
        af,
        ty: DMatrix::zeros(m, 0),
        g: g.component_mul(&d),
        cone,
        outcome: Outcome::Reduced,
    };
    if k == 0 {
        if unbounded {
            pre.outcome = Outcome::Unbounded;
        }
        return pre;
    }

    let tol = feas_tol * (1.0 + pre.b_orig.amax());
    let (a, bred, ty, resid) = if n == 0 {
        (DMatrix::zeros(0, 0), DVector::zeros(0), DMatrix::zeros(m, 0), b1.clone())
    } else {
        let rb = row_basis(&a1);
        let bred = &rb.map * &b1;
        let resid = &rb.null * (rb.null.transpose() * &b1);
        let ty = &u2 * rb.map.transpose();
        (rb.rows, bred, ty, resid)
    };
    if resid.norm() > tol {
        let cert = &u2 * &resid;
        let scale = cert.dot(&pre.b_orig);
        pre.outcome = Outcome::Infeasible(cert.iter().zip(d.iter()).map(|(v, di)| v * di / scale).collect());
        return pre;
    }
    if unbounded {
        pre.outcome = Outcome::Unbounded;
    }
    pre.a = a;
    pre.b = bred;
    pre.ty = DMatrix::from_diagonal(&d) * ty;
    pre
}

struct RowBasis {
    /// Orthonormal rows spanning the row space, `rows = map * a`.
    rows: DMatrix<f64>,
    map: DMatrix<f64>,
    /// Orthonormal basis of the left null space.
    null: DMatrix<f64>,
}

/// Row-space basis from the eigen-decomposition of `a a^T`, repeated once
/// on the result to restore orthonormality to working precision.
/// (Dense SVD loses accuracy here when singular values cluster.)
fn row_basis(a: &DMatrix<f64>) -> RowBasis {
    let (map1, null) = gram_whitening(a, true);
    let rows1 = &map1 * a;
    let (map2, _) = gram_whitening(&rows1, false);
    let map = &map2 * map1;
    RowBasis {
        rows: &map * a,
        map,
        null,
    }
}

/// `(diag(l^-1/2) W_keep^T, W_drop)` for `a a^T = W diag(l) W^T`.
fn gram_whitening(a: &DMatrix<f64>, truncate: bool) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = a.nrows();
    let eig = (a * a.transpose()).symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let l1 = eig.eigenvalues[order[0]].max(0.0);
    let cut = l1 * ROW_RANK_RTOL * ROW_RANK_RTOL;
    let keep = if truncate {
        order.iter().filter(|&&i| l1 > 0.0 && eig.eigenvalues[i] > cut).count()
    } else {
        k
    };
    let mut map = DMatrix::zeros(keep, k);
    for (r, &i) in order.iter().take(keep).enumerate() {
        let s = 1.0 / sqrt(eig.eigenvalues[i]);
        for j in 0..k {
            map[(r, j)] = eig.eigenvectors[(j, i)] * s;
        }
    }
    let mut null = DMatrix::zeros(k, k - keep);
    for (c, &i) in order.iter().skip(keep).enumerate() {
        null.set_column(c, &eig.eigenvectors.column(i));
    }
    (map, null)
}
