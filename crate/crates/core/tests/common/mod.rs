#![allow(dead_code)]

use std::collections::BTreeMap;

use cbc_core::data::{MonomialBasis, TrajectoryData};
use cbc_core::poly::Monomial;
use cbc_core::sdp::SolverOptions;
use cbc_core::synthesis::{BoxSet, MultiplierDegrees, SemiAlgebraicSet, SynthesisProblem};

pub const U: [f64; 15] = [
    93.41, 9.446, 94.54, 42.96, 39.55, -56.78, 95.25, -98.75, -49.4, -13.04, 55.88, -60.46, 72.6, 96.68, -67.23,
];

pub const JET: [[f64; 16]; 2] = [
    [
        0.025, 0.02498, 0.02505, 0.02513, 0.02531, 0.02553, 0.02579, 0.02599, 0.02629, 0.02649, 0.02663, 0.02677,
        0.02696, 0.02709, 0.0273, 0.0276,
    ],
    [
        0.02, -0.07338, -0.0828, -0.1773, -0.2203, -0.2598, -0.203, -0.2982, -0.1994, -0.15, -0.1369, -0.1928,
        -0.1323, -0.2048, -0.3015, -0.2342,
    ],
];

pub const LORENZ: [[f64; 16]; 3] = [
    [
        1.5, 1.5, 1.501, 1.503, 1.506, 1.51, 1.515, 1.519, 1.525, 1.53, 1.534, 1.539, 1.545, 1.551, 1.557, 1.565,
    ],
    [
        1.5, 1.632, 1.679, 1.811, 1.892, 1.969, 1.949, 2.082, 2.021, 2.009, 2.034, 2.127, 2.105, 2.215, 2.35, 2.32,
    ],
    [
        1.5, 1.498, 1.497, 1.495, 1.493, 1.491, 1.49, 1.488, 1.486, 1.484, 1.483, 1.481, 1.479, 1.478, 1.476, 1.474,
    ],
];

pub fn trajectory<const N: usize>(x: &[[f64; 16]; N]) -> TrajectoryData {
    let states: Vec<Vec<f64>> = (0..16).map(|k| (0..N).map(|i| x[i][k]).collect()).collect();
    let inputs: Vec<Vec<f64>> = U.iter().map(|&u| vec![u]).collect();
    TrajectoryData::from_samples(&states, &inputs).unwrap()
}

fn monos(n: usize, text: &[&str]) -> Vec<Monomial> {
    text.iter().map(|t| Monomial::parse(t, n).unwrap()).collect()
}

fn overrides(n: usize, pairs: &[(&str, usize)]) -> BTreeMap<Monomial, usize> {
    pairs.iter().map(|(m, v)| (Monomial::parse(m, n).unwrap(), *v)).collect()
}

fn boxes(b: &[(&[f64], &[f64])]) -> SemiAlgebraicSet {
    SemiAlgebraicSet::new(b.iter().map(|(l, h)| BoxSet::new(l.to_vec(), h.to_vec())).collect()).unwrap()
}

pub fn jet_problem() -> SynthesisProblem {
    SynthesisProblem {
        basis: MonomialBasis::new(
            2,
            monos(2, &["x1", "x2", "x1^2", "x1*x2", "x2^2", "x1^3", "x1^2*x2", "x1*x2^2", "x2^3"]),
        )
        .unwrap(),
        overrides: overrides(2, &[("x1*x2", 1), ("x1^2*x2", 0), ("x1*x2^2", 1)]),
        x_set: boxes(&[(&[-10.0, -10.0], &[10.0, 10.0])]),
        x0: boxes(&[(&[0.0, -2.0], &[2.0, 2.0])]),
        xu: boxes(&[(&[-5.0, -5.0], &[-2.5, -2.5]), (&[2.5, 2.5], &[5.0, 5.0])]),
        deg_h: 2,
        multipliers: MultiplierDegrees::default(),
        epsilon: 1e-6,
        delta_rel: 1e-3,
        solver: SolverOptions::default(),
    }
}

pub fn lorenz_problem() -> SynthesisProblem {
    SynthesisProblem {
        basis: MonomialBasis::new(3, monos(3, &["x1", "x2", "x3", "x1*x2", "x2*x3", "x1*x3"])).unwrap(),
        overrides: overrides(3, &[("x1*x2", 0), ("x2*x3", 1), ("x1*x3", 2)]),
        x_set: boxes(&[(&[-12.0; 3], &[12.0; 3])]),
        x0: boxes(&[(&[0.0, -2.0, -2.0], &[2.0, 2.0, 2.0])]),
        xu: boxes(&[(&[-5.0; 3], &[-2.5; 3]), (&[2.5; 3], &[5.0; 3])]),
        deg_h: 2,
        multipliers: MultiplierDegrees::default(),
        epsilon: 1e-6,
        delta_rel: 1e-3,
        solver: SolverOptions::default(),
    }
}

pub const JET_P: [f64; 4] = [48272.6605, 23.46585, 23.46585, 161.1994];
pub const JET_ALPHA: (f64, f64) = (1.9392e5, 3.03e5);
pub const LORENZ_P: [f64; 9] = [
    636.2337, -343.2885, 208.73685, -343.2885, 1214.2754, -2.68605, 208.73685, -2.68605, 86480.554,
];
pub const LORENZ_ALPHA: (f64, f64) = (3.5776e5, 5.5035e5);

pub fn jet_p() -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(2, 2, &JET_P)
}

pub fn lorenz_p() -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(3, 3, &LORENZ_P)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs()
}
