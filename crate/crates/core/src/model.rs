//! Polynomial systems `x+ = A M(x) + B u`, used to generate synthetic data
//! and as the shape of the identified simulation oracle.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::data::{DataError, MonomialBasis, TrajectoryData};

#[derive(Debug, Clone, PartialEq)]
pub struct PolySystem {
    pub basis: MonomialBasis,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl PolySystem {
    pub fn new(basis: MonomialBasis, a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, DataError> {
        let n = basis.nvars();
        if a.nrows() != n || a.ncols() != basis.len() || b.nrows() != n {
            return Err(DataError::Schema(alloc::format!(
                "A is {}x{}, B is {}x{}; expected {n}x{} and {n}xm",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                basis.len()
            )));
        }
        Ok(PolySystem { basis, a, b })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        &self.a * self.basis.eval(x) + &self.b * DVector::from_row_slice(u)
    }

    /// Drive the system with `inputs` from `x0`; `inputs.len()` samples.
    pub fn rollout(&self, x0: &[f64], inputs: &[Vec<f64>]) -> Result<TrajectoryData, DataError> {
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(x0.to_vec());
        for u in inputs {
            let next = self.step(states.last().expect("non-empty"), u);
            states.push(next.iter().copied().collect());
        }
        TrajectoryData::from_samples(&states, inputs)
    }
}
