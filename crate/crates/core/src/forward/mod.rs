//! Forward models: Darcy flow, the 1D source problem, observation
//! functionals and the composite parameter-to-data map.

mod composite;
mod darcy;
mod observe;
mod source1d;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use composite::{CoefficientMap, FieldParam, ForwardModel, Parameterization, Physics};
pub use darcy::{
    dirichlet_outflow, solve_darcy, Boundary, DarcyProblem, Layer, LinearSolver, ScalarFn, Source,
};
pub use observe::{
    equally_spaced_points, lattice_centers, mollified_functionals, observe, point_functionals,
    synthesize_data, Functional, NoiseLevel, ObservationModel,
};
pub use source1d::{solve_source_1d, SourceProblem1D};

/// A parameter-to-observation map evaluated member by member.
pub trait ForwardMap: Sync {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// `G(x) = A x + b`.
#[derive(Debug, Clone)]
pub struct LinearMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let offset = DVector::zeros(matrix.nrows());
        LinearMap { matrix, offset }
    }
}

impl ForwardMap for LinearMap {
    fn input_len(&self) -> usize {
        self.matrix.ncols()
    }

    fn output_len(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_len() {
            return Err(Error::DimensionMismatch {
                context: "linear map input",
                expected: self.input_len(),
                found: x.len(),
            });
        }
        let y = &self.matrix * DVector::from_column_slice(x) + &self.offset;
        Ok(y.as_slice().to_vec())
    }
}
