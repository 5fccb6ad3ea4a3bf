//! The two benchmark games with their published reference solutions.

use nalgebra::{dmatrix, DMatrix, DVector};

use crate::linalg::SymMatrix;
use crate::model::{GainPair, RiccatiPair, SystemModel};
use crate::scalar::Real;

/// Published four-decimal reference values.
#[derive(Debug, Clone)]
pub struct ReferenceSolution<T: Real> {
    pub p: DMatrix<T>,
    pub k: DMatrix<T>,
    pub y: DMatrix<T>,
    pub k_y: DMatrix<T>,
}

impl<T: Real> ReferenceSolution<T> {
    pub fn riccati(&self) -> RiccatiPair<T> {
        RiccatiPair {
            p: SymMatrix::from_matrix(self.p.clone()).expect("square reference"),
            y: SymMatrix::from_matrix(self.y.clone()).expect("square reference"),
        }
    }

    pub fn gains(&self) -> GainPair<T> {
        GainPair { k: self.k.clone(), k_y: self.k_y.clone() }
    }
}

/// A benchmark game together with the initial gains and initial state used
/// for its policy-iteration experiment.
#[derive(Debug, Clone)]
pub struct Example<T: Real> {
    pub name: &'static str,
    pub model: SystemModel<T>,
    pub k0: DMatrix<T>,
    pub k0_y: DMatrix<T>,
    pub x0: DVector<T>,
    pub reference: ReferenceSolution<T>,
}

fn cast<T: Real>(m: DMatrix<f64>) -> DMatrix<T> {
    m.map(T::lit)
}

/// Unstable open loop, two states, one input.
pub fn example1<T: Real>() -> Example<T> {
    let model = SystemModel::new(
        cast(dmatrix![5.0, 3.0; 10.0, 12.0]),
        cast(dmatrix![0.0; 1.0]),
        cast(dmatrix![0.1, 0.1; 0.1, 0.1]),
        SymMatrix::scaled_identity(2, T::lit(10.0)),
        SymMatrix::identity(1),
        T::lit(0.01),
    )
    .expect("example 1 is well formed");
    Example {
        name: "example1",
        model,
        k0: cast(dmatrix![35.0, 25.0]),
        k0_y: cast(dmatrix![35.0, 25.0]),
        x0: DVector::from_element(2, T::one()),
        reference: ReferenceSolution {
            p: cast(dmatrix![232.2887, 59.3007; 59.3007, 34.5712]),
            k: cast(dmatrix![59.3007, 34.5712]),
            y: cast(dmatrix![207.1460, 56.5767; 56.5767, 33.9800]),
            k_y: cast(dmatrix![56.5767, 33.9800]),
        },
    }
}

/// Stable open loop with `A − 0.5ρI` Hurwitz, three states, one input, two
/// noise channels. Here `Y* = 0` and `K*_Y = 0`.
pub fn example2<T: Real>() -> Example<T> {
    let model = SystemModel::new(
        cast(dmatrix![
            -5.0, 1.0, -0.0751;
            0.0, -0.6250, -39.2699;
            -0.0045, 0.0, -0.4127
        ]),
        cast(dmatrix![1.4542; -0.0154; 0.4127]),
        cast(dmatrix![3.0, 0.1; 0.5, -2.0; 1.0, 0.0]),
        SymMatrix::from_diagonal(&[T::lit(5.0), T::one(), T::one()]),
        SymMatrix::identity(1),
        T::lit(0.01),
    )
    .expect("example 2 is well formed");
    Example {
        name: "example2",
        model,
        k0: cast(dmatrix![-1.0, -1.0, 14.0]),
        k0_y: DMatrix::zeros(1, 3),
        x0: DVector::from_vec(vec![-T::one(), T::zero(), T::one()]),
        reference: ReferenceSolution {
            p: cast(dmatrix![
                0.4976, 0.1185, -1.3229;
                0.1185, 0.3377, -2.5877;
                -1.3229, -2.5877, 36.5204
            ]),
            k: cast(dmatrix![0.1758, -0.9008, 13.1881]),
            y: DMatrix::zeros(3, 3),
            k_y: DMatrix::zeros(1, 3),
        },
    }
}
