//! Solvers for continuous-time linear-quadratic mean-field games: the two
//! Riccati equations by model-based policy and value iteration, and the same
//! iterations driven only by sampled state and input data of one agent.

pub mod datamat;
pub mod error;
pub mod io;
pub mod learn_pi;
pub mod learn_vi;
pub mod linalg;
pub mod model;
pub mod simulate;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` instantiations of the generic core types.
pub mod f64 {
    pub type SymMatrix = crate::linalg::SymMatrix<f64>;
    pub type SystemModel = crate::model::SystemModel<f64>;
    pub type GainPair = crate::model::GainPair<f64>;
    pub type RiccatiPair = crate::model::RiccatiPair<f64>;
    pub type PiSolution = crate::model::PiSolution<f64>;
    pub type ViSolution = crate::model::ViSolution<f64>;
    pub type TimeGrid = crate::simulate::TimeGrid<f64>;
    pub type MeanTrajectory = crate::simulate::MeanTrajectory<f64>;
    pub type PopulationRun = crate::simulate::PopulationRun<f64>;
    pub type DataMatrices = crate::datamat::DataMatrices<f64>;
}
