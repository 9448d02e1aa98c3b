//! Homogenization of the stochastic heat equation on periodically perforated
//! domains.
//!
//! The crate computes the homogenized coefficients of a perforated periodic
//! medium from its cell problems, time-steps the microscopic equation on `D_ε`
//! and the effective equation on `D` with shared Wiener increments, and
//! measures how the two agree as `ε → 0` (weak pairings, strong `L²` gaps,
//! energy functionals, long-time moments).
//!
//! All numerical code is generic over [`Real`] (`f32`/`f64`); the aliases at
//! the crate root fix the scalar to `f64`.

pub mod cell_problem;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod scalar;
pub mod spde;
pub mod statistics;

pub use error::{Error, Result};
pub use scalar::Real;

pub type PeriodicCell = geometry::PeriodicCell<f64>;
pub type CoefficientField = geometry::CoefficientField<f64>;
pub type Hole = geometry::Hole<f64>;
pub type TriMesh = geometry::TriMesh<f64>;
pub type CellMesh = geometry::CellMesh<f64>;
pub type PerforatedMesh = geometry::PerforatedMesh<f64>;
pub type Rect = geometry::Rect<f64>;
pub type SparseOperator = fem::SparseOperator<f64>;
pub type CellSolution = cell_problem::CellSolution<f64>;
pub type NoiseModel = spde::NoiseModel<f64>;
pub type ProblemSpec = spde::ProblemSpec<f64>;
pub type SpdeSystem = spde::SpdeSystem<f64>;
pub type SamplePath = spde::SamplePath<f64>;
pub type Estimate = statistics::Estimate<f64>;
pub type EnsembleResult = statistics::EnsembleResult<f64>;
pub type EnsembleSeries = statistics::EnsembleSeries<f64>;
pub type EnergySeries = statistics::EnergySeries<f64>;
pub type Comparison = statistics::Comparison<f64>;
pub type StationaryReport = statistics::StationaryReport<f64>;
