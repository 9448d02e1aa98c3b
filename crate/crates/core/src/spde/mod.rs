//! Time stepping of the microscopic SPDE on `D_ε` and of the homogenized
//! SPDE on `D`, driven by a shared truncated Wiener noise.

mod noise;
mod path;
mod problem;
mod system;

pub use noise::{
    coarse_increments, sine_eigenvalue, sine_mode, sine_mode_indices, wiener_increments, NoiseModel, ScalarField,
};
pub use path::{energy_diagnostics, increments, run_ensemble, simulate_path, EnergyDiagnostics, SamplePath};
pub use problem::{Equation, ProblemSpec, SourceField};
pub use system::{SolverKind, SpdeSystem};
