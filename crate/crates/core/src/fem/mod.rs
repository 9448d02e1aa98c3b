//! Piecewise-linear finite elements: DOF maps, sparse operators and assembly,
//! with Krylov solvers and sparse Cholesky factors for the linear systems.

mod assembly;
mod cg;
mod cholesky;
mod dofmap;
mod nested;
mod sparse;

pub use assembly::{
    assemble_mass, assemble_stiffness, element_mass_form, element_stiffness, energy_norm_sq, l2_inner,
    l2_pairing, p1_gradients,
};
pub use cg::{
    smallest_generalized_eigenvalue, solve_general, solve_spd, solve_spd_from, CgSolution, LinearOperator, DEFAULT_TOL,
};
pub use cholesky::{reverse_cuthill_mckee, EnvelopeCholesky};
pub use dofmap::DofMap;
pub use nested::{nested_dissection, SparseCholesky};
pub(crate) use assembly::quadrature_points;
pub use sparse::SparseOperator;
