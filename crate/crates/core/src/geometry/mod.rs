//! Cell geometry, meshing of the cell and of the perforated domain, and
//! extension operators from `D_ε` to `D`.

mod cell;
mod cell_mesh;
mod mesh;
mod perforated;

pub use cell::{sym_min_eigenvalue, CoefficientField, Hole, PeriodicCell};
pub use cell_mesh::{build_cell_mesh, CellMesh};
pub use mesh::{EdgeTag, PointLocator, TaggedEdge, TriMesh};
pub use perforated::{build_perforated_mesh, rect_mesh, HolePatch, PerforatedMesh, Rect};
