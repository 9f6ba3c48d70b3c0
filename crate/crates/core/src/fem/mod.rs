//! Q1 finite elements on uniform Cartesian fine meshes.

pub mod assembly;
pub mod functions;
pub mod grid;
pub mod harmonic;
pub mod sparse;

pub use assembly::{
    assemble_load_fn, assemble_load_piecewise, assemble_mass, assemble_stiffness, assemble_stiffness_operator,
    assemble_unit_stiffness,
};
pub use functions::{p0_projection_matrix, project_p0, project_p0_fn, FineFunction, P0Function};
pub use grid::FineRegion;
pub use harmonic::{harmonic_extension, NodeKind, PatchSystem};
pub use sparse::{solve_dirichlet, CsrMatrix, SparseOperator};
