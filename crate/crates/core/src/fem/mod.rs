//! P1 finite-element building blocks.

mod assemble;
mod curve;
mod dofmap;
mod linsolve;
mod p1;
mod quadrature;
mod sparse;

pub use assemble::{
    assemble_volume, kernel_pattern, local_mass, local_stiffness, mass_matrix, stiffness_matrix, Assembled,
    ElementBlock, ElementKernel, ScalarKernel, SKIP,
};
pub use curve::{
    assemble_boundary_curve, curve_mass, curve_operator, curve_stiffness, segment_mass, segment_stiffness,
    CurveLocal,
};
pub use dofmap::{Block, DofMap};
pub use linsolve::{solve_sparse, LuSolver};
pub use p1::{element_geometry, p1_gradients, ElementGeometry};
pub use quadrature::{quadrature_triangle, QuadPoint};
pub use sparse::{apply_dirichlet, Pattern, SparseMatrix};
