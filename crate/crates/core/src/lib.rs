//! Partial-boundary electrical impedance tomography in two dimensions:
//! simulated ND maps, partial-boundary data, Born scattering transforms and
//! D-bar reconstruction.

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod dbar;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod fit;
pub mod forward;
pub mod gmres;
pub mod mesh;
pub mod ndmatrix;
pub mod partial;
pub mod phantom;
pub mod scattering;

pub use boundary::{fourier_basis, inner_product, zero_mean_project, BoundaryGrid, BoundaryTrace, FourierIndexSet};
pub use error::{Error, Result};
pub use forward::{analytic_nd_laplace, nd_matrix, solve_neumann};
pub use ndmatrix::{add_noise, combine_matrices, difference_matrix, MatrixKind, NDMatrix};
pub use partial::{
    apply_partial_map, extrapolate_difference, partial_nd_matrix, restrict_trace, GammaArc, PartialMap, PartialMode,
};
pub use phantom::{build_phantom, ConductivityField, PhantomSpec};
