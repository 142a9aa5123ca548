//! Uniform 1D meshes, polynomial bases and quadrature for the tensor-product
//! space-time discretization.

mod mesh;
mod quadrature;
mod space;

pub use mesh::{Interval1D, ObservationWindow};
pub use quadrature::{composite, QuadRule};
pub use space::{
    build_space, legendre_orthonormalize, BasisTable, Boundary, Continuity, LocalBasis, SpaceDesc,
    MAX_DEGREE,
};
