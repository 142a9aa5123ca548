//! Factor matrices, Kronecker operators and load vectors of the space-time systems.

mod data;
mod factor;
mod kron;
mod operators;

pub use data::{
    forcing_vector, load_vectors, manufactured_by_name, DataSource, FnState, LoadVectors, ManufacturedState,
    ProblemData, SineCubic, ZeroState,
};
pub use factor::{assemble, deriv, masked_mass, mass, prolongation, stiffness, FactorMatrix, Form};
pub use kron::KroneckerOp;
pub use operators::{
    assemble_b, assemble_fosls, assemble_observation, assemble_riesz_y, assemble_trace0, FoslsOperators,
    HeatOperator, TensorGrid, TensorSpace,
};
