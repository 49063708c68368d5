//! Two-dimensional finite-element forward solver for electrical impedance
//! tomography with the complete electrode model (CEM) and its shunt limit.
//!
//! The pipeline is mesh → assembly → solve → analysis, with [`experiments`]
//! driving contact-impedance and mesh-size sweeps on top.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod assembly;
pub mod error;
pub mod experiments;
pub mod mesh;
pub mod solver;
pub mod sparse;

pub use analysis::{fit_loglog, norms, spectral_norm, ErrorBundle, NormMatrices, Norms, SlopeFit};
pub use assembly::{
    assemble_cem, assemble_load, assemble_shunt, CemSystem, ConductivityField, DofMap, LoadVector, ShuntSystem, Tensor2,
};
pub use error::{Error, Result};
pub use mesh::{prolongation, BoundaryEdge, EdgeTag, ElectrodeLayout, ElectrodePattern, Mesh};
pub use solver::{
    condition_estimate, electrode_currents, measurement_matrix, CemSolver, ConditionOptions, FESolution, ForwardModel,
    ModelKind, ShuntSolver, SolverOptions,
};
pub use sparse::CsrMatrix;
