//! Semiclassical laboratory for spin-1/2 Pauli Hamiltonians: classical flows
//! with SU(2) spin transport, matrix-valued Weyl quantization, spectral
//! statistics and phase-space transforms.

pub mod error;
pub mod io;
pub mod mat2;
mod ode;
pub mod phase_flow;
pub mod skew_product;
pub mod spectra;
pub mod spin_transport;
pub mod symbol;
pub mod weyl;
pub mod wigner;

pub use error::{Error, Result};
pub use mat2::{Mat2, PauliAxis, C64};
pub use ode::Tolerance;
pub use phase_flow::{
    integrate_flow, vector_field, BoundingBox, HamiltonianModel, PhasePoint, SpinCoupling,
    StepControl, Trajectory, ValidationReport,
};
pub use skew_product::{
    birkhoff_average, ergodicity_report, evolve_extended, haar_adjoint_average, liouville_average,
    sample_haar, sample_liouville, ExtendedPoint, ShellSampler,
};
pub use spin_transport::{
    abelian_closed_form, compose_transport, integrate_spin_transport, transport, SU2Element,
    TransportPath,
};
pub use symbol::{MatrixSymbol, SupportHint};
pub use weyl::{
    egorov_symbol, matrix_poisson_bracket, moyal_star, transport_residual, weyl_quantize, GridSpec,
    WeylOperator,
};
