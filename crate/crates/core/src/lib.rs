//! Dense-matrix simulation of open-system quantum thermodynamics on finite
//! tensor-product Hilbert spaces: tripartite system/control/environment
//! models, eigenoperator (symmetric-structure) master equations, dynamical
//! invariant frames for driven systems, side-by-side thermodynamic flux
//! accountings with first-law audits, and an analytic Jaynes-Cummings engine.
//!
//! Units: hbar = k_B = 1 everywhere; frequencies are angular.

pub mod error;
pub mod policy;
pub mod linalg;
pub mod operator;
pub mod states;
pub mod model;
pub mod modelfile;
pub mod eigenop;
pub mod generator;
pub mod propagate;
pub mod semiclassical;
pub mod jc;
pub mod thermo;

pub use error::QError;
pub use policy::NumericPolicy;
pub use linalg::{CMat, CVec};
pub use operator::{
    commutator, anticommutator, expectation, matrix_exponential_unitary, partial_trace,
    partial_trace_op, tensor_product, DensityOperator, HilbertLayout, Operator,
};
pub use model::{
    assemble_local, assemble_global, coherent_state, thermal_state, validate_thermal_operation,
    GlobalModel, LocalModel, ThermalOperationSpec, ThermalOpReport,
};
pub use modelfile::{fnv1a, load_model, parse_model, ModelFile, ModelKind, ScenarioParams};
pub use eigenop::{
    decompose, decompose_tolerant, degeneracy_report, free_map, lift_degeneracy,
    product_decompose, DegeneracyReport, EigenoperatorSet, FactoredEigenoperator, FactoredSet,
    NonInvariantOp,
};
pub use generator::{
    build_global_device, build_local_device, build_local_system, build_markovian,
    build_sc_global, instantaneous_attractor, invariant_block, thermo_split, Attractor,
    BathSpectrum, Channel, Drive, Generator, InvariantBlock, JumpOp, KineticSchedule, RateFn,
    SpectrumKind, StructureTag, ThermoSplit,
};
pub use propagate::{evolve_generator, evolve_unitary, reduced_trajectory, Grid, Trajectory};
pub use semiclassical::{
    build_invariant_frame, build_sc_hamiltonian, correlation_correction,
    correlation_correction_direct, extract_fields, CorrelationDiagnostics, FieldSet,
    InvariantFrame, ScHamiltonian,
};
pub use jc::{figure2_scan, JCModel, JcRun};
pub use thermo::{
    autonomous_global_fluxes, autonomous_heat, autonomous_local_heat_flux,
    autonomous_local_power_flux, autonomous_work, dynamical_map_heat_flux, entropy_production,
    entropy_suite, external_fluxes, first_law_audit, sc_global_heat_flux, semiclassical_fluxes,
    spohn_functional, Approach, ApproachSeries, FluxRecord, FluxSeries,
};
