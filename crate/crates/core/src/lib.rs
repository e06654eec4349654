//! Fixed-step co-simulation of FMI-lite components.
//!
//! A multi-model (`mm`) and co-simulation configuration (`coe`) are turned
//! into a [`SimulationPlan`], which can be interpreted in-process or exported
//! as a C program and compiled. Design space exploration runs many
//! co-simulations of one plan with different parameter values and ranks the
//! results.

pub mod bench;
pub mod codegen;
pub mod dse;
pub mod fmu;
pub mod master;
pub mod models;
pub mod multimodel;

pub use codegen::{compile_project, export_c_project, run_native, GeneratedProject, Toolchain, ToolchainReport};
pub use dse::{enumerate_designs, genetic_search, run_dse, DesignSpace, DseReport};
pub use fmu::{Instance, ModelDescription, ScalarVariable, Value, ValueReference, VariableKind};
pub use master::{
    build_plan, interpret_plan, parse_plan, serialize_plan, simulate, ResultsTable, RunError,
    RuntimeConfig, SimulationPlan,
};
pub use multimodel::{CoSimConfig, MultiModel, MultiModelConfig};
