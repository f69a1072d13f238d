//! Surrogate modelling of power-grid flows under topology perturbations.
//!
//! The crate bundles the physical reference (Newton-Raphson AC power flow and
//! its DC linearization), a small dense-network toolkit, the LEAP net and
//! residual baseline architectures, and the source/target dataset protocol
//! used to measure regular and super-generalization.

pub mod cases;
pub mod datagen;
mod error;
pub mod grid;
pub mod leapnet;
pub mod nn;
pub mod powerflow;

pub use error::{Error, Result};
pub use grid::{
    apply_topology, enumerate_actions, parse_matpower_case, ActionConfig, ActionDictionary, GridCase, TopologyVector,
    UnaryAction,
};
pub use leapnet::{BaselineNet, LeapConfig, LeapNet, Model, ModelKind, Standardizer, TrainConfig};
pub use nn::Tensor2;
pub use powerflow::{ac_solve, dc_solve, oracle, AcOracle, AcSolution, FlowVector, InjectionSample};
