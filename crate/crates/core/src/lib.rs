//! Deterministic discrete-velocity solver for kinetic systems of active
//! particles at two scales: functional subsystems (FS) of a-particles with
//! position, velocity and activity, and sub-functional subsystems (SFS) of
//! sa-particles that mediate their interactions.
//!
//! The pipeline is: build a [`Model`] (grids, sensitivity domains, kernels),
//! then integrate with [`integrator::run`] (free streaming plus collisions)
//! or [`integrator::run_homogeneous`] (activity only). [`config`] parses TOML
//! systems, [`scenarios`] ships ready-made ones, and [`oracle`] is a
//! brute-force reference used by the test suites.
//!
//! Everything is generic over the scalar type; [`Field64`], [`Model64`] and
//! friends fix it to `f64`.

// NaN-rejecting checks are written as `!(x >= 0)` on purpose; dense
// index loops mirror the phase-space layout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod geometry;
pub mod integrator;
pub mod kernels;
pub mod model;
pub mod operators;
pub mod oracle;
pub mod pipeline;
pub mod scalar;
pub mod scenarios;
pub mod state;
pub mod transport;
pub mod verify;

pub use config::{Mode, Setup, SystemConfig};
pub use error::{Error, Result, Scale};
pub use geometry::{MembershipTable, SensitivityDomain, Weighting};
pub use integrator::{Frame, IntegratorConfig, SimulationState, Stepper};
pub use kernels::KernelSet;
pub use model::{HomogeneousModel, Model};
pub use operators::{full_rhs, homogeneous_rhs, OperatorKind, Rhs};
pub use scalar::{Scalar, Vec2};
pub use state::{
    ActivityGrid, Boundary, DistributionField, MomentField, OperatorOutput, PhaseGrid, SpaceGrid, VelocityGrid,
};
pub use transport::TransportScheme;

pub type Field64 = DistributionField<f64>;
pub type Field32 = DistributionField<f32>;
pub type Grid64 = PhaseGrid<f64>;
pub type Grid32 = PhaseGrid<f32>;
pub type Model64 = Model<f64>;
pub type Model32 = Model<f32>;
pub type Kernels64 = KernelSet<f64>;
pub type Kernels32 = KernelSet<f32>;
pub type State64 = SimulationState<f64>;
pub type State32 = SimulationState<f32>;
