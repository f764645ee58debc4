//! Phase-space discretization, distribution storage and moments.

pub mod field;
pub mod grid;
pub mod io;
pub mod moments;

pub use field::{DistributionField, OperatorOutput};
pub use grid::{
    normalize_activity, ActivityGrid, Boundary, ExitSegment, FaceKind, PhaseGrid, Side, SpaceGrid, VelocityGrid,
};
pub use moments::{density, moments, MomentField};
