//! Spacelike graphs in warped-product spacetimes `-dt^2 + f(t)^2 g` over a
//! flat torus or a round sphere: warping functions, discrete fiber calculus,
//! graph geometry, energy conditions and numerical experiments.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

/// Crate version, recorded in run reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod conditions;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod mesh;
pub mod presets;
pub mod warp;

pub use conditions::{ConditionName, ConditionVerdict, InequalityClassification, InequalityVerdict};
pub use error::{Error, Result};
pub use experiments::{FieldRecipe, SolverConfig};
pub use graph::{EnergyReport, IdentityName, Order, ResidualReport, ShapeOperator, SpacelikeGraph};
pub use mesh::{
    AnalyticField, FiberKind, FiberMesh, FiberSpec, Metric, MetricField, Parity, Prolongation, ScalarField, VectorField,
};
pub use presets::{catalog, preset, Preset, PresetHypotheses};
pub use warp::{IntervalSpec, WarpFamily, WarpSpec, WarpValues, WarpingFunction};
