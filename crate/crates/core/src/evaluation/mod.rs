//! Accuracy against ground truth: rigid alignment, surface deviation and
//! the light-map coverage statistic.

pub mod coverage;
pub mod deviation;
pub mod icp;

pub use coverage::{back_wall, coverage_curve, CoverageCurve};
pub use deviation::{mesh_deviation, mesh_deviation_masked, DeviationReport};
pub use icp::{icp_align, kabsch, IcpParams, IcpResult};
