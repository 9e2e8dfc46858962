//! Analytical performance model for stencil computations on CUDA Cores,
//! Tensor Cores and Sparse Tensor Cores.
//!
//! The model extends the roofline with two overheads of mapping a stencil
//! onto matrix units: the sparsity factor `S` of the padded MMA operand and
//! the redundancy factor `alpha` of fusing `t` time steps into one enlarged
//! kernel. From these it classifies a workload into one of four bottleneck
//! scenarios and decides whether the matrix unit pays off.
//!
//! Modules:
//! - [`kernel`]: stencil kernels, temporal fusion and `alpha`
//! - [`transform`]: MMA operand construction, `S`, 2:4 sparsity
//! - [`roofline`]: metrics, roofline points, scenarios, sweet spot
//! - [`simulator`]: reference executor validating the counting model
//! - [`hwdb`]: hardware profiles
//! - [`analysis`]: single-configuration reports, sweeps, chart data, self-check

pub mod analysis;
pub mod hwdb;
pub mod kernel;
pub mod roofline;
pub mod simulator;
pub mod transform;

pub use analysis::{AnalysisError, AnalysisReport, AnalysisRequest};
pub use hwdb::{HardwareProfile, ProfileFile, UnitPeaks};
pub use kernel::{FusedKernel, Kernel, Offset, Shape};
pub use roofline::{
    Bound, DataType, RooflinePoint, Scenario, ScenarioReport, Unit, Verdict, WorkloadMetrics,
};
pub use simulator::{ExecutionTally, Grid};
pub use transform::{MmaShape, SchemeKind, Sparsity, TransformScheme, TransformedOperands};
