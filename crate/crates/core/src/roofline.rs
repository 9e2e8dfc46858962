//! Roofline model for CUDA-Core, Tensor-Core and Sparse-Tensor-Core stencils.
//!
//! All quantities are per output point of a fused chain of `t` time steps:
//! `C` FLOPs, `M` bytes, `I = C / M`. Tensor-Core workloads execute
//! `alpha / S` times the useful work, so their *actual* performance is the
//! roofline value scaled back by `S / alpha`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RooflineError {
    #[error("redundancy factor must be positive and finite, got {0}")]
    AlphaOutOfRange(f64),
    #[error("sparsity factor must lie in (0, 1], got {0}")]
    SparsityOutOfRange(f64),
    #[error("fusion depth must be at least 1")]
    ZeroDepth,
    #[error("point count must be at least 1")]
    ZeroPoints,
    #[error("{what} must be positive and finite, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("unknown data type `{0}` (expected half, float or double)")]
    UnknownDataType(String),
    #[error("unknown compute unit `{0}` (expected cuda, tc or sptc)")]
    UnknownUnit(String),
    #[error("hardware profile has no sparse tensor core peak")]
    NoSparsePeak,
}

/// Element type of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Half,
    Float,
    Double,
}

impl DataType {
    /// Size `D` in bytes.
    pub fn bytes(self) -> u32 {
        match self {
            DataType::Half => 2,
            DataType::Float => 4,
            DataType::Double => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DataType::Half => "half",
            DataType::Float => "float",
            DataType::Double => "double",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DataType {
    type Err = RooflineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "half" | "fp16" | "f16" => Ok(DataType::Half),
            "float" | "fp32" | "f32" | "single" => Ok(DataType::Float),
            "double" | "fp64" | "f64" => Ok(DataType::Double),
            other => Err(RooflineError::UnknownDataType(other.to_string())),
        }
    }
}

/// Execution unit a workload is mapped to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Cuda,
    Tensor,
    SparseTensor,
}

impl Unit {
    pub fn name(self) -> &'static str {
        match self {
            Unit::Cuda => "cuda",
            Unit::Tensor => "tensor",
            Unit::SparseTensor => "sparse_tensor",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Unit {
    type Err = RooflineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cuda" | "cu" => Ok(Unit::Cuda),
            "tc" | "tensor" | "tc_dense" => Ok(Unit::Tensor),
            "sptc" | "sparse" | "sparse_tensor" | "tc_sparse" => Ok(Unit::SparseTensor),
            other => Err(RooflineError::UnknownUnit(other.to_string())),
        }
    }
}

/// `(C, M, I)` per output point, plus the useful (non-redundant) share of `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMetrics {
    /// `C`, executed FLOPs.
    pub flops: f64,
    /// `M`, bytes of off-chip traffic.
    pub bytes: f64,
    /// `I = C / M`.
    pub intensity: f64,
    /// FLOPs that contribute to the result: `2 K t`.
    pub useful_flops: f64,
}

impl WorkloadMetrics {
    fn new(flops: f64, bytes: f64, useful_flops: f64) -> Self {
        WorkloadMetrics {
            flops,
            bytes,
            intensity: flops / bytes,
            useful_flops,
        }
    }

    /// Intensity of useful work only, `useful_flops / M`.
    pub fn useful_intensity(&self) -> f64 {
        self.useful_flops / self.bytes
    }
}

fn check_points(k: u64) -> Result<(), RooflineError> {
    if k == 0 {
        return Err(RooflineError::ZeroPoints);
    }
    Ok(())
}

fn check_alpha_sparsity(alpha: f64, sparsity: f64) -> Result<(), RooflineError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(RooflineError::AlphaOutOfRange(alpha));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(RooflineError::SparsityOutOfRange(sparsity));
    }
    Ok(())
}

fn check_positive(what: &'static str, value: f64) -> Result<(), RooflineError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(RooflineError::NonPositive { what, value })
    }
}

/// Unfused stencil: `C = 2K`, `M = 2D`, `I = K/D`.
pub fn metrics_original(k: u64, dtype: DataType) -> Result<WorkloadMetrics, RooflineError> {
    metrics_cuda_fused(k, dtype, 1)
}

/// Temporally fused CUDA-Core chain: `C = 2Kt`, `M = 2D`.
pub fn metrics_cuda_fused(
    k: u64,
    dtype: DataType,
    t: u32,
) -> Result<WorkloadMetrics, RooflineError> {
    check_points(k)?;
    if t == 0 {
        return Err(RooflineError::ZeroDepth);
    }
    let useful = 2.0 * k as f64 * t as f64;
    Ok(WorkloadMetrics::new(
        useful,
        2.0 * dtype.bytes() as f64,
        useful,
    ))
}

/// Kernel-fused Tensor-Core chain: `C = 2Kt * alpha / S`, `M = 2D`.
pub fn metrics_tc_fused(
    k: u64,
    dtype: DataType,
    t: u32,
    alpha: f64,
    sparsity: f64,
) -> Result<WorkloadMetrics, RooflineError> {
    check_alpha_sparsity(alpha, sparsity)?;
    let cuda = metrics_cuda_fused(k, dtype, t)?;
    Ok(WorkloadMetrics::new(
        cuda.useful_flops * alpha / sparsity,
        cuda.bytes,
        cuda.useful_flops,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Memory,
    Compute,
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bound::Memory => "Memory",
            Bound::Compute => "Compute",
        })
    }
}

/// A workload placed on one unit's roofline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RooflinePoint {
    pub intensity: f64,
    pub useful_intensity: f64,
    pub peak: f64,
    pub bandwidth: f64,
    /// `I* = P / B`.
    pub ridge: f64,
    /// `min(P, B I)`.
    pub p_raw: f64,
    /// Rate of useful work.
    pub p_actual: f64,
    pub bound: Bound,
}

/// Places `metrics` on the roofline `min(peak, bandwidth * I)`. An intensity
/// exactly at the ridge counts as compute-bound.
///
/// `p_actual` is the useful-work rate. In the memory-bound region it is
/// computed as `B * useful_flops / M`, the form in which the redundancy
/// factor cancels exactly.
pub fn attain(
    metrics: &WorkloadMetrics,
    peak: f64,
    bandwidth: f64,
) -> Result<RooflinePoint, RooflineError> {
    check_positive("peak throughput", peak)?;
    check_positive("bandwidth", bandwidth)?;
    let ridge = peak / bandwidth;
    let bound = if metrics.intensity >= ridge {
        Bound::Compute
    } else {
        Bound::Memory
    };
    let (p_raw, p_actual) = match bound {
        Bound::Compute => (peak, peak * (metrics.useful_flops / metrics.flops)),
        Bound::Memory => (
            bandwidth * metrics.intensity,
            bandwidth * metrics.useful_intensity(),
        ),
    };
    Ok(RooflinePoint {
        intensity: metrics.intensity,
        useful_intensity: metrics.useful_intensity(),
        peak,
        bandwidth,
        ridge,
        p_raw,
        p_actual,
        bound,
    })
}

/// Explicit Tensor-Core normalization `P_actual = (S / alpha) * P_raw`.
pub fn actual_tc(
    point: &RooflinePoint,
    alpha: f64,
    sparsity: f64,
) -> Result<RooflinePoint, RooflineError> {
    check_alpha_sparsity(alpha, sparsity)?;
    Ok(RooflinePoint {
        p_actual: sparsity / alpha * point.p_raw,
        ..*point
    })
}

/// Sparse Tensor Core: same intensity as the dense TC workload, higher ceiling.
pub fn sptc_point(
    metrics_tc: &WorkloadMetrics,
    sparse_peak: Option<f64>,
    bandwidth: f64,
) -> Result<RooflinePoint, RooflineError> {
    let peak = sparse_peak.ok_or(RooflineError::NoSparsePeak)?;
    attain(metrics_tc, peak, bandwidth)
}

/// The four bottleneck combinations `(CUDA bound, Tensor bound)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8")]
pub enum Scenario {
    /// Memory-bound on both units.
    MemoryMemory = 1,
    /// Memory-bound on CUDA Cores, compute-bound on Tensor Cores.
    MemoryCompute = 2,
    /// Compute-bound on CUDA Cores, memory-bound on Tensor Cores.
    ComputeMemory = 3,
    /// Compute-bound on both units.
    ComputeCompute = 4,
}

impl Scenario {
    pub fn number(self) -> u8 {
        self as u8
    }
}

impl From<Scenario> for u8 {
    fn from(s: Scenario) -> u8 {
        s.number()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scenario {}", self.number())
    }
}

pub fn classify(cu: &RooflinePoint, tc: &RooflinePoint) -> Scenario {
    match (cu.bound, tc.bound) {
        (Bound::Memory, Bound::Memory) => Scenario::MemoryMemory,
        (Bound::Memory, Bound::Compute) => Scenario::MemoryCompute,
        (Bound::Compute, Bound::Memory) => Scenario::ComputeMemory,
        (Bound::Compute, Bound::Compute) => Scenario::ComputeCompute,
    }
}

/// `P_TC,actual / P_CU,actual`.
pub fn speedup_ratio(cu: &RooflinePoint, tc: &RooflinePoint) -> f64 {
    tc.p_actual / cu.p_actual
}

/// Whether the accelerated unit beats the CUDA-Core roofline: always in
/// Scenario 3, only when `alpha < S * P_TC / P_CU` in Scenario 4, never
/// otherwise.
pub fn sweet_spot(
    alpha: f64,
    sparsity: f64,
    tc_peak: f64,
    cu_peak: f64,
    scenario: Scenario,
) -> bool {
    match scenario {
        Scenario::ComputeMemory => true,
        Scenario::ComputeCompute => alpha < sweet_spot_threshold(sparsity, tc_peak, cu_peak),
        Scenario::MemoryMemory | Scenario::MemoryCompute => false,
    }
}

/// Largest redundancy factor that still pays off in Scenario 4.
pub fn sweet_spot_threshold(sparsity: f64, tc_peak: f64, cu_peak: f64) -> f64 {
    sparsity * tc_peak / cu_peak
}

/// Smallest fusion depth at which the CUDA-Core chain becomes compute-bound.
pub fn min_fusion_to_compute_bound(
    k: u64,
    dtype: DataType,
    cu_peak: f64,
    bandwidth: f64,
) -> Result<u32, RooflineError> {
    check_points(k)?;
    check_positive("peak throughput", cu_peak)?;
    check_positive("bandwidth", bandwidth)?;
    let ridge = cu_peak / bandwidth;
    let intensity = |t: u32| metrics_cuda_fused(k, dtype, t).map(|m| m.intensity);
    let guess = (ridge * dtype.bytes() as f64 / k as f64).ceil();
    let mut t = if guess >= 1.0 && guess < u32::MAX as f64 {
        guess as u32
    } else {
        1
    };
    while t > 1 && intensity(t - 1)? >= ridge {
        t -= 1;
    }
    while intensity(t)? < ridge {
        t += 1;
    }
    Ok(t)
}

/// Useful FLOP rate converted to single-point single-step updates per second.
pub fn stencil_rate(p_actual: f64, k: u64) -> Result<f64, RooflineError> {
    check_points(k)?;
    Ok(p_actual / (2.0 * k as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accelerate,
    Degrade,
    Neutral,
}

impl Verdict {
    pub fn arrow(self) -> &'static str {
        match self {
            Verdict::Accelerate => "↑",
            Verdict::Degrade => "↓",
            Verdict::Neutral => "≈",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Accelerate => "accelerate",
            Verdict::Degrade => "degrade",
            Verdict::Neutral => "neutral",
        })
    }
}

/// Speedup ratios inside `[low, high]` are reported as neutral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeutralBand {
    pub low: f64,
    pub high: f64,
}

impl Default for NeutralBand {
    fn default() -> Self {
        NeutralBand {
            low: 0.9,
            high: 1.1,
        }
    }
}

impl NeutralBand {
    pub fn verdict(&self, ratio: f64) -> Verdict {
        if ratio < self.low {
            Verdict::Degrade
        } else if ratio > self.high {
            Verdict::Accelerate
        } else {
            Verdict::Neutral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub cu_point: RooflinePoint,
    /// Point of the accelerated unit (dense or sparse Tensor Cores).
    pub tc_point: RooflinePoint,
    pub tc_unit: Unit,
    pub speedup_ratio: f64,
    pub sweet_spot: bool,
    pub verdict: Verdict,
    pub unit_recommendation: Unit,
}

/// Unit with the highest useful-work rate; ties go to the earlier candidate,
/// so CUDA Cores win a tie when listed first.
pub fn recommend_unit(candidates: &[(Unit, RooflinePoint)]) -> Option<Unit> {
    let mut best: Option<(Unit, f64)> = None;
    for (unit, point) in candidates {
        match best {
            Some((_, p)) if point.p_actual <= p => {}
            _ => best = Some((*unit, point.p_actual)),
        }
    }
    best.map(|(u, _)| u)
}

/// Compares a CUDA-Core point with an accelerated point.
///
/// `candidates` lists every unit considered for the recommendation; when
/// empty, only the two compared points are used.
pub fn evaluate(
    cu: RooflinePoint,
    tc: RooflinePoint,
    tc_unit: Unit,
    alpha: f64,
    sparsity: f64,
    band: NeutralBand,
    candidates: &[(Unit, RooflinePoint)],
) -> ScenarioReport {
    let scenario = classify(&cu, &tc);
    let ratio = speedup_ratio(&cu, &tc);
    let fallback = [(Unit::Cuda, cu), (tc_unit, tc)];
    let pool = if candidates.is_empty() {
        &fallback[..]
    } else {
        candidates
    };
    ScenarioReport {
        scenario,
        cu_point: cu,
        tc_point: tc,
        tc_unit,
        speedup_ratio: ratio,
        sweet_spot: sweet_spot(alpha, sparsity, tc.peak, cu.peak, scenario),
        verdict: band.verdict(ratio),
        unit_recommendation: recommend_unit(pool).unwrap_or(Unit::Cuda),
    }
}
