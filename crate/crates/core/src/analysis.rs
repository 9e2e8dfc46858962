//! End-to-end analyses built from the model modules: one configuration, a
//! sweep over fusion depth, roofline chart data and the built-in self-check.

use std::collections::BTreeMap;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::hwdb::{self, HardwareProfile, HwdbError, RidgePoints};
use crate::kernel::{self, box_alpha_closed_form, fuse, Kernel, KernelError, Offset, Shape};
use crate::roofline::{
    self, attain, metrics_cuda_fused, metrics_tc_fused, min_fusion_to_compute_bound,
    stencil_rate, Bound, DataType, NeutralBand, RooflineError, RooflinePoint, Scenario,
    ScenarioReport, Unit, Verdict, WorkloadMetrics,
};
use crate::simulator::{equivalence_check, Grid, SimulatorError};
use crate::transform::{
    build_operands, MmaShape, SchemeKind, Sparsity, TransformError, TransformScheme,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Roofline(#[from] RooflineError),
    #[error(transparent)]
    Hwdb(#[from] HwdbError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
    #[error("invalid request: {0}")]
    Request(String),
}

/// One stencil configuration to analyze on one hardware profile.
#[derive(Debug, Clone)]
pub struct AnalysisRequest {
    pub kernel: Kernel,
    pub dtype: DataType,
    pub scheme: TransformScheme,
    pub profile: HardwareProfile,
    /// Units to compare; CUDA Cores are always the baseline.
    pub units: Vec<Unit>,
    pub band: NeutralBand,
}

impl AnalysisRequest {
    /// Validates the request. The MMA shape defaults to the preset for `dtype`.
    pub fn new(
        kernel: Kernel,
        dtype: DataType,
        scheme: SchemeKind,
        sparsity_override: Option<Sparsity>,
        profile: HardwareProfile,
        units: &[Unit],
    ) -> Result<Self, AnalysisError> {
        let peaks = profile.peaks(dtype)?;
        let mut list = vec![Unit::Cuda];
        for &u in units {
            if !list.contains(&u) {
                list.push(u);
            }
        }
        if list.len() == 1 {
            list.push(Unit::Tensor);
        }
        if list.contains(&Unit::SparseTensor) && peaks.tc_sparse.is_none() {
            return Err(AnalysisError::Request(format!(
                "profile `{}` has no sparse tensor core peak for {dtype}",
                profile.name
            )));
        }
        let mut scheme = TransformScheme::new(scheme, MmaShape::for_element_bytes(dtype.bytes() as usize));
        scheme.sparsity_override = sparsity_override;
        Ok(AnalysisRequest {
            kernel,
            dtype,
            scheme,
            profile,
            units: list,
            band: NeutralBand::default(),
        })
    }

    /// Accelerated units in the order requested.
    pub fn accelerated_units(&self) -> impl Iterator<Item = Unit> + '_ {
        self.units.iter().copied().filter(|u| *u != Unit::Cuda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SparsitySource {
    Constructed,
    Override,
}

#[derive(Debug, Clone, Serialize)]
pub struct OperandSummary {
    pub scheme: SchemeKind,
    pub mma: String,
    pub raw_rows: usize,
    pub raw_cols: usize,
    pub rows: usize,
    pub cols: usize,
    pub nonzeros: usize,
    pub structural_sparsity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnitResult {
    pub unit: Unit,
    pub metrics: WorkloadMetrics,
    pub point: RooflinePoint,
    /// Updates per second implied by the model; an upper bound, not a
    /// measurement.
    pub stencil_rate_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub stencil: String,
    pub shape: Shape,
    pub dim: usize,
    pub radius: u32,
    pub dtype: DataType,
    pub t: u32,
    pub points: usize,
    pub fused_points: usize,
    pub alpha: f64,
    pub alpha_exact: (u64, u64),
    pub sparsity: f64,
    pub sparsity_source: SparsitySource,
    pub operand: OperandSummary,
    pub profile: String,
    pub ridges: RidgePoints,
    pub units: Vec<UnitResult>,
    /// CUDA Cores against each accelerated unit.
    pub comparisons: Vec<ScenarioReport>,
    pub recommendation: Unit,
    /// Smallest depth at which CUDA Cores become compute-bound.
    pub cu_min_fusion: u32,
}

impl AnalysisReport {
    pub fn unit(&self, unit: Unit) -> Option<&UnitResult> {
        self.units.iter().find(|u| u.unit == unit)
    }

    pub fn comparison(&self, unit: Unit) -> Option<&ScenarioReport> {
        self.comparisons.iter().find(|c| c.tc_unit == unit)
    }
}

/// Full model evaluation of one fusion depth.
pub fn analyze(req: &AnalysisRequest, t: u32) -> Result<AnalysisReport, AnalysisError> {
    let fused = fuse(&req.kernel, t)?;
    let operands = build_operands(&fused, &req.scheme)?;
    let alpha_exact = fused.alpha();
    let alpha = kernel::ratio_to_f64(alpha_exact);
    let sparsity = operands.sparsity;
    let k = req.kernel.point_count() as u64;
    let peaks = req.profile.peaks(req.dtype)?;
    let bandwidth = req.profile.bandwidth;

    let mut units = Vec::with_capacity(req.units.len());
    for &unit in &req.units {
        let metrics = match unit {
            Unit::Cuda => metrics_cuda_fused(k, req.dtype, t)?,
            _ => metrics_tc_fused(k, req.dtype, t, alpha, sparsity)?,
        };
        let peak = peaks.peak(unit).ok_or(RooflineError::NoSparsePeak)?;
        let point = attain(&metrics, peak, bandwidth)?;
        units.push(UnitResult {
            unit,
            metrics,
            point,
            stencil_rate_bound: stencil_rate(point.p_actual, k)?,
        });
    }

    let candidates: Vec<(Unit, RooflinePoint)> = units.iter().map(|u| (u.unit, u.point)).collect();
    let cu = units[0].point;
    let comparisons = units[1..]
        .iter()
        .map(|u| roofline::evaluate(cu, u.point, u.unit, alpha, sparsity, req.band, &candidates))
        .collect();

    Ok(AnalysisReport {
        stencil: req.kernel.label(),
        shape: req.kernel.shape(),
        dim: req.kernel.dim(),
        radius: req.kernel.radius(),
        dtype: req.dtype,
        t,
        points: req.kernel.point_count(),
        fused_points: fused.point_count(),
        alpha,
        alpha_exact: (*alpha_exact.numer(), *alpha_exact.denom()),
        sparsity,
        sparsity_source: if req.scheme.sparsity_override.is_some() {
            SparsitySource::Override
        } else {
            SparsitySource::Constructed
        },
        operand: OperandSummary {
            scheme: req.scheme.kind,
            mma: req.scheme.mma.to_string(),
            raw_rows: operands.raw_rows,
            raw_cols: operands.raw_cols,
            rows: operands.rows,
            cols: operands.cols,
            nonzeros: operands.nonzeros,
            structural_sparsity: operands.structural_sparsity(),
        },
        profile: req.profile.name.clone(),
        ridges: hwdb::ridge_points(&req.profile, req.dtype)?,
        recommendation: roofline::recommend_unit(&candidates).unwrap_or(Unit::Cuda),
        units,
        comparisons,
        cu_min_fusion: min_fusion_to_compute_bound(k, req.dtype, peaks.cuda, bandwidth)?,
    })
}

/// One row of a fusion-depth sweep. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub t: u32,
    pub fused_points: usize,
    pub alpha: f64,
    pub sparsity: f64,
    pub i_cu: f64,
    pub i_tc: f64,
    pub tc_unit: Unit,
    pub cu_bound: Bound,
    pub tc_bound: Bound,
    pub scenario: u8,
    pub speedup_ratio: f64,
    pub sweet_spot: bool,
    pub verdict: Verdict,
    /// True from the first depth at which CUDA Cores are compute-bound.
    pub cu_transitioned: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub t_star: u32,
    pub transition_in_range: bool,
}

impl SweepRow {
    fn from_report(r: &AnalysisReport) -> Self {
        let cmp = &r.comparisons[0];
        SweepRow {
            t: r.t,
            fused_points: r.fused_points,
            alpha: r.alpha,
            sparsity: r.sparsity,
            i_cu: cmp.cu_point.intensity,
            i_tc: cmp.tc_point.intensity,
            tc_unit: cmp.tc_unit,
            cu_bound: cmp.cu_point.bound,
            tc_bound: cmp.tc_point.bound,
            scenario: cmp.scenario.number(),
            speedup_ratio: cmp.speedup_ratio,
            sweet_spot: cmp.sweet_spot,
            verdict: cmp.verdict,
            cu_transitioned: r.t >= r.cu_min_fusion,
        }
    }
}

/// Evaluates every depth in `t_min..=t_max`. Depths are evaluated in
/// parallel; rows come back ordered by `t`.
pub fn sweep(req: &AnalysisRequest, t_min: u32, t_max: u32) -> Result<SweepReport, AnalysisError> {
    if t_min == 0 || t_max < t_min {
        return Err(AnalysisError::Request(format!(
            "empty or invalid sweep range {t_min}..={t_max}"
        )));
    }
    let reports: Vec<AnalysisReport> = (t_min..=t_max)
        .into_par_iter()
        .map(|t| analyze(req, t))
        .collect::<Result<_, _>>()?;
    let rows: Vec<SweepRow> = reports.iter().map(SweepRow::from_report).collect();
    let peaks = req.profile.peaks(req.dtype)?;
    let t_star = min_fusion_to_compute_bound(
        req.kernel.point_count() as u64,
        req.dtype,
        peaks.cuda,
        req.profile.bandwidth,
    )?;
    Ok(SweepReport {
        rows,
        t_star,
        transition_in_range: (t_min..=t_max).contains(&t_star),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RooflineCurve {
    pub unit: Unit,
    pub peak: f64,
    pub bandwidth: f64,
    pub ridge: f64,
    /// `(I, P)` vertices: memory slope, ridge, flat ceiling.
    pub polyline: [(f64, f64); 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct WorkloadMarker {
    pub t: u32,
    pub unit: Unit,
    pub intensity: f64,
    pub p_raw: f64,
    pub p_actual: f64,
    pub bound: Bound,
}

#[derive(Debug, Clone, Serialize)]
pub struct RooflineChart {
    pub profile: String,
    pub dtype: DataType,
    pub rooflines: Vec<RooflineCurve>,
    pub workloads: Vec<WorkloadMarker>,
}

/// Roofline polylines for every requested unit plus one marker per unit and
/// depth. An empty `depths` yields the polylines only.
pub fn roofline_export(req: &AnalysisRequest, depths: &[u32]) -> Result<RooflineChart, AnalysisError> {
    let reports: Vec<AnalysisReport> = depths
        .par_iter()
        .map(|&t| analyze(req, t))
        .collect::<Result<_, _>>()?;
    let workloads: Vec<WorkloadMarker> = reports
        .iter()
        .flat_map(|r| {
            r.units.iter().map(move |u| WorkloadMarker {
                t: r.t,
                unit: u.unit,
                intensity: u.point.intensity,
                p_raw: u.point.p_raw,
                p_actual: u.point.p_actual,
                bound: u.point.bound,
            })
        })
        .collect();

    let peaks = req.profile.peaks(req.dtype)?;
    let bandwidth = req.profile.bandwidth;
    let ridges: Vec<(Unit, f64, f64)> = req
        .units
        .iter()
        .map(|&u| {
            let peak = peaks.peak(u).ok_or(RooflineError::NoSparsePeak)?;
            Ok((u, peak, peak / bandwidth))
        })
        .collect::<Result<_, AnalysisError>>()?;
    let max_ridge = ridges.iter().map(|r| r.2).fold(0.0, f64::max);
    let min_ridge = ridges.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    let max_marker = workloads.iter().map(|w| w.intensity).fold(0.0, f64::max);
    let min_marker = workloads.iter().map(|w| w.intensity).fold(f64::INFINITY, f64::min);
    let i_lo = (min_ridge / 100.0).min(min_marker / 2.0);
    let i_hi = (max_ridge * 10.0).max(max_marker * 2.0);
    let rooflines = ridges
        .into_iter()
        .map(|(unit, peak, ridge)| RooflineCurve {
            unit,
            peak,
            bandwidth,
            ridge,
            polyline: [(i_lo, bandwidth * i_lo), (ridge, peak), (i_hi, peak)],
        })
        .collect();
    Ok(RooflineChart {
        profile: req.profile.name.clone(),
        dtype: req.dtype,
        rooflines,
        workloads,
    })
}

/// Reads a stencil weights file: one `x0,...,x{d-1},weight` line per point.
/// Blank lines, `#` comments and a non-numeric header line are skipped.
pub fn read_weights_csv<R: BufRead>(
    input: R,
    dim: usize,
) -> Result<BTreeMap<Offset, f64>, AnalysisError> {
    let mut out = BTreeMap::new();
    for (ln, line) in input.lines().enumerate() {
        let line = line.map_err(|e| AnalysisError::Request(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if ln == 0 && fields[0].parse::<i32>().is_err() {
            continue;
        }
        if fields.len() != dim + 1 {
            return Err(AnalysisError::Request(format!(
                "weights line {}: expected {} fields, got {}",
                ln + 1,
                dim + 1,
                fields.len()
            )));
        }
        let bad = || AnalysisError::Request(format!("weights line {}: bad number", ln + 1));
        let coords: Vec<i32> = fields[..dim]
            .iter()
            .map(|f| f.parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let w: f64 = fields[dim].parse().map_err(|_| bad())?;
        if out.insert(Offset(coords), w).is_some() {
            return Err(AnalysisError::Request(format!(
                "weights line {}: duplicate offset",
                ln + 1
            )));
        }
    }
    Ok(out)
}

/// Outcome of one self-check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// A reference configuration with its published analytical columns.
struct GoldenRow {
    row: u32,
    radius: u32,
    t: u32,
    dtype: DataType,
    /// `None` for CUDA-Core rows.
    tc_sparsity: Option<f64>,
    c: i64,
    m: i64,
    i: &'static str,
    alpha: Option<&'static str>,
}

const GOLDEN: [GoldenRow; 10] = [
    GoldenRow { row: 1, radius: 1, t: 3, dtype: DataType::Double, tc_sparsity: None, c: 54, m: 16, i: "3.38", alpha: None },
    GoldenRow { row: 2, radius: 3, t: 1, dtype: DataType::Double, tc_sparsity: None, c: 98, m: 16, i: "6.12", alpha: None },
    GoldenRow { row: 3, radius: 1, t: 7, dtype: DataType::Float, tc_sparsity: None, c: 126, m: 8, i: "15.75", alpha: None },
    GoldenRow { row: 4, radius: 7, t: 1, dtype: DataType::Float, tc_sparsity: None, c: 450, m: 8, i: "56.25", alpha: None },
    GoldenRow { row: 5, radius: 1, t: 3, dtype: DataType::Double, tc_sparsity: Some(0.5), c: 196, m: 16, i: "12.25", alpha: Some("1.81") },
    GoldenRow { row: 6, radius: 3, t: 1, dtype: DataType::Double, tc_sparsity: Some(0.5), c: 196, m: 16, i: "12.25", alpha: Some("1.00") },
    GoldenRow { row: 7, radius: 1, t: 7, dtype: DataType::Float, tc_sparsity: Some(0.5), c: 900, m: 8, i: "112.50", alpha: Some("3.57") },
    GoldenRow { row: 8, radius: 7, t: 1, dtype: DataType::Float, tc_sparsity: Some(0.5), c: 900, m: 8, i: "112.50", alpha: Some("1.00") },
    GoldenRow { row: 9, radius: 1, t: 7, dtype: DataType::Float, tc_sparsity: Some(15.0 / 32.0), c: 960, m: 8, i: "120.00", alpha: Some("3.57") },
    GoldenRow { row: 10, radius: 7, t: 1, dtype: DataType::Float, tc_sparsity: Some(15.0 / 32.0), c: 960, m: 8, i: "120.00", alpha: Some("1.00") },
];

fn golden_check(g: &GoldenRow) -> Result<Check, AnalysisError> {
    let kernel = Kernel::boxed(2, g.radius)?;
    let k = kernel.point_count() as u64;
    let alpha = kernel::alpha(&kernel, g.t)?;
    let metrics = match g.tc_sparsity {
        None => metrics_cuda_fused(k, g.dtype, g.t)?,
        Some(s) => metrics_tc_fused(k, g.dtype, g.t, alpha, s)?,
    };
    let c = metrics.flops.round() as i64;
    let m = metrics.bytes.round() as i64;
    let i = format!("{:.2}", metrics.intensity);
    let a = format!("{alpha:.2}");
    let pass = c == g.c && m == g.m && i == g.i && g.alpha.is_none_or(|expected| expected == a);
    Ok(Check {
        name: format!("golden.row{}", g.row),
        pass,
        detail: format!(
            "{} t={} {}: C={c} M={m} I={i} alpha={a} (expected C={} M={} I={})",
            kernel.label(),
            g.t,
            g.dtype,
            g.c,
            g.m,
            g.i
        ),
    })
}

/// Published Tensor-Core comparison cases on the reference GPU.
struct ScenarioCase {
    id: u32,
    dim: usize,
    radius: u32,
    t: u32,
    dtype: DataType,
    unit: Unit,
    sparsity: f64,
    scenario: Scenario,
    verdict: Verdict,
}

const CASES: [ScenarioCase; 6] = [
    ScenarioCase { id: 1, dim: 2, radius: 1, t: 3, dtype: DataType::Double, unit: Unit::Tensor, sparsity: 0.5, scenario: Scenario::MemoryCompute, verdict: Verdict::Degrade },
    ScenarioCase { id: 2, dim: 2, radius: 3, t: 1, dtype: DataType::Double, unit: Unit::Tensor, sparsity: 0.5, scenario: Scenario::ComputeCompute, verdict: Verdict::Neutral },
    ScenarioCase { id: 3, dim: 2, radius: 1, t: 7, dtype: DataType::Float, unit: Unit::SparseTensor, sparsity: 15.0 / 32.0, scenario: Scenario::ComputeMemory, verdict: Verdict::Accelerate },
    ScenarioCase { id: 4, dim: 2, radius: 7, t: 1, dtype: DataType::Float, unit: Unit::SparseTensor, sparsity: 15.0 / 32.0, scenario: Scenario::ComputeMemory, verdict: Verdict::Accelerate },
    ScenarioCase { id: 5, dim: 3, radius: 1, t: 3, dtype: DataType::Double, unit: Unit::Tensor, sparsity: 0.5, scenario: Scenario::ComputeCompute, verdict: Verdict::Degrade },
    ScenarioCase { id: 6, dim: 3, radius: 1, t: 7, dtype: DataType::Float, unit: Unit::SparseTensor, sparsity: 15.0 / 32.0, scenario: Scenario::ComputeCompute, verdict: Verdict::Degrade },
];

fn scenario_check(profile: &HardwareProfile, case: &ScenarioCase) -> Result<Check, AnalysisError> {
    let req = AnalysisRequest::new(
        Kernel::boxed(case.dim, case.radius)?,
        case.dtype,
        SchemeKind::Flattening,
        Some(Sparsity::new(case.sparsity)?),
        profile.clone(),
        &[case.unit],
    )?;
    let report = analyze(&req, case.t)?;
    let cmp = report
        .comparison(case.unit)
        .ok_or_else(|| AnalysisError::Request("missing comparison".into()))?;
    Ok(Check {
        name: format!("scenario.case{}", case.id),
        pass: cmp.scenario == case.scenario && cmp.verdict == case.verdict,
        detail: format!(
            "{} t={} {} vs {}: {} ratio={:.3} {} (expected {} {})",
            report.stencil,
            case.t,
            case.dtype,
            case.unit,
            cmp.scenario,
            cmp.speedup_ratio,
            cmp.verdict.arrow(),
            case.scenario,
            case.verdict.arrow()
        ),
    })
}

fn ridge_check(profile: &HardwareProfile) -> Result<Vec<Check>, AnalysisError> {
    let double = hwdb::ridge_points(profile, DataType::Double)?.rounded();
    let float = hwdb::ridge_points(profile, DataType::Float)?.rounded();
    Ok(vec![
        Check {
            name: "ridge.double".into(),
            pass: (double.0, double.1) == (5, 10),
            detail: format!("cuda={} tc={} (expected 5, 10)", double.0, double.1),
        },
        Check {
            name: "ridge.float".into(),
            pass: (float.0, float.1, float.2) == (10, 81, Some(161)),
            detail: format!(
                "cuda={} tc={} sptc={:?} (expected 10, 81, Some(161))",
                float.0, float.1, float.2
            ),
        },
    ])
}

fn alpha_closed_form_check() -> Result<Check, AnalysisError> {
    let mut mismatches = Vec::new();
    for dim in 1..=3u32 {
        for radius in 1..=3u32 {
            let counts = kernel::fused_point_counts(&Kernel::boxed(dim as usize, radius)?, 8)?;
            let base = counts[0];
            for (i, &k_t) in counts.iter().enumerate() {
                let t = i as u32 + 1;
                let enumerated = num_rational::Ratio::new(k_t, t as u64 * base);
                if enumerated != box_alpha_closed_form(dim, radius, t) {
                    mismatches.push(format!("d={dim} r={radius} t={t}"));
                }
            }
        }
    }
    Ok(Check {
        name: "alpha.box_closed_form".into(),
        pass: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            "72 configurations agree exactly".into()
        } else {
            mismatches.join("; ")
        },
    })
}

fn equivalence_checks() -> Result<Vec<Check>, AnalysisError> {
    let mut configs = Vec::new();
    for shape in [Shape::Box, Shape::Star] {
        for dim in 1..=3usize {
            for radius in 1..=2u32 {
                for t in 1..=4u32 {
                    configs.push((shape, dim, radius, t));
                }
            }
        }
    }
    configs
        .par_iter()
        .enumerate()
        .map(|(i, &(shape, dim, radius, t))| {
            let kernel = Kernel::new(shape, dim, radius, None)?;
            let extent = 2 * (radius * t) as usize + 2;
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            let grid = Grid::from_fn(vec![extent; dim], DataType::Double, |_| {
                rng.random_range(-1.0..=1.0)
            })?;
            let report = equivalence_check(&grid, &kernel, t, 1e-10)?;
            let alpha = kernel::alpha_exact(&kernel, t)?;
            let (num, den) = report.flop_ratio();
            let ratio_ok = num_rational::Ratio::new(num, den) == alpha;
            Ok(Check {
                name: format!("simulator.{}", kernel.label().to_lowercase()) + &format!(".t{t}"),
                pass: report.pass && ratio_ok,
                detail: format!(
                    "max rel error {:.2e}, flop ratio {num}/{den} vs alpha {alpha}",
                    report.max_rel_error
                ),
            })
        })
        .collect()
}

/// Runs every built-in check against `profile` (normally the built-in A100).
pub fn verify(profile: &HardwareProfile) -> VerifyReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, result: Result<Vec<Check>, AnalysisError>| match result {
        Ok(c) => checks.extend(c),
        Err(e) => checks.push(Check {
            name: name.to_string(),
            pass: false,
            detail: e.to_string(),
        }),
    };
    for g in &GOLDEN {
        push(&format!("golden.row{}", g.row), golden_check(g).map(|c| vec![c]));
    }
    push("alpha.box_closed_form", alpha_closed_form_check().map(|c| vec![c]));
    push("ridge", ridge_check(profile));
    for case in &CASES {
        push(&format!("scenario.case{}", case.id), scenario_check(profile, case).map(|c| vec![c]));
    }
    push("simulator", equivalence_checks());
    VerifyReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hwdb::builtin_a100;

    fn request(dim: usize, r: u32, dtype: DataType, s: f64, unit: Unit) -> AnalysisRequest {
        AnalysisRequest::new(
            Kernel::boxed(dim, r).unwrap(),
            dtype,
            SchemeKind::Flattening,
            Some(Sparsity::new(s).unwrap()),
            builtin_a100(),
            &[unit],
        )
        .unwrap()
    }

    #[test]
    fn case_one_degrades_in_scenario_two() {
        let r = analyze(&request(2, 1, DataType::Double, 0.5, Unit::Tensor), 3).unwrap();
        let c = r.comparison(Unit::Tensor).unwrap();
        assert_eq!(c.scenario, Scenario::MemoryCompute);
        assert_eq!(c.verdict, Verdict::Degrade);
        assert_eq!(r.recommendation, Unit::Cuda);
        assert_eq!(r.alpha_exact, (49, 27));
        assert_eq!(r.sparsity_source, SparsitySource::Override);
    }

    #[test]
    fn case_three_accelerates_on_sparse_units() {
        let r = analyze(
            &request(2, 1, DataType::Float, 15.0 / 32.0, Unit::SparseTensor),
            7,
        )
        .unwrap();
        let c = r.comparison(Unit::SparseTensor).unwrap();
        assert_eq!(c.scenario, Scenario::ComputeMemory);
        assert_eq!(c.verdict, Verdict::Accelerate);
        assert!(c.sweet_spot);
        assert_eq!(r.recommendation, Unit::SparseTensor);
    }

    #[test]
    fn case_two_is_neutral() {
        let r = analyze(&request(2, 3, DataType::Double, 0.5, Unit::Tensor), 1).unwrap();
        let c = r.comparison(Unit::Tensor).unwrap();
        assert_eq!(c.verdict, Verdict::Neutral);
        assert!((c.speedup_ratio - 1.0052).abs() < 1e-3);
    }

    #[test]
    fn sparse_unit_needs_sparse_peak() {
        let err = AnalysisRequest::new(
            Kernel::boxed(2, 1).unwrap(),
            DataType::Double,
            SchemeKind::Flattening,
            None,
            builtin_a100(),
            &[Unit::SparseTensor],
        );
        assert!(matches!(err, Err(AnalysisError::Request(_))));
        let err = AnalysisRequest::new(
            Kernel::boxed(2, 1).unwrap(),
            DataType::Half,
            SchemeKind::Flattening,
            None,
            builtin_a100(),
            &[],
        );
        assert!(matches!(err, Err(AnalysisError::Hwdb(_))));
    }

    #[test]
    fn constructed_sparsity_is_used_without_override() {
        let req = AnalysisRequest::new(
            Kernel::boxed(2, 1).unwrap(),
            DataType::Double,
            SchemeKind::Decomposition,
            None,
            builtin_a100(),
            &[],
        )
        .unwrap();
        let r = analyze(&req, 1).unwrap();
        assert_eq!(r.sparsity, 0.375);
        assert_eq!(r.sparsity_source, SparsitySource::Constructed);
    }

    #[test]
    fn sweep_box_2d1r_double() {
        let req = request(2, 1, DataType::Double, 0.5, Unit::Tensor);
        let s = sweep(&req, 1, 8).unwrap();
        assert_eq!(s.rows.len(), 8);
        for (i, row) in s.rows.iter().enumerate() {
            assert_eq!(row.t, i as u32 + 1);
            assert_eq!(row.i_cu, 1.125 * row.t as f64);
            assert_eq!(row.cu_transitioned, row.t >= 5);
        }
        assert_eq!(s.t_star, 5);
        assert!(s.transition_in_range);
    }

    #[test]
    fn sweep_star_2d1r_has_no_transition_by_8() {
        let req = AnalysisRequest::new(
            Kernel::star(2, 1).unwrap(),
            DataType::Double,
            SchemeKind::Flattening,
            None,
            builtin_a100(),
            &[],
        )
        .unwrap();
        let s = sweep(&req, 1, 8).unwrap();
        assert!(s.rows.iter().all(|r| r.i_cu == 0.625 * r.t as f64));
        assert!(s.rows.iter().all(|r| !r.cu_transitioned));
        assert_eq!(s.t_star, 9);
        assert!(!s.transition_in_range);
    }

    #[test]
    fn single_step_sweep_matches_analyze() {
        let req = request(2, 1, DataType::Double, 0.5, Unit::Tensor);
        let s = sweep(&req, 3, 3).unwrap();
        let r = analyze(&req, 3).unwrap();
        assert_eq!(s.rows, vec![SweepRow::from_report(&r)]);
        assert!(sweep(&req, 4, 3).is_err());
        assert!(sweep(&req, 0, 3).is_err());
    }

    #[test]
    fn chart_polylines_and_markers() {
        let req = request(2, 1, DataType::Double, 0.5, Unit::Tensor);
        let chart = roofline_export(&req, &[3]).unwrap();
        assert_eq!(chart.rooflines.len(), 2);
        let ridges: Vec<i64> = chart.rooflines.iter().map(|c| c.ridge.round() as i64).collect();
        assert_eq!(ridges, vec![5, 10]);
        let tc = chart
            .workloads
            .iter()
            .find(|w| w.unit == Unit::Tensor)
            .unwrap();
        assert!((tc.intensity - 12.25).abs() < 1e-9);
        assert_eq!(tc.p_raw, 19.5e12);

        let empty = roofline_export(&req, &[]).unwrap();
        assert!(empty.workloads.is_empty());
        assert_eq!(empty.rooflines.len(), 2);
        let poly = empty.rooflines[0].polyline;
        assert!(poly[0].0 < poly[1].0 && poly[1].0 < poly[2].0);
        assert_eq!(poly[1].1, poly[2].1);
    }

    #[test]
    fn weights_file() {
        let text = "dx,dy,weight\n# center\n0,0,0.5\n0,1,0.125\n0,-1,0.125\n1,0,0.125\n-1,0,0.125\n";
        let w = read_weights_csv(text.as_bytes(), 2).unwrap();
        let k = Kernel::new(Shape::Star, 2, 1, Some(w)).unwrap();
        assert_eq!(k.weight(&Offset::new([0, 0])), Some(0.5));
        assert!(read_weights_csv("0,0\n".as_bytes(), 2).is_err());
        assert!(read_weights_csv("0,0,1\n0,0,1\n".as_bytes(), 2).is_err());
    }

    #[test]
    fn verify_passes_on_builtin_profile() {
        let report = verify(&builtin_a100());
        let failures: Vec<_> = report.failures().collect();
        assert!(failures.is_empty(), "{failures:#?}");
        assert!(report.checks.len() >= 10 + 1 + 2 + 6 + 48);
    }

    #[test]
    fn verify_names_corrupted_profile_checks() {
        let mut p = builtin_a100();
        p.bandwidth = 0.5e12;
        let report = verify(&p);
        assert!(!report.passed());
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        assert!(names.contains(&"ridge.double"), "{names:?}");
    }
}
