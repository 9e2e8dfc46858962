//! Human tables and machine-readable CSV for each subcommand. Tables round
//! intensities to two decimals and ridge points to integers; CSV and JSON
//! carry full precision.

use std::fmt::Write as _;

use anyhow::Result;
use serde::Serialize;

use stencil_roofline::analysis::{RooflineChart, SweepReport, VerifyReport};
use stencil_roofline::{AnalysisReport, Scenario};

const RATE_NOTE: &str = "GStencils/s figures are model upper bounds, not measurements.";

fn tflops(v: f64) -> String {
    format!("{:.2}", v / 1e12)
}

fn count(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn scenario_label(s: Scenario) -> &'static str {
    match s {
        Scenario::MemoryMemory => "memory/memory",
        Scenario::MemoryCompute => "memory/compute",
        Scenario::ComputeMemory => "compute/memory",
        Scenario::ComputeCompute => "compute/compute",
    }
}

pub fn analysis_table(r: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "stencil         {} ({}, t={})", r.stencil, r.dtype, r.t);
    let _ = writeln!(s, "points          K={} K_t={}", r.points, r.fused_points);
    let _ = writeln!(
        s,
        "alpha           {:.2} ({}/{})",
        r.alpha, r.alpha_exact.0, r.alpha_exact.1
    );
    let source = match r.sparsity_source {
        stencil_roofline::analysis::SparsitySource::Constructed => "constructed",
        stencil_roofline::analysis::SparsitySource::Override => "override",
    };
    let _ = writeln!(s, "sparsity S      {:.2} ({source})", r.sparsity);
    let op = &r.operand;
    let _ = writeln!(
        s,
        "operand         {} {}: {}x{} padded to {}x{}, {} nonzeros",
        op.scheme, op.mma, op.raw_rows, op.raw_cols, op.rows, op.cols, op.nonzeros
    );
    let _ = writeln!(s, "profile         {}", r.profile);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<13} {:>12} {:>8} {:>10} {:>6} {:>8} {:>10} {:>10} {:>12}",
        "unit", "C", "M", "I", "ridge", "bound", "P TFLOP/s", "useful", "GStencils/s"
    );
    for u in &r.units {
        let _ = writeln!(
            s,
            "{:<13} {:>12} {:>8} {:>10.2} {:>6} {:>8} {:>10} {:>10} {:>12.2}",
            u.unit.name(),
            count(u.metrics.flops),
            count(u.metrics.bytes),
            u.metrics.intensity,
            u.point.ridge.round(),
            u.point.bound.to_string(),
            tflops(u.point.p_raw),
            tflops(u.point.p_actual),
            u.stencil_rate_bound / 1e9,
        );
    }
    let _ = writeln!(s);
    for c in &r.comparisons {
        let _ = writeln!(
            s,
            "cuda vs {} {} ({}), ratio {:.3} {} {}, sweet spot {}",
            c.tc_unit.name(),
            c.scenario,
            scenario_label(c.scenario),
            c.speedup_ratio,
            c.verdict.arrow(),
            c.verdict,
            if c.sweet_spot { "yes" } else { "no" }
        );
    }
    let _ = writeln!(s, "recommendation  {}", r.recommendation.name());
    let _ = writeln!(s, "cuda compute-bound from t = {}", r.cu_min_fusion);
    let _ = writeln!(s, "{RATE_NOTE}");
    s
}

#[derive(Serialize)]
struct AnalysisCsvRow<'a> {
    stencil: &'a str,
    dtype: String,
    t: u32,
    points: usize,
    fused_points: usize,
    alpha: f64,
    sparsity: f64,
    unit: &'static str,
    flops: f64,
    bytes: f64,
    intensity: f64,
    ridge: f64,
    bound: String,
    p_raw: f64,
    p_actual: f64,
    stencil_rate_bound: f64,
    scenario: Option<u8>,
    speedup_ratio: Option<f64>,
    sweet_spot: Option<bool>,
    verdict: Option<String>,
    recommendation: &'static str,
}

pub fn analysis_csv(r: &AnalysisReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for u in &r.units {
        let cmp = r.comparison(u.unit);
        w.serialize(AnalysisCsvRow {
            stencil: &r.stencil,
            dtype: r.dtype.to_string(),
            t: r.t,
            points: r.points,
            fused_points: r.fused_points,
            alpha: r.alpha,
            sparsity: r.sparsity,
            unit: u.unit.name(),
            flops: u.metrics.flops,
            bytes: u.metrics.bytes,
            intensity: u.metrics.intensity,
            ridge: u.point.ridge,
            bound: u.point.bound.to_string(),
            p_raw: u.point.p_raw,
            p_actual: u.point.p_actual,
            stencil_rate_bound: u.stencil_rate_bound,
            scenario: cmp.map(|c| c.scenario.number()),
            speedup_ratio: cmp.map(|c| c.speedup_ratio),
            sweet_spot: cmp.map(|c| c.sweet_spot),
            verdict: cmp.map(|c| c.verdict.to_string()),
            recommendation: r.recommendation.name(),
        })?;
    }
    Ok(w.into_inner()?)
}

pub fn sweep_table(r: &SweepReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>3} {:>7} {:>7} {:>6} {:>10} {:>10} {:>13} {:>8} {:>8} {:>8} {:>8} {:>6}",
        "t", "K_t", "alpha", "S", "I_cu", "I_tc", "unit", "cu", "tc", "scenario", "ratio", "sweet"
    );
    for row in &r.rows {
        let _ = writeln!(
            s,
            "{:>3} {:>7} {:>7.2} {:>6.2} {:>10.2} {:>10.2} {:>13} {:>8} {:>8} {:>8} {:>6.3} {} {:>6}{}",
            row.t,
            row.fused_points,
            row.alpha,
            row.sparsity,
            row.i_cu,
            row.i_tc,
            row.tc_unit.name(),
            row.cu_bound.to_string(),
            row.tc_bound.to_string(),
            row.scenario,
            row.speedup_ratio,
            row.verdict.arrow(),
            if row.sweet_spot { "yes" } else { "no" },
            if row.cu_transitioned { "  <- cuda compute-bound" } else { "" },
        );
    }
    let _ = writeln!(
        s,
        "t* = {} (cuda compute-bound from this depth{})",
        r.t_star,
        if r.transition_in_range { "" } else { "; outside the swept range" }
    );
    s
}

pub fn sweep_csv(r: &SweepReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &r.rows {
        w.serialize(row)?;
    }
    Ok(w.into_inner()?)
}

pub fn roofline_table(c: &RooflineChart) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "profile {} ({})", c.profile, c.dtype);
    let _ = writeln!(s, "{:<13} {:>12} {:>10} {:>6}", "unit", "peak TFLOP/s", "BW GB/s", "ridge");
    for r in &c.rooflines {
        let _ = writeln!(
            s,
            "{:<13} {:>12} {:>10.1} {:>6}",
            r.unit.name(),
            tflops(r.peak),
            r.bandwidth / 1e9,
            r.ridge.round()
        );
    }
    if !c.workloads.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>3} {:<13} {:>10} {:>12} {:>12} {:>8}",
            "t", "unit", "I", "P_raw", "P_actual", "bound"
        );
        for m in &c.workloads {
            let _ = writeln!(
                s,
                "{:>3} {:<13} {:>10.2} {:>12} {:>12} {:>8}",
                m.t,
                m.unit.name(),
                m.intensity,
                tflops(m.p_raw),
                tflops(m.p_actual),
                m.bound.to_string()
            );
        }
    }
    s
}

#[derive(Serialize)]
struct ChartCsvRow {
    series: &'static str,
    unit: &'static str,
    t: Option<u32>,
    intensity: f64,
    performance: f64,
}

/// Long format: three vertices per roofline, then raw and useful points per
/// workload marker.
pub fn roofline_csv(c: &RooflineChart) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &c.rooflines {
        for &(intensity, performance) in &r.polyline {
            w.serialize(ChartCsvRow {
                series: "roofline",
                unit: r.unit.name(),
                t: None,
                intensity,
                performance,
            })?;
        }
    }
    for m in &c.workloads {
        for (series, performance) in [("raw", m.p_raw), ("actual", m.p_actual)] {
            w.serialize(ChartCsvRow {
                series,
                unit: m.unit.name(),
                t: Some(m.t),
                intensity: m.intensity,
                performance,
            })?;
        }
    }
    Ok(w.into_inner()?)
}

pub fn verify_table(r: &VerifyReport) -> String {
    let mut s = String::new();
    for c in &r.checks {
        let _ = writeln!(
            s,
            "[{}] {} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let failed = r.failures().count();
    let _ = writeln!(
        s,
        "{} checks, {} passed, {} failed",
        r.checks.len(),
        r.checks.len() - failed,
        failed
    );
    s
}

pub fn verify_csv(r: &VerifyReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &r.checks {
        w.serialize(c)?;
    }
    Ok(w.into_inner()?)
}
