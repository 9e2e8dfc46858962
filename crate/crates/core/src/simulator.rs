//! Reference stencil executor on periodic grids.
//!
//! Used to check the counting model: applying a kernel `t` times must give the
//! same grid as one application of the `t`-fold fused kernel, and the FLOP
//! tallies of the two strategies differ exactly by the redundancy factor.
//!
//! Each output point accumulates its terms in lexicographic offset order, so
//! results are bitwise deterministic regardless of how rows are scheduled.

use std::io::{self, BufRead, Read, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::kernel::{fuse, FusedKernel, Kernel, KernelError};
use crate::roofline::DataType;

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("grid is {grid}-dimensional but kernel is {kernel}-dimensional")]
    DimensionMismatch { grid: usize, kernel: usize },
    #[error("extent {extent} along axis {axis} is below the required {required} (2 r t + 1)")]
    InadmissibleExtent {
        axis: usize,
        extent: usize,
        required: usize,
    },
    #[error("grid has {got} values, extents require {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("grid value at index {0} is not finite")]
    NonFinite(usize),
    #[error("grid must have at least one dimension")]
    NoDimensions,
    #[error("tolerance must be positive")]
    BadTolerance,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("malformed grid file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-major grid with periodic boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    extents: Vec<usize>,
    values: Vec<f64>,
    /// Element type used for traffic accounting and binary I/O.
    dtype: DataType,
}

impl Grid {
    pub fn new(extents: Vec<usize>, values: Vec<f64>, dtype: DataType) -> Result<Self, SimulatorError> {
        if extents.is_empty() {
            return Err(SimulatorError::NoDimensions);
        }
        let expected: usize = extents.iter().product();
        if values.len() != expected {
            return Err(SimulatorError::SizeMismatch {
                expected,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SimulatorError::NonFinite(i));
        }
        Ok(Grid {
            extents,
            values,
            dtype,
        })
    }

    pub fn zeros(extents: Vec<usize>, dtype: DataType) -> Result<Self, SimulatorError> {
        let n = extents.iter().product();
        Grid::new(extents, vec![0.0; n], dtype)
    }

    pub fn from_fn(
        extents: Vec<usize>,
        dtype: DataType,
        mut f: impl FnMut(usize) -> f64,
    ) -> Result<Self, SimulatorError> {
        let n = extents.iter().product();
        Grid::new(extents, (0..n).map(&mut f).collect(), dtype)
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dtype(&self) -> DataType {
        self.dtype
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dim()];
        for a in (0..self.dim().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.extents[a + 1];
        }
        strides
    }

    /// Flat binary: magic `SGRD`, u32 version, u32 d, d x u64 extents, u8
    /// element size, then little-endian values in that precision.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<(), SimulatorError> {
        out.write_all(b"SGRD")?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&(self.dim() as u32).to_le_bytes())?;
        for &e in &self.extents {
            out.write_all(&(e as u64).to_le_bytes())?;
        }
        out.write_all(&[self.dtype.bytes() as u8])?;
        for &v in &self.values {
            match self.dtype {
                DataType::Double => out.write_all(&v.to_le_bytes())?,
                DataType::Float => out.write_all(&(v as f32).to_le_bytes())?,
                DataType::Half => {
                    return Err(SimulatorError::Format(
                        "half precision grids cannot be serialized".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self, SimulatorError> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"SGRD" {
            return Err(SimulatorError::Format("bad magic".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != 1 {
            return Err(SimulatorError::Format(format!("unsupported version {version}")));
        }
        input.read_exact(&mut word)?;
        let dim = u32::from_le_bytes(word) as usize;
        let mut extents = Vec::with_capacity(dim);
        for _ in 0..dim {
            let mut e = [0u8; 8];
            input.read_exact(&mut e)?;
            extents.push(u64::from_le_bytes(e) as usize);
        }
        let mut size = [0u8; 1];
        input.read_exact(&mut size)?;
        let n: usize = extents.iter().product();
        let (dtype, values) = match size[0] {
            8 => {
                let mut values = Vec::with_capacity(n);
                let mut b = [0u8; 8];
                for _ in 0..n {
                    input.read_exact(&mut b)?;
                    values.push(f64::from_le_bytes(b));
                }
                (DataType::Double, values)
            }
            4 => {
                let mut values = Vec::with_capacity(n);
                let mut b = [0u8; 4];
                for _ in 0..n {
                    input.read_exact(&mut b)?;
                    values.push(f32::from_le_bytes(b) as f64);
                }
                (DataType::Float, values)
            }
            other => {
                return Err(SimulatorError::Format(format!("unsupported element size {other}")))
            }
        };
        Grid::new(extents, values, dtype)
    }

    /// CSV with one `i0,...,i{d-1},value` line per cell.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), SimulatorError> {
        let header: Vec<String> = (0..self.dim()).map(|a| format!("i{a}")).collect();
        writeln!(out, "{},value", header.join(","))?;
        let strides = self.strides();
        for (idx, v) in self.values.iter().enumerate() {
            for (a, s) in strides.iter().enumerate() {
                write!(out, "{},", (idx / s) % self.extents[a])?;
            }
            writeln!(out, "{v:?}")?;
        }
        Ok(())
    }

    /// Reads the CSV written by [`Grid::write_csv`]; extents are inferred from
    /// the largest index along each axis.
    pub fn read_csv<R: BufRead>(input: R, dtype: DataType) -> Result<Self, SimulatorError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| SimulatorError::Format("empty file".into()))??;
        let dim = header.split(',').count().saturating_sub(1);
        if dim == 0 {
            return Err(SimulatorError::NoDimensions);
        }
        let mut cells = Vec::new();
        for (ln, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 1 {
                return Err(SimulatorError::Format(format!(
                    "line {}: expected {} fields",
                    ln + 2,
                    dim + 1
                )));
            }
            let bad = || SimulatorError::Format(format!("line {}: bad number", ln + 2));
            let idx: Vec<usize> = fields[..dim]
                .iter()
                .map(|f| f.parse::<usize>().map_err(|_| bad()))
                .collect::<Result<_, _>>()?;
            let v: f64 = fields[dim].parse().map_err(|_| bad())?;
            cells.push((idx, v));
        }
        let mut extents = vec![0usize; dim];
        for (idx, _) in &cells {
            for (e, i) in extents.iter_mut().zip(idx) {
                *e = (*e).max(i + 1);
            }
        }
        let mut grid = Grid::zeros(extents, dtype)?;
        let strides = grid.strides();
        if cells.len() != grid.len() {
            return Err(SimulatorError::SizeMismatch {
                expected: grid.len(),
                got: cells.len(),
            });
        }
        for (idx, v) in cells {
            let flat: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
            grid.values[flat] = v;
        }
        Grid::new(grid.extents, grid.values, dtype)
    }
}

/// Work and compulsory traffic of one strategy over a whole grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExecutionTally {
    pub flops: u64,
    pub ideal_reads: u64,
    pub ideal_writes: u64,
    pub points_updated: u64,
    pub steps: u32,
}

impl ExecutionTally {
    /// Compulsory bytes per grid point for the whole chain.
    pub fn bytes_per_point(&self) -> f64 {
        (self.ideal_reads + self.ideal_writes) as f64 / self.points_updated as f64
    }
}

fn check_admissible(grid: &Grid, kernel: &Kernel, radius: u32) -> Result<(), SimulatorError> {
    if grid.dim() != kernel.dim() {
        return Err(SimulatorError::DimensionMismatch {
            grid: grid.dim(),
            kernel: kernel.dim(),
        });
    }
    let required = 2 * radius as usize + 1;
    for (axis, &extent) in grid.extents.iter().enumerate() {
        if extent < required {
            return Err(SimulatorError::InadmissibleExtent {
                axis,
                extent,
                required,
            });
        }
    }
    Ok(())
}

/// One application of `kernel` with periodic wrap.
fn apply(grid: &Grid, kernel: &Kernel) -> Vec<f64> {
    let extents = &grid.extents;
    let strides = grid.strides();
    let dim = grid.dim();
    // Per entry and axis: wrapped source offsets for every coordinate.
    let taps: Vec<(f64, Vec<Vec<usize>>)> = kernel
        .entries()
        .iter()
        .map(|(o, &w)| {
            let tables = (0..dim)
                .map(|a| {
                    let e = extents[a] as i64;
                    (0..e)
                        .map(|i| ((i + o.coords()[a] as i64).rem_euclid(e)) as usize * strides[a])
                        .collect()
                })
                .collect();
            (w, tables)
        })
        .collect();

    let slab = strides[0];
    let mut out = vec![0.0; grid.len()];
    out.par_chunks_mut(slab).enumerate().for_each(|(i0, chunk)| {
        for (w, tables) in &taps {
            let base = tables[0][i0];
            if dim == 1 {
                chunk[0] += w * grid.values[base];
                continue;
            }
            let mut coord = vec![0usize; dim - 1];
            for cell in chunk.iter_mut() {
                let src = base
                    + coord
                        .iter()
                        .enumerate()
                        .map(|(a, &c)| tables[a + 1][c])
                        .sum::<usize>();
                *cell += w * grid.values[src];
                for a in (0..dim - 1).rev() {
                    coord[a] += 1;
                    if coord[a] < extents[a + 1] {
                        break;
                    }
                    coord[a] = 0;
                }
            }
        }
    });
    out
}

/// Applies `kernel` `t` times in sequence.
pub fn run_iterated(
    grid: &Grid,
    kernel: &Kernel,
    t: u32,
) -> Result<(Grid, ExecutionTally), SimulatorError> {
    if t == 0 {
        return Err(KernelError::InvalidDepth(0).into());
    }
    check_admissible(grid, kernel, kernel.radius() * t)?;
    let mut current = grid.clone();
    for _ in 0..t {
        current.values = apply(&current, kernel);
    }
    let n = grid.len() as u64;
    let d = grid.dtype.bytes() as u64;
    let tally = ExecutionTally {
        flops: 2 * kernel.point_count() as u64 * n * t as u64,
        ideal_reads: d * n,
        ideal_writes: d * n,
        points_updated: n,
        steps: t,
    };
    Ok((current, tally))
}

/// Applies the fused kernel once.
pub fn run_fused(
    grid: &Grid,
    fused: &FusedKernel,
) -> Result<(Grid, ExecutionTally), SimulatorError> {
    check_admissible(grid, fused.kernel(), fused.radius())?;
    let values = apply(grid, fused.kernel());
    let n = grid.len() as u64;
    let d = grid.dtype.bytes() as u64;
    let tally = ExecutionTally {
        flops: 2 * fused.point_count() as u64 * n,
        ideal_reads: d * n,
        ideal_writes: d * n,
        points_updated: n,
        steps: 1,
    };
    Ok((
        Grid {
            values,
            ..grid.clone()
        },
        tally,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    /// `max |iterated - fused| / max |fused|`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub pass: bool,
    pub iterated: ExecutionTally,
    pub fused: ExecutionTally,
}

impl EquivalenceReport {
    /// `flops_fused / flops_iterated` as an exact fraction `(num, den)`.
    pub fn flop_ratio(&self) -> (u64, u64) {
        (self.fused.flops, self.iterated.flops)
    }
}

/// Runs both strategies and compares them.
pub fn equivalence_check(
    grid: &Grid,
    kernel: &Kernel,
    t: u32,
    tolerance: f64,
) -> Result<EquivalenceReport, SimulatorError> {
    let fused = fuse(kernel, t)?;
    equivalence_check_with(grid, kernel, &fused, tolerance)
}

/// Like [`equivalence_check`] but with a caller-supplied fused kernel.
pub fn equivalence_check_with(
    grid: &Grid,
    kernel: &Kernel,
    fused: &FusedKernel,
    tolerance: f64,
) -> Result<EquivalenceReport, SimulatorError> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(SimulatorError::BadTolerance);
    }
    let (a, iterated) = run_iterated(grid, kernel, fused.depth())?;
    let (b, fused_tally) = run_fused(grid, fused)?;
    let max_abs_error = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = b.values.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let max_rel_error = max_abs_error / scale;
    Ok(EquivalenceReport {
        max_rel_error,
        max_abs_error,
        pass: max_rel_error <= tolerance,
        iterated,
        fused: fused_tally,
    })
}
