//! Mapping stencil kernels onto MMA operands.
//!
//! Two adaptation schemes are modeled. Flattening linearizes the whole kernel
//! along the reduction axis (im2col style) and stacks one row per output
//! alignment. Decomposition splits the kernel into one vector per line and
//! replicates each vector across a tile so it reaches the MMA row count.
//! Either way the operand is then padded to the MMA tile, and the fraction of
//! structurally nonzero entries is the sparsity factor.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{FusedKernel, Kernel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("sparsity factor must lie in (0, 1], got {0}")]
    SparsityOutOfRange(f64),
    #[error("ideal operation count must be non-negative and finite, got {0}")]
    NegativeOps(f64),
    #[error("decomposition needs a kernel of at least 2 dimensions, got {0}")]
    DecompositionNeedsTwoDims(usize),
    #[error("MMA dimensions must be positive, got m{m}n{n}k{k}")]
    InvalidMma { m: usize, n: usize, k: usize },
    #[error("unknown transformation scheme `{0}` (expected flattening or decomposition)")]
    UnknownScheme(String),
    #[error("2:4 constraint violated in {} group(s), first at row {}, column {}", .0.len(), .0[0].0, .0[0].1)]
    Not2to4(Vec<(usize, usize)>),
    #[error("malformed 2:4 compressed matrix: {0}")]
    BadCompressed(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Sparsity factor: the fraction of structurally nonzero operand entries.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Sparsity(f64);

impl Sparsity {
    pub const DENSE: Sparsity = Sparsity(1.0);
    /// Half of the operand is padding.
    pub const HALF: Sparsity = Sparsity(0.5);
    /// The published 0.47 of the replication-based sparse scheme, taken as the
    /// exact ratio 15/32 (15 nonzeros in a 32-wide 2:4 row).
    pub const FIFTEEN_32NDS: Sparsity = Sparsity(15.0 / 32.0);
    /// The same constant taken literally.
    pub const LITERAL_047: Sparsity = Sparsity(0.47);

    pub fn new(value: f64) -> Result<Self, TransformError> {
        if value > 0.0 && value <= 1.0 {
            Ok(Sparsity(value))
        } else {
            Err(TransformError::SparsityOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Sparsity {
    type Error = TransformError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Sparsity::new(value)
    }
}

impl From<Sparsity> for f64 {
    fn from(s: Sparsity) -> f64 {
        s.0
    }
}

impl fmt::Display for Sparsity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.0)
    }
}

/// Executed operations `C / S` for an ideal operation count `C`.
pub fn effective_ops(ideal_ops: f64, sparsity: f64) -> Result<f64, TransformError> {
    let s = Sparsity::new(sparsity)?;
    if !(ideal_ops >= 0.0 && ideal_ops.is_finite()) {
        return Err(TransformError::NegativeOps(ideal_ops));
    }
    Ok(ideal_ops / s.value())
}

/// MMA tile shape `mMnNkK`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MmaShape {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl MmaShape {
    /// `m8n8k4`, the double-precision instruction shape.
    pub const M8N8K4: MmaShape = MmaShape { m: 8, n: 8, k: 4 };
    /// `m16n8k16`, used for single precision.
    pub const M16N8K16: MmaShape = MmaShape { m: 16, n: 8, k: 16 };

    pub fn new(m: usize, n: usize, k: usize) -> Result<Self, TransformError> {
        if m == 0 || n == 0 || k == 0 {
            return Err(TransformError::InvalidMma { m, n, k });
        }
        Ok(MmaShape { m, n, k })
    }

    /// Preset for an element size in bytes.
    pub fn for_element_bytes(bytes: usize) -> MmaShape {
        match bytes {
            8 => MmaShape::M8N8K4,
            _ => MmaShape::M16N8K16,
        }
    }
}

impl fmt::Display for MmaShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}n{}k{}", self.m, self.n, self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Flattening,
    Decomposition,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Flattening => "flattening",
            SchemeKind::Decomposition => "decomposition",
        })
    }
}

impl FromStr for SchemeKind {
    type Err = TransformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "flattening" | "flatten" => Ok(SchemeKind::Flattening),
            "decomposition" | "decompose" => Ok(SchemeKind::Decomposition),
            other => Err(TransformError::UnknownScheme(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformScheme {
    pub kind: SchemeKind,
    pub mma: MmaShape,
    /// Published sparsity to report instead of the constructed one.
    pub sparsity_override: Option<Sparsity>,
}

impl TransformScheme {
    pub fn new(kind: SchemeKind, mma: MmaShape) -> Self {
        TransformScheme {
            kind,
            mma,
            sparsity_override: None,
        }
    }

    pub fn with_override(mut self, sparsity: Sparsity) -> Self {
        self.sparsity_override = Some(sparsity);
        self
    }
}

/// A padded operand matrix. Entries are stored row-major together with a
/// structural mask, so a weight that happens to be zero still counts as work.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedOperands {
    pub rows: usize,
    pub cols: usize,
    /// Dimensions before replication and padding.
    pub raw_rows: usize,
    pub raw_cols: usize,
    pub nonzeros: usize,
    pub sparsity: f64,
    pub scheme: TransformScheme,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl TransformedOperands {
    fn from_rows(
        scheme: TransformScheme,
        raw_rows: usize,
        raw_cols: usize,
        rows: Vec<Vec<Option<f64>>>,
    ) -> Self {
        let used_cols = rows.iter().map(Vec::len).max().unwrap_or(0);
        let padded_rows = round_up(rows.len(), scheme.mma.m);
        let padded_cols = round_up(used_cols, scheme.mma.k);
        let mut values = vec![0.0; padded_rows * padded_cols];
        let mut mask = vec![false; padded_rows * padded_cols];
        for (i, row) in rows.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if let Some(w) = cell {
                    values[i * padded_cols + j] = *w;
                    mask[i * padded_cols + j] = true;
                }
            }
        }
        let nonzeros = mask.iter().filter(|m| **m).count();
        let structural = nonzeros as f64 / (padded_rows * padded_cols) as f64;
        TransformedOperands {
            rows: padded_rows,
            cols: padded_cols,
            raw_rows,
            raw_cols,
            nonzeros,
            sparsity: scheme
                .sparsity_override
                .map(Sparsity::value)
                .unwrap_or(structural),
            scheme,
            values,
            mask,
        }
    }

    /// Sparsity of the constructed matrix, ignoring any override.
    pub fn structural_sparsity(&self) -> f64 {
        self.nonzeros as f64 / (self.rows * self.cols) as f64
    }

    /// Fraction of padded rows that hold kernel data.
    pub fn row_utilization(&self) -> f64 {
        self.raw_rows as f64 / self.rows as f64
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn is_structural(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.cols + col]
    }

    pub fn mask_rows(&self) -> Vec<Vec<bool>> {
        self.mask.chunks(self.cols).map(<[bool]>::to_vec).collect()
    }

    pub fn value_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// Row-major CSV, structural zeros written as `0`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), TransformError> {
        for row in self.values.chunks(self.cols) {
            let line: Vec<String> = row
                .iter()
                .map(|v| if *v == 0.0 { "0".to_string() } else { format!("{v:?}") })
                .collect();
            writeln!(out, "{}", line.join(",")).map_err(|e| TransformError::Io(e.to_string()))?;
        }
        Ok(())
    }
}

fn round_up(value: usize, multiple: usize) -> usize {
    value.div_ceil(multiple) * multiple
}

/// Builds the MMA operand for a (possibly fused) kernel.
pub fn build_operands(
    fused: &FusedKernel,
    scheme: &TransformScheme,
) -> Result<TransformedOperands, TransformError> {
    build_kernel_operands(fused.kernel(), scheme)
}

pub fn build_kernel_operands(
    kernel: &Kernel,
    scheme: &TransformScheme,
) -> Result<TransformedOperands, TransformError> {
    let MmaShape { m, n, k } = scheme.mma;
    MmaShape::new(m, n, k)?;
    match scheme.kind {
        SchemeKind::Flattening => Ok(flatten(kernel, scheme)),
        SchemeKind::Decomposition => decompose(kernel, scheme),
    }
}

fn flatten(kernel: &Kernel, scheme: &TransformScheme) -> TransformedOperands {
    let linear: Vec<Option<f64>> = kernel.entries().values().map(|w| Some(*w)).collect();
    let (lo, hi) = axis_extent(kernel, 0);
    let variants = (hi - lo + 1) as usize;
    let rows = vec![linear.clone(); variants];
    TransformedOperands::from_rows(*scheme, variants, linear.len(), rows)
}

fn decompose(
    kernel: &Kernel,
    scheme: &TransformScheme,
) -> Result<TransformedOperands, TransformError> {
    if kernel.dim() < 2 {
        return Err(TransformError::DecompositionNeedsTwoDims(kernel.dim()));
    }
    // One vector per line along the last axis, keyed by the other coordinates.
    let mut lines: BTreeMap<Vec<i32>, Vec<(i32, f64)>> = BTreeMap::new();
    for (offset, &w) in kernel.entries() {
        let (last, rest) = offset.coords().split_last().expect("dim >= 2");
        lines.entry(rest.to_vec()).or_default().push((*last, w));
    }
    let span = |line: &[(i32, f64)]| {
        let lo = line.iter().map(|(c, _)| *c).min().unwrap_or(0);
        let hi = line.iter().map(|(c, _)| *c).max().unwrap_or(0);
        (lo, (hi - lo + 1) as usize)
    };
    let longest = lines.values().map(|l| span(l).1).max().unwrap_or(0);
    let width = round_up(longest.max(scheme.mma.n), scheme.mma.k);

    let mut rows = Vec::with_capacity(lines.len() * scheme.mma.m);
    for line in lines.values() {
        let (lo, _) = span(line);
        for shift in 0..scheme.mma.m {
            let mut row = vec![None; width];
            for &(c, w) in line {
                row[(shift + (c - lo) as usize) % width] = Some(w);
            }
            rows.push(row);
        }
    }
    Ok(TransformedOperands::from_rows(
        *scheme,
        lines.len(),
        longest,
        rows,
    ))
}

fn axis_extent(kernel: &Kernel, axis: usize) -> (i32, i32) {
    let coords = kernel.entries().keys().map(|o| o.coords()[axis]);
    let lo = coords.clone().min().unwrap_or(0);
    let hi = coords.max().unwrap_or(0);
    (lo, hi)
}

/// Result of checking the 2:4 structured-sparsity constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SparseCheckReport {
    pub satisfies_2to4: bool,
    /// `(row, first column of the group)` for every group with more than two
    /// nonzeros.
    pub violating_groups: Vec<(usize, usize)>,
    /// Column count after padding rows to a multiple of 4.
    pub padded_cols: usize,
    /// `padded_cols / 2` when the constraint holds.
    pub compressed_cols: Option<usize>,
}

/// Checks a structural mask for the 2:4 constraint.
pub fn check_2to4_mask(rows: &[Vec<bool>]) -> SparseCheckReport {
    let cols = round_up(rows.iter().map(Vec::len).max().unwrap_or(0), 4);
    let mut violating_groups = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        for start in (0..cols).step_by(4) {
            let count = (start..start + 4)
                .filter(|&c| row.get(c).copied().unwrap_or(false))
                .count();
            if count > 2 {
                violating_groups.push((r, start));
            }
        }
    }
    let satisfies_2to4 = violating_groups.is_empty();
    SparseCheckReport {
        satisfies_2to4,
        violating_groups,
        padded_cols: cols,
        compressed_cols: satisfies_2to4.then_some(cols / 2),
    }
}

/// Checks numeric rows, treating nonzero values as structural nonzeros.
pub fn check_2to4(rows: &[Vec<f64>]) -> SparseCheckReport {
    let mask: Vec<Vec<bool>> = rows
        .iter()
        .map(|r| r.iter().map(|v| *v != 0.0).collect())
        .collect();
    check_2to4_mask(&mask)
}

/// 2:4 compressed matrix: two values and two in-group positions per group of
/// four.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Compressed2to4 {
    pub rows: usize,
    /// Uncompressed column count (a multiple of 4).
    pub cols: usize,
    pub values: Vec<Vec<f64>>,
    /// In-group positions `0..4`, one per kept value.
    pub positions: Vec<Vec<u8>>,
}

impl Compressed2to4 {
    pub fn kept_values(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn metadata_bits(&self) -> usize {
        2 * self.kept_values()
    }

    /// Positions packed four to a byte, low bits first, row after row.
    pub fn packed_metadata(&self) -> Vec<u8> {
        let flat: Vec<u8> = self.positions.iter().flatten().copied().collect();
        flat.chunks(4)
            .map(|chunk| {
                chunk
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (i, p)| acc | (p & 0b11) << (2 * i))
            })
            .collect()
    }
}

/// Compresses rows satisfying 2:4. Groups with fewer than two nonzeros are
/// filled with zeros at the lowest unused positions; an all-zero group keeps
/// positions `(0, 1)`.
pub fn compress_2to4(rows: &[Vec<f64>]) -> Result<Compressed2to4, TransformError> {
    let report = check_2to4(rows);
    if !report.satisfies_2to4 {
        return Err(TransformError::Not2to4(report.violating_groups));
    }
    let cols = report.padded_cols;
    let mut values = Vec::with_capacity(rows.len());
    let mut positions = Vec::with_capacity(rows.len());
    for row in rows {
        let mut row_values = Vec::with_capacity(cols / 2);
        let mut row_positions = Vec::with_capacity(cols / 2);
        for start in (0..cols).step_by(4) {
            let group: Vec<f64> = (start..start + 4)
                .map(|c| row.get(c).copied().unwrap_or(0.0))
                .collect();
            let mut kept: Vec<u8> = (0..4u8).filter(|&p| group[p as usize] != 0.0).collect();
            for p in 0..4u8 {
                if kept.len() == 2 {
                    break;
                }
                if !kept.contains(&p) {
                    kept.push(p);
                }
            }
            kept.sort_unstable();
            for p in kept {
                row_positions.push(p);
                row_values.push(group[p as usize]);
            }
        }
        values.push(row_values);
        positions.push(row_positions);
    }
    Ok(Compressed2to4 {
        rows: rows.len(),
        cols,
        values,
        positions,
    })
}

/// Expands a compressed matrix back to `rows x cols`.
pub fn decompress_2to4(c: &Compressed2to4) -> Result<Vec<Vec<f64>>, TransformError> {
    if c.values.len() != c.rows || c.positions.len() != c.rows || !c.cols.is_multiple_of(4) {
        return Err(TransformError::BadCompressed("row or column count".into()));
    }
    let mut out = Vec::with_capacity(c.rows);
    for (vals, pos) in c.values.iter().zip(&c.positions) {
        if vals.len() != c.cols / 2 || pos.len() != c.cols / 2 {
            return Err(TransformError::BadCompressed("row length".into()));
        }
        let mut row = vec![0.0; c.cols];
        for (g, (v, p)) in vals.chunks(2).zip(pos.chunks(2)).enumerate() {
            if p[0] >= p[1] || p[1] > 3 {
                return Err(TransformError::BadCompressed(format!(
                    "group {g} positions {p:?}"
                )));
            }
            row[4 * g + p[0] as usize] = v[0];
            row[4 * g + p[1] as usize] = v[1];
        }
        out.push(row);
    }
    Ok(out)
}
