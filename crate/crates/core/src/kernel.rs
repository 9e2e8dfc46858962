//! Stencil kernels and temporal kernel fusion.
//!
//! A [`Kernel`] is a set of integer neighbor offsets with real weights. Fusing
//! a kernel over `t` time steps produces its `t`-fold discrete
//! self-convolution; the fused support is tracked structurally (as a
//! Minkowski sum of supports) so the point count never depends on numeric
//! cancellation between weights.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Refuse fusion when the fused bounding volume exceeds this many cells.
pub const DEFAULT_SUPPORT_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("unknown stencil shape `{0}` (expected box, star or custom)")]
    UnknownShape(String),
    #[error("dimensionality must be at least 1")]
    ZeroDimension,
    #[error("radius must be at least 1 for {0} stencils")]
    ZeroRadius(Shape),
    #[error("offset {offset} has {got} coordinates, kernel is {expected}-dimensional")]
    DimensionMismatch {
        offset: Offset,
        expected: usize,
        got: usize,
    },
    #[error("weights do not cover the {shape} support: expected {expected} offsets, {detail}")]
    SupportMismatch {
        shape: Shape,
        expected: usize,
        detail: String,
    },
    #[error("weight at offset {0} is not finite")]
    NonFiniteWeight(Offset),
    #[error("kernel has no entries")]
    Empty,
    #[error("fusion depth must be at least 1, got {0}")]
    InvalidDepth(u32),
    #[error("fused bounding volume of {cells} cells exceeds the cap of {cap}")]
    SupportCapExceeded { cells: u128, cap: u64 },
    #[error("offset {0} is not part of the fused support")]
    NotInSupport(Offset),
}

/// Neighbor offset in grid-cell units. Ordering is lexicographic, which is
/// also the fixed accumulation order used when applying a kernel.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Offset(pub Vec<i32>);

impl Offset {
    pub fn new(coords: impl Into<Vec<i32>>) -> Self {
        Offset(coords.into())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i32] {
        &self.0
    }

    /// Largest absolute coordinate.
    pub fn chebyshev(&self) -> u32 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn manhattan(&self) -> u32 {
        self.0.iter().map(|c| c.unsigned_abs()).sum()
    }

    pub fn negated(&self) -> Offset {
        Offset(self.0.iter().map(|c| -c).collect())
    }
}

impl fmt::Display for Offset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Box,
    Star,
    Custom,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Box => "box",
            Shape::Star => "star",
            Shape::Custom => "custom",
        })
    }
}

impl FromStr for Shape {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "box" => Ok(Shape::Box),
            "star" => Ok(Shape::Star),
            "custom" => Ok(Shape::Custom),
            other => Err(KernelError::UnknownShape(other.to_string())),
        }
    }
}

/// A linear, constant-coefficient stencil kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    dim: usize,
    shape: Shape,
    radius: u32,
    entries: BTreeMap<Offset, f64>,
}

/// Offsets of the canonical support of a box or star stencil.
pub fn shape_support(shape: Shape, dim: usize, radius: u32) -> Vec<Offset> {
    let r = radius as i32;
    match shape {
        Shape::Box => {
            let side = (2 * r + 1) as usize;
            let total = side.pow(dim as u32);
            (0..total)
                .map(|mut idx| {
                    let mut coords = vec![0i32; dim];
                    for c in coords.iter_mut().rev() {
                        *c = (idx % side) as i32 - r;
                        idx /= side;
                    }
                    Offset(coords)
                })
                .collect()
        }
        Shape::Star => {
            let mut out = vec![Offset(vec![0; dim])];
            for axis in 0..dim {
                for step in 1..=r {
                    for sign in [-1, 1] {
                        let mut coords = vec![0; dim];
                        coords[axis] = sign * step;
                        out.push(Offset(coords));
                    }
                }
            }
            out.sort();
            out
        }
        Shape::Custom => Vec::new(),
    }
}

impl Kernel {
    /// Builds a box or star kernel. Without explicit weights every point gets
    /// weight `1/K`.
    pub fn new(
        shape: Shape,
        dim: usize,
        radius: u32,
        weights: Option<BTreeMap<Offset, f64>>,
    ) -> Result<Self, KernelError> {
        if dim == 0 {
            return Err(KernelError::ZeroDimension);
        }
        if shape == Shape::Custom {
            return match weights {
                Some(w) => Kernel::custom(dim, w),
                None => Err(KernelError::Empty),
            };
        }
        if radius == 0 {
            return Err(KernelError::ZeroRadius(shape));
        }
        let support = shape_support(shape, dim, radius);
        let entries = match weights {
            None => {
                let w = 1.0 / support.len() as f64;
                support.into_iter().map(|o| (o, w)).collect()
            }
            Some(weights) => {
                for (o, w) in &weights {
                    check_entry(dim, o, *w)?;
                }
                let missing = support.iter().filter(|o| !weights.contains_key(o)).count();
                let extra = weights.len() + missing - support.len();
                if missing > 0 || extra > 0 {
                    return Err(KernelError::SupportMismatch {
                        shape,
                        expected: support.len(),
                        detail: format!("{missing} missing, {extra} outside the shape"),
                    });
                }
                weights
            }
        };
        Ok(Kernel {
            dim,
            shape,
            radius,
            entries,
        })
    }

    pub fn boxed(dim: usize, radius: u32) -> Result<Self, KernelError> {
        Kernel::new(Shape::Box, dim, radius, None)
    }

    pub fn star(dim: usize, radius: u32) -> Result<Self, KernelError> {
        Kernel::new(Shape::Star, dim, radius, None)
    }

    /// Arbitrary support. The radius is the largest absolute coordinate.
    pub fn custom(dim: usize, entries: BTreeMap<Offset, f64>) -> Result<Self, KernelError> {
        if dim == 0 {
            return Err(KernelError::ZeroDimension);
        }
        if entries.is_empty() {
            return Err(KernelError::Empty);
        }
        for (o, w) in &entries {
            check_entry(dim, o, *w)?;
        }
        let radius = entries.keys().map(Offset::chebyshev).max().unwrap_or(0);
        Ok(Kernel {
            dim,
            shape: Shape::Custom,
            radius,
            entries,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    /// Number of spatial points `K`.
    pub fn point_count(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &BTreeMap<Offset, f64> {
        &self.entries
    }

    pub fn weight(&self, offset: &Offset) -> Option<f64> {
        self.entries.get(offset).copied()
    }

    pub fn weight_sum(&self) -> f64 {
        self.entries.values().sum()
    }

    /// True when the support is invariant under `o -> -o`.
    pub fn is_centrally_symmetric(&self) -> bool {
        self.entries
            .keys()
            .all(|o| self.entries.contains_key(&o.negated()))
    }

    /// Short label such as `Box-2D1R`.
    pub fn label(&self) -> String {
        let shape = match self.shape {
            Shape::Box => "Box",
            Shape::Star => "Star",
            Shape::Custom => "Custom",
        };
        format!("{shape}-{}D{}R", self.dim, self.radius)
    }
}

fn check_entry(dim: usize, offset: &Offset, weight: f64) -> Result<(), KernelError> {
    if offset.dim() != dim {
        return Err(KernelError::DimensionMismatch {
            offset: offset.clone(),
            expected: dim,
            got: offset.dim(),
        });
    }
    if !weight.is_finite() {
        return Err(KernelError::NonFiniteWeight(offset.clone()));
    }
    Ok(())
}

/// `point_count` as a free function, for symmetry with the other operations.
pub fn point_count(kernel: &Kernel) -> usize {
    kernel.point_count()
}

/// A kernel fused over `depth` time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedKernel {
    base: Kernel,
    depth: u32,
    fused: Kernel,
}

impl FusedKernel {
    pub fn base(&self) -> &Kernel {
        &self.base
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// The fused kernel as a plain (custom-shaped) kernel.
    pub fn kernel(&self) -> &Kernel {
        &self.fused
    }

    pub fn entries(&self) -> &BTreeMap<Offset, f64> {
        self.fused.entries()
    }

    /// `K_t`, the number of points in the fused support.
    pub fn point_count(&self) -> usize {
        self.fused.point_count()
    }

    /// Effective radius `r * t`.
    pub fn radius(&self) -> u32 {
        self.base.radius * self.depth
    }

    /// Redundancy factor `K_t / (t K)`.
    pub fn alpha(&self) -> Ratio<u64> {
        Ratio::new(
            self.point_count() as u64,
            self.depth as u64 * self.base.point_count() as u64,
        )
    }

    /// Overwrites the weight at an existing support offset. The support
    /// itself cannot change.
    pub fn set_weight(&mut self, offset: &Offset, weight: f64) -> Result<(), KernelError> {
        if !weight.is_finite() {
            return Err(KernelError::NonFiniteWeight(offset.clone()));
        }
        match self.fused.entries.get_mut(offset) {
            Some(w) => {
                *w = weight;
                Ok(())
            }
            None => Err(KernelError::NotInSupport(offset.clone())),
        }
    }
}

/// Dense scratch box of side `2R+1` per axis, row-major.
struct DenseBox {
    dim: usize,
    radius: i64,
    side: usize,
}

impl DenseBox {
    fn new(dim: usize, radius: u32, cap: u64) -> Result<Self, KernelError> {
        let side = 2 * radius as u128 + 1;
        let cells = side.checked_pow(dim as u32).unwrap_or(u128::MAX);
        if cells > cap as u128 {
            return Err(KernelError::SupportCapExceeded { cells, cap });
        }
        Ok(DenseBox {
            dim,
            radius: radius as i64,
            side: side as usize,
        })
    }

    fn cells(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    fn index(&self, offset: &Offset) -> usize {
        offset
            .coords()
            .iter()
            .fold(0usize, |acc, &c| acc * self.side + (c as i64 + self.radius) as usize)
    }

    /// Signed flat delta of an offset; valid because every sum stays inside the box.
    fn delta(&self, offset: &Offset) -> isize {
        offset
            .coords()
            .iter()
            .fold(0isize, |acc, &c| acc * self.side as isize + c as isize)
    }

    fn offset(&self, mut idx: usize) -> Offset {
        let mut coords = vec![0i32; self.dim];
        for c in coords.iter_mut().rev() {
            *c = ((idx % self.side) as i64 - self.radius) as i32;
            idx /= self.side;
        }
        Offset(coords)
    }
}

/// Fuses `kernel` over `t` steps with the default support cap.
pub fn fuse(kernel: &Kernel, t: u32) -> Result<FusedKernel, KernelError> {
    fuse_with_cap(kernel, t, DEFAULT_SUPPORT_CAP)
}

pub fn fuse_with_cap(kernel: &Kernel, t: u32, cap: u64) -> Result<FusedKernel, KernelError> {
    if t == 0 {
        return Err(KernelError::InvalidDepth(t));
    }
    if t == 1 {
        return Ok(FusedKernel {
            base: kernel.clone(),
            depth: 1,
            fused: kernel.clone(),
        });
    }
    let scratch = DenseBox::new(kernel.dim, kernel.radius * t, cap)?;
    let taps: Vec<(isize, f64)> = kernel
        .entries
        .iter()
        .map(|(o, &w)| (scratch.delta(o), w))
        .collect();

    let mut weights = vec![0.0f64; scratch.cells()];
    let mut support = vec![false; scratch.cells()];
    for (o, &w) in &kernel.entries {
        let i = scratch.index(o);
        weights[i] = w;
        support[i] = true;
    }
    let mut next_weights = vec![0.0f64; scratch.cells()];
    let mut next_support = vec![false; scratch.cells()];
    for _ in 1..t {
        next_weights.iter_mut().for_each(|w| *w = 0.0);
        next_support.iter_mut().for_each(|s| *s = false);
        for (i, _) in support.iter().enumerate().filter(|(_, s)| **s) {
            let w = weights[i];
            for &(delta, tap) in &taps {
                let j = (i as isize + delta) as usize;
                next_weights[j] += w * tap;
                next_support[j] = true;
            }
        }
        std::mem::swap(&mut weights, &mut next_weights);
        std::mem::swap(&mut support, &mut next_support);
    }

    let entries: BTreeMap<Offset, f64> = support
        .iter()
        .enumerate()
        .filter(|(_, s)| **s)
        .map(|(i, _)| (scratch.offset(i), weights[i]))
        .collect();
    let fused = Kernel {
        dim: kernel.dim,
        shape: Shape::Custom,
        radius: kernel.radius * t,
        entries,
    };
    Ok(FusedKernel {
        base: kernel.clone(),
        depth: t,
        fused,
    })
}

/// `K_t` for every depth `1..=max_t`, enumerating the support only.
pub fn fused_point_counts(kernel: &Kernel, max_t: u32) -> Result<Vec<u64>, KernelError> {
    if max_t == 0 {
        return Err(KernelError::InvalidDepth(0));
    }
    let scratch = DenseBox::new(kernel.dim, kernel.radius * max_t, DEFAULT_SUPPORT_CAP)?;
    let deltas: Vec<isize> = kernel.entries.keys().map(|o| scratch.delta(o)).collect();
    let mut support = vec![false; scratch.cells()];
    for o in kernel.entries.keys() {
        support[scratch.index(o)] = true;
    }
    let mut counts = vec![kernel.point_count() as u64];
    let mut next = vec![false; scratch.cells()];
    for _ in 1..max_t {
        next.iter_mut().for_each(|s| *s = false);
        for (i, _) in support.iter().enumerate().filter(|(_, s)| **s) {
            for &d in &deltas {
                next[(i as isize + d) as usize] = true;
            }
        }
        std::mem::swap(&mut support, &mut next);
        counts.push(support.iter().filter(|s| **s).count() as u64);
    }
    Ok(counts)
}

/// Exact redundancy factor `K_t / (t K)` from the enumerated fused support.
pub fn alpha_exact(kernel: &Kernel, t: u32) -> Result<Ratio<u64>, KernelError> {
    let counts = fused_point_counts(kernel, t)?;
    let k_t = *counts.last().expect("at least one depth");
    Ok(Ratio::new(k_t, t as u64 * kernel.point_count() as u64))
}

pub fn alpha(kernel: &Kernel, t: u32) -> Result<f64, KernelError> {
    alpha_exact(kernel, t).map(ratio_to_f64)
}

/// Closed form `(2rt+1)^d / (t (2r+1)^d)` for box kernels.
pub fn box_alpha_closed_form(dim: u32, radius: u32, t: u32) -> Ratio<u64> {
    let fused = (2 * radius as u64 * t as u64 + 1).pow(dim);
    let base = (2 * radius as u64 + 1).pow(dim);
    Ratio::new(fused, t as u64 * base)
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_point_counts() {
        assert_eq!(Kernel::boxed(2, 1).unwrap().point_count(), 9);
        assert_eq!(Kernel::star(2, 1).unwrap().point_count(), 5);
        assert_eq!(Kernel::boxed(2, 3).unwrap().point_count(), 49);
        assert_eq!(Kernel::boxed(3, 1).unwrap().point_count(), 27);
        assert_eq!(Kernel::boxed(2, 7).unwrap().point_count(), 225);
        assert_eq!(Kernel::star(3, 2).unwrap().point_count(), 13);
    }

    #[test]
    fn default_weights_are_normalized() {
        let k = Kernel::boxed(2, 1).unwrap();
        assert!(k.entries().values().all(|&w| w == 1.0 / 9.0));
        assert!((k.weight_sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constructor_errors() {
        assert_eq!(
            "hexagon".parse::<Shape>(),
            Err(KernelError::UnknownShape("hexagon".into()))
        );
        assert_eq!(Kernel::boxed(0, 1), Err(KernelError::ZeroDimension));
        assert_eq!(Kernel::star(2, 0), Err(KernelError::ZeroRadius(Shape::Star)));

        let mut w: BTreeMap<Offset, f64> = shape_support(Shape::Star, 2, 1)
            .into_iter()
            .map(|o| (o, 0.2))
            .collect();
        w.remove(&Offset::new([0, 1]));
        assert!(matches!(
            Kernel::new(Shape::Star, 2, 1, Some(w.clone())),
            Err(KernelError::SupportMismatch { .. })
        ));
        w.insert(Offset::new([0, 1]), 0.2);
        w.insert(Offset::new([1, 1]), 0.2);
        assert!(matches!(
            Kernel::new(Shape::Star, 2, 1, Some(w.clone())),
            Err(KernelError::SupportMismatch { .. })
        ));
        w.remove(&Offset::new([1, 1]));
        w.insert(Offset::new([0, 0]), f64::NAN);
        assert!(matches!(
            Kernel::new(Shape::Star, 2, 1, Some(w)),
            Err(KernelError::NonFiniteWeight(_))
        ));
    }

    #[test]
    fn explicit_weights_override_default() {
        let w: BTreeMap<Offset, f64> = shape_support(Shape::Box, 1, 1)
            .into_iter()
            .zip([0.25, 0.5, 0.25])
            .collect();
        let k = Kernel::new(Shape::Box, 1, 1, Some(w)).unwrap();
        assert_eq!(k.weight(&Offset::new([0])), Some(0.5));
    }

    #[test]
    fn fuse_box_2d_depth_3_spans_7x7() {
        let f = fuse(&Kernel::boxed(2, 1).unwrap(), 3).unwrap();
        assert_eq!(f.point_count(), 49);
        assert!(f.entries().keys().all(|o| o.chebyshev() <= 3));
        assert_eq!(f.alpha(), Ratio::new(49, 27));
    }

    #[test]
    fn fuse_depth_one_is_identity() {
        let k = Kernel::star(3, 2).unwrap();
        let f = fuse(&k, 1).unwrap();
        assert_eq!(f.entries(), k.entries());
        assert_eq!(f.point_count(), k.point_count());
    }

    #[test]
    fn fuse_star_2d_depth_2_is_diamond() {
        let f = fuse(&Kernel::star(2, 1).unwrap(), 2).unwrap();
        assert_eq!(f.point_count(), 13);
        assert!(f.entries().keys().all(|o| o.manhattan() <= 2));
    }

    #[test]
    fn fused_weights_match_convolution() {
        // [a, b, c] * [a, b, c] = [a^2, 2ab, 2ac + b^2, 2bc, c^2]
        let w: BTreeMap<Offset, f64> = shape_support(Shape::Box, 1, 1)
            .into_iter()
            .zip([1.0, 2.0, 3.0])
            .collect();
        let k = Kernel::new(Shape::Box, 1, 1, Some(w)).unwrap();
        let f = fuse(&k, 2).unwrap();
        let got: Vec<f64> = f.entries().values().copied().collect();
        assert_eq!(got, vec![1.0, 4.0, 10.0, 12.0, 9.0]);
    }

    #[test]
    fn cancelling_weights_keep_structural_support() {
        // [1, 0, -1] squared has a numerically zero center but K_t stays 5.
        let w: BTreeMap<Offset, f64> = shape_support(Shape::Box, 1, 1)
            .into_iter()
            .zip([1.0, 0.0, -1.0])
            .collect();
        let k = Kernel::new(Shape::Box, 1, 1, Some(w)).unwrap();
        let f = fuse(&k, 2).unwrap();
        assert_eq!(f.point_count(), 5);
        assert_eq!(f.kernel().weight(&Offset::new([0])), Some(-2.0));
        assert_eq!(f.kernel().weight(&Offset::new([1])), Some(0.0));
    }

    #[test]
    fn fuse_rejects_bad_depth_and_cap() {
        let k = Kernel::boxed(3, 3).unwrap();
        assert_eq!(fuse(&k, 0), Err(KernelError::InvalidDepth(0)));
        // (2*3*500+1)^3 is far beyond 10^8.
        assert!(matches!(
            fuse(&k, 500),
            Err(KernelError::SupportCapExceeded { .. })
        ));
        assert!(matches!(
            fuse_with_cap(&Kernel::boxed(2, 1).unwrap(), 3, 48),
            Err(KernelError::SupportCapExceeded { cells: 49, cap: 48 })
        ));
    }

    #[test]
    fn alpha_reference_values() {
        let b2 = Kernel::boxed(2, 1).unwrap();
        assert_eq!(alpha_exact(&b2, 3).unwrap(), Ratio::new(49, 27));
        assert_eq!(alpha_exact(&b2, 7).unwrap(), Ratio::new(225, 63));
        let b3 = Kernel::boxed(3, 1).unwrap();
        assert_eq!(alpha_exact(&b3, 7).unwrap(), Ratio::new(3375, 189));
        assert_eq!(alpha_exact(&b3, 3).unwrap(), Ratio::new(343, 81));
        assert_eq!(alpha(&Kernel::star(2, 2).unwrap(), 1).unwrap(), 1.0);
    }

    #[test]
    fn fused_counts_agree_with_fuse() {
        let k = Kernel::star(3, 1).unwrap();
        let counts = fused_point_counts(&k, 4).unwrap();
        for (i, &c) in counts.iter().enumerate() {
            assert_eq!(c as usize, fuse(&k, i as u32 + 1).unwrap().point_count());
        }
    }

    #[test]
    fn set_weight_only_on_support() {
        let mut f = fuse(&Kernel::star(2, 1).unwrap(), 2).unwrap();
        assert!(f.set_weight(&Offset::new([0, 0]), 1.0).is_ok());
        assert_eq!(
            f.set_weight(&Offset::new([2, 2]), 1.0),
            Err(KernelError::NotInSupport(Offset::new([2, 2])))
        );
    }

    #[test]
    fn custom_kernel_radius_and_symmetry() {
        let entries: BTreeMap<Offset, f64> = [(Offset::new([0, 0]), 0.5), (Offset::new([2, -1]), 0.5)]
            .into_iter()
            .collect();
        let k = Kernel::custom(2, entries).unwrap();
        assert_eq!(k.radius(), 2);
        assert!(!k.is_centrally_symmetric());
        assert!(Kernel::boxed(3, 2).unwrap().is_centrally_symmetric());
    }
}
