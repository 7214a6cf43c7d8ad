//! Depth and disparity rasters and their postprocessing.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};

/// What the values of a [`DepthMap`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DepthKind {
    Depth,
    Disparity,
    /// Depth rescaled into `[0, 255]`.
    Normalized8Bit,
}

impl DepthKind {
    pub fn name(self) -> &'static str {
        match self {
            DepthKind::Depth => "depth",
            DepthKind::Disparity => "disparity",
            DepthKind::Normalized8Bit => "normalized8bit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Provenance {
    #[default]
    Predicted,
    GroundTruth,
}

/// Per-pixel depth (or disparity) with a validity mask. Values under a false
/// mask are meaningless and never read by the numeric routines.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub values: Raster<f64>,
    pub mask: Mask,
    pub kind: DepthKind,
    pub provenance: Provenance,
}

impl DepthMap {
    /// All pixels valid except non-finite ones.
    pub fn new(values: Raster<f64>, kind: DepthKind) -> Self {
        let mask = values.map(|v| v.is_finite());
        Self {
            values,
            mask,
            kind,
            provenance: Provenance::Predicted,
        }
    }

    pub fn with_mask(values: Raster<f64>, mask: Mask, kind: DepthKind) -> Result<Self> {
        values.ensure_same_shape(&mask)?;
        let mask = Raster::from_fn(values.width(), values.height(), |u, v| {
            mask.at(u, v) && values.at(u, v).is_finite()
        });
        Ok(Self {
            values,
            mask,
            kind,
            provenance: Provenance::Predicted,
        })
    }

    pub fn from_vec(width: usize, height: usize, values: Vec<f64>, kind: DepthKind) -> Result<Self> {
        Ok(Self::new(Raster::from_vec(width, height, values)?, kind))
    }

    pub fn ground_truth(mut self) -> Self {
        self.provenance = Provenance::GroundTruth;
        self
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.values.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.values.height()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.mask.at(u, v)
    }

    pub fn valid_count(&self) -> usize {
        self.mask.as_slice().iter().filter(|m| **m).count()
    }

    /// Iterator over values at valid pixels, row-major.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .as_slice()
            .iter()
            .zip(self.mask.as_slice())
            .filter_map(|(v, m)| m.then_some(*v))
    }

    /// Values with invalid pixels replaced by 0.
    pub fn intensity(&self) -> Raster<f64> {
        Raster::from_fn(self.width(), self.height(), |u, v| {
            if self.mask.at(u, v) {
                self.values.at(u, v)
            } else {
                0.0
            }
        })
    }

    /// Intersects `mask` into this map's validity.
    pub fn apply_mask(&mut self, mask: &Mask) -> Result<()> {
        self.mask.ensure_same_shape(mask)?;
        for (m, keep) in self.mask.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *m &= *keep;
        }
        Ok(())
    }

    pub fn scaled(&self, scale: f64) -> Self {
        let mut out = self.clone();
        for (v, m) in out.values.as_mut_slice().iter_mut().zip(self.mask.as_slice()) {
            if *m {
                *v *= scale;
            }
        }
        out
    }

    fn ensure_kind(&self, expected: DepthKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::WrongKind {
                expected: expected.name(),
                got: self.kind.name(),
            });
        }
        Ok(())
    }
}

/// Pinhole camera parameters plus the stereo baseline used for disparity
/// conversion. Pixel `(u, v)` is column `u`, row `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub baseline: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, baseline: f64) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            baseline,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite()) {
            return Err(Error::InvalidIntrinsics("fx must be positive"));
        }
        if !(self.fy > 0.0 && self.fy.is_finite()) {
            return Err(Error::InvalidIntrinsics("fy must be positive"));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidIntrinsics("principal point must be finite"));
        }
        Ok(())
    }

    fn ensure_baseline(&self) -> Result<()> {
        if !(self.baseline > 0.0 && self.baseline.is_finite()) {
            return Err(Error::InvalidIntrinsics(
                "baseline must be positive for disparity conversion",
            ));
        }
        Ok(())
    }
}

/// Corner-aligned bilinear resize: output pixel `u` samples source column
/// `u * (W_src - 1) / (W_dst - 1)`, so the outer pixel centres coincide.
///
/// An output pixel is valid only if every source pixel contributing with a
/// non-zero weight is valid.
pub fn resize_bilinear(map: &DepthMap, width: usize, height: usize) -> Result<DepthMap> {
    if width == 0 || height == 0 {
        return Err(Error::ZeroTargetDimension { width, height });
    }
    if map.shape() == (width, height) {
        return Ok(map.clone());
    }
    let xs: Vec<(usize, usize, f64)> = (0..width)
        .map(|u| sample_axis(u, map.width(), width))
        .collect();
    let ys: Vec<(usize, usize, f64)> = (0..height)
        .map(|v| sample_axis(v, map.height(), height))
        .collect();

    let mut values = Vec::with_capacity(width * height);
    let mut mask = Vec::with_capacity(width * height);
    for &(y0, y1, wy) in &ys {
        for &(x0, x1, wx) in &xs {
            let taps = [
                (x0, y0, (1.0 - wx) * (1.0 - wy)),
                (x1, y0, wx * (1.0 - wy)),
                (x0, y1, (1.0 - wx) * wy),
                (x1, y1, wx * wy),
            ];
            let mut acc = 0.0;
            let mut valid = true;
            for (x, y, w) in taps {
                if w == 0.0 {
                    continue;
                }
                if !map.mask.at(x, y) {
                    valid = false;
                    break;
                }
                acc += w * map.values.at(x, y);
            }
            values.push(if valid { acc } else { 0.0 });
            mask.push(valid);
        }
    }
    Ok(DepthMap {
        values: Raster::from_vec(width, height, values)?,
        mask: Raster::from_vec(width, height, mask)?,
        kind: map.kind,
        provenance: map.provenance,
    })
}

fn sample_axis(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    if dst_len == 1 || src_len == 1 {
        return (0, 0, 0.0);
    }
    let pos = (dst * (src_len - 1)) as f64 / (dst_len - 1) as f64;
    let lo = (libm::floor(pos) as usize).min(src_len - 1);
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, pos - lo as f64)
}

/// `D = fx * b / disp`. Pixels with non-positive disparity become invalid.
pub fn disparity_to_depth(disp: &DepthMap, intr: &CameraIntrinsics) -> Result<DepthMap> {
    disp.ensure_kind(DepthKind::Disparity)?;
    intr.ensure_baseline()?;
    Ok(reciprocal_with(disp, intr.fx * intr.baseline, DepthKind::Depth))
}

/// Inverse of [`disparity_to_depth`] (same formula, same guard).
pub fn depth_to_disparity(depth: &DepthMap, intr: &CameraIntrinsics) -> Result<DepthMap> {
    depth.ensure_kind(DepthKind::Depth)?;
    intr.ensure_baseline()?;
    Ok(reciprocal_with(depth, intr.fx * intr.baseline, DepthKind::Disparity))
}

fn reciprocal_with(map: &DepthMap, numerator: f64, kind: DepthKind) -> DepthMap {
    let n = map.values.len();
    let mut values = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for (v, m) in map.values.as_slice().iter().zip(map.mask.as_slice()) {
        let out = numerator / *v;
        if *m && *v > 0.0 && out.is_finite() {
            values.push(out);
            mask.push(true);
        } else {
            values.push(0.0);
            mask.push(false);
        }
    }
    DepthMap {
        values: Raster::from_vec(map.width(), map.height(), values).expect("shape preserved"),
        mask: Raster::from_vec(map.width(), map.height(), mask).expect("shape preserved"),
        kind,
        provenance: map.provenance,
    }
}

/// Linear rescale of valid pixels into `[0, 255]`. Returns the map together
/// with the `(min, max)` range used.
pub fn normalize_8bit_with_range(map: &DepthMap) -> Result<(DepthMap, f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in map.valid_values() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return Err(Error::NoValidPixels);
    }
    if lo == hi {
        return Err(Error::DegenerateDepthRange { value: lo });
    }
    let span = hi - lo;
    let mut out = map.clone();
    for (v, m) in out.values.as_mut_slice().iter_mut().zip(map.mask.as_slice()) {
        *v = if *m {
            ((*v - lo) / span * 255.0).clamp(0.0, 255.0)
        } else {
            0.0
        };
    }
    out.kind = DepthKind::Normalized8Bit;
    Ok((out, lo, hi))
}

pub fn normalize_8bit(map: &DepthMap) -> Result<DepthMap> {
    normalize_8bit_with_range(map).map(|(m, _, _)| m)
}

/// Intensity inversion `v -> 255 - v` of a normalized map.
pub fn invert_8bit(map: &DepthMap) -> Result<DepthMap> {
    map.ensure_kind(DepthKind::Normalized8Bit)?;
    let mut out = map.clone();
    for (v, m) in out.values.as_mut_slice().iter_mut().zip(map.mask.as_slice()) {
        if *m {
            *v = 255.0 - *v;
        }
    }
    Ok(out)
}

/// Reciprocal inversion `v -> 1 / v` for inverse-depth style predictions.
/// Non-positive pixels become invalid; the result is a depth map.
pub fn invert_reciprocal(map: &DepthMap) -> DepthMap {
    reciprocal_with(map, 1.0, DepthKind::Depth)
}

/// Least-squares scale `s` minimising `sum (s * pred - gt)^2` over jointly
/// valid pixels: `s = sum(pred * gt) / sum(pred^2)`.
pub fn fit_scale(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    pred.values.ensure_same_shape(&gt.values)?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut count = 0usize;
    for i in 0..pred.values.len() {
        if pred.mask.as_slice()[i] && gt.mask.as_slice()[i] {
            let p = pred.values.as_slice()[i];
            let g = gt.values.as_slice()[i];
            num += p * g;
            den += p * p;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoValidPixels);
    }
    if den <= 0.0 {
        return Err(Error::ScaleUndefined);
    }
    Ok(num / den)
}

/// A pixel is valid iff its maximum intensity over all rasters reaches
/// `intensity_floor`, so pixels dark in every frame (black borders) are
/// masked out.
pub fn generate_universal_mask(intensities: &[Raster<f64>], intensity_floor: f64) -> Result<Mask> {
    let first = intensities.first().ok_or(Error::EmptyInput)?;
    let mut max = first.clone();
    for r in &intensities[1..] {
        first.ensure_same_shape(r)?;
        for (m, v) in max.as_mut_slice().iter_mut().zip(r.as_slice()) {
            if *v > *m {
                *m = *v;
            }
        }
    }
    Ok(max.map(|m| *m >= intensity_floor))
}

/// Default floor on the 8-bit intensity scale.
pub const DEFAULT_MASK_FLOOR: f64 = 10.0;
