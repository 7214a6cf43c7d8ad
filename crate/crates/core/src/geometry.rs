//! Point clouds, rigid transforms and pinhole back-projection.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::depth::{CameraIntrinsics, DepthKind, DepthMap};
use crate::error::{Error, Result};
use crate::raster::Raster;

pub type Point3 = Vector3<f64>;

/// Tolerance on `R^T R = I` and `det R = 1`.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    /// `(u, v)` pixel each point was back-projected from, parallel to `points`.
    pub source_pixels: Option<Vec<(u32, u32)>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            source_pixels: None,
        }
    }

    pub fn with_pixels(points: Vec<Point3>, pixels: Vec<(u32, u32)>) -> Self {
        assert_eq!(points.len(), pixels.len(), "source_pixels must parallel points");
        Self {
            points,
            source_pixels: Some(pixels),
        }
    }

    pub fn from_arrays(points: &[[f64; 3]]) -> Self {
        Self::new(points.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Point3::zeros(), |acc, p| acc + p);
        Some(sum / self.points.len() as f64)
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    /// Length of the bounding-box diagonal.
    pub fn extent(&self) -> f64 {
        self.bounds().map_or(0.0, |(lo, hi)| (hi - lo).norm())
    }

    /// Keeps the points at `indices`, carrying pixel indices along.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            source_pixels: self
                .source_pixels
                .as_ref()
                .map(|px| indices.iter().map(|&i| px[i]).collect()),
        }
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        apply_transform(self, t)
    }
}

/// Rotation followed by translation: `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Rejects matrices that are not proper rotations within
    /// [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entries"));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho > ROTATION_TOLERANCE {
            return Err(Error::InvalidTransform("rotation is not orthonormal"));
        }
        if (rotation.determinant() - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidTransform("rotation determinant is not +1"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized),
    /// followed by `translation`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = if axis.norm() == 0.0 {
            Matrix3::identity()
        } else {
            *Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).matrix()
        };
        Self {
            rotation,
            translation,
        }
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Angle of the relative rotation between `self` and `other`, radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        libm::acos(c)
    }

    pub fn translation_distance_to(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Re-orthonormalizes the rotation via its polar decomposition. Used to
    /// stop round-off from accumulating over long compositions.
    pub(crate) fn orthonormalized(mut self) -> Self {
        let svd = self.rotation.svd(true, true);
        if let (Some(u), Some(v_t)) = (svd.u, svd.v_t) {
            let r = u * v_t;
            if r.determinant() > 0.0 {
                self.rotation = r;
            }
        }
        self
    }

    pub fn to_row_major(&self) -> ([[f64; 3]; 3], [f64; 3]) {
        let r = &self.rotation;
        (
            [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            [self.translation.x, self.translation.y, self.translation.z],
        )
    }

    pub fn from_row_major(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        let r = Matrix3::from_fn(|i, j| rotation[i][j]);
        Self::new(r, Vector3::from(translation))
    }
}

/// `compose(t2, t1)` applies `t1` first, then `t2`.
pub fn compose(t2: &RigidTransform, t1: &RigidTransform) -> RigidTransform {
    RigidTransform {
        rotation: t2.rotation * t1.rotation,
        translation: t2.rotation * t1.translation + t2.translation,
    }
}

pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| t.apply(p)).collect(),
        source_pixels: cloud.source_pixels.clone(),
    }
}

/// Pinhole back-projection of every valid pixel:
/// `X = (u - cx) D / fx`, `Y = (v - cy) D / fy`, `Z = D`.
pub fn backproject(map: &DepthMap, intr: &CameraIntrinsics) -> Result<PointCloud> {
    backproject_strided(map, intr, 1)
}

/// Like [`backproject`] but only visits every `stride`-th row and column.
pub fn backproject_strided(
    map: &DepthMap,
    intr: &CameraIntrinsics,
    stride: usize,
) -> Result<PointCloud> {
    if map.kind != DepthKind::Depth {
        return Err(Error::WrongKind {
            expected: DepthKind::Depth.name(),
            got: map.kind.name(),
        });
    }
    intr.validate()?;
    let stride = stride.max(1);
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    for v in (0..map.height()).step_by(stride) {
        for u in (0..map.width()).step_by(stride) {
            if !map.is_valid(u, v) {
                continue;
            }
            let d = map.values.at(u, v);
            points.push(Point3::new(
                (u as f64 - intr.cx) * d / intr.fx,
                (v as f64 - intr.cy) * d / intr.fy,
                d,
            ));
            pixels.push((u as u32, v as u32));
        }
    }
    Ok(PointCloud::with_pixels(points, pixels))
}

/// Writes each point's `Z` back to its source pixel; everything else is
/// invalid.
pub fn reproject_depth(cloud: &PointCloud, width: usize, height: usize) -> Result<DepthMap> {
    let pixels = cloud.source_pixels.as_ref().ok_or(Error::MissingSourcePixels)?;
    let mut values = Raster::filled(width, height, 0.0);
    let mut mask = Raster::filled(width, height, false);
    for (p, &(u, v)) in cloud.points.iter().zip(pixels) {
        *values.get_mut(u as usize, v as usize) = p.z;
        *mask.get_mut(u as usize, v as usize) = true;
    }
    DepthMap::with_mask(values, mask, DepthKind::Depth)
}
