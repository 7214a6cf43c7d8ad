//! Seeded synthetic scenes with exactly known camera poses.
//!
//! The surface is a heightfield `z = base + sum_k a_k exp(-|xy - c_k|^2 / (2 s_k^2))`
//! in world coordinates, viewed by pinhole cameras looking roughly along
//! world `+z`. Poses are camera-to-world transforms.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with
//! `SeedableRng::seed_from_u64(seed)`. The heightfield is drawn from stream 0
//! and frame `k` uses stream `k + 1`, so frames can be rendered independently
//! and in any order with identical results.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::Vector3;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::depth::{CameraIntrinsics, DepthKind, DepthMap};
use crate::error::{Error, Result};
use crate::geometry::{compose, PointCloud, Point3, RigidTransform};
use crate::raster::Raster;

/// Parameters from which the seeded bumps are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HeightfieldSpec {
    pub base_depth: f64,
    pub bumps: usize,
    /// Bump amplitudes are uniform in `[-max_amplitude, max_amplitude]`.
    pub max_amplitude: f64,
    /// Bump widths are uniform in `[min_width, max_width]`.
    pub min_width: f64,
    pub max_width: f64,
    /// Bump centres are uniform in `[-half_extent, half_extent]^2`.
    pub half_extent: f64,
}

impl Default for HeightfieldSpec {
    fn default() -> Self {
        Self {
            base_depth: 80.0,
            bumps: 12,
            max_amplitude: 8.0,
            min_width: 6.0,
            max_width: 18.0,
            half_extent: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: [f64; 2],
    pub amplitude: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heightfield {
    pub base: f64,
    pub bumps: Vec<Bump>,
}

impl Heightfield {
    pub fn generate(spec: &HeightfieldSpec, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let bumps = (0..spec.bumps)
            .map(|_| Bump {
                center: [
                    rng.random_range(-spec.half_extent..=spec.half_extent),
                    rng.random_range(-spec.half_extent..=spec.half_extent),
                ],
                amplitude: rng.random_range(-spec.max_amplitude..=spec.max_amplitude),
                width: rng.random_range(spec.min_width..=spec.max_width),
            })
            .collect();
        Self {
            base: spec.base_depth,
            bumps,
        }
    }

    /// Height and its `(d/dx, d/dy)` gradient.
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let mut z = self.base;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for b in &self.bumps {
            let dx = x - b.center[0];
            let dy = y - b.center[1];
            let inv = 1.0 / (b.width * b.width);
            let e = b.amplitude * libm::exp(-0.5 * (dx * dx + dy * dy) * inv);
            z += e;
            gx -= e * dx * inv;
            gy -= e * dy * inv;
        }
        (z, gx, gy)
    }

    fn bounds(&self) -> (f64, f64) {
        let lo: f64 = self.bumps.iter().map(|b| b.amplitude.min(0.0)).sum();
        let hi: f64 = self.bumps.iter().map(|b| b.amplitude.max(0.0)).sum();
        (self.base + lo, self.base + hi)
    }

    /// Distance along `dir` from `origin` to the surface, or `None` when the
    /// ray starts on or beyond the surface or points away from it.
    pub fn intersect(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        if !(dir.z > 0.0) {
            return None;
        }
        let g = |s: f64| {
            let p = origin + dir * s;
            let (h, hx, hy) = self.eval(p.x, p.y);
            (h - p.z, hx * dir.x + hy * dir.y - dir.z)
        };
        let (h_min, h_max) = self.bounds();
        let mut lo = ((h_min - origin.z) / dir.z).max(0.0);
        let mut hi = (h_max - origin.z) / dir.z;
        if !(hi > 0.0) || g(lo).0 < 0.0 {
            return None;
        }
        if g(hi).0 > 0.0 {
            return None;
        }
        // g(lo) >= 0 >= g(hi); Newton steps kept inside the bracket.
        let mut s = 0.5 * (lo + hi);
        for _ in 0..100 {
            let (val, slope) = g(s);
            if val == 0.0 {
                return Some(s);
            }
            if val > 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let newton = s - val / slope;
            s = if slope < 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 4.0 * f64::EPSILON * hi || (newton - s).abs() <= 4.0 * f64::EPSILON * s && slope < 0.0 && libm::fabs(val / slope) <= 4.0 * f64::EPSILON * s {
                return Some(s);
            }
        }
        Some(s)
    }
}

/// A seeded scene with known trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub surface: HeightfieldSpec,
    /// Camera-to-world pose per frame.
    pub trajectory: Vec<RigidTransform>,
    pub intrinsics: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
    pub noise_sigma: f64,
    /// Fraction of valid pixels replaced by gross values, in `[0, 1)`.
    pub outlier_fraction: f64,
    /// Width of the zero-depth frame around every map.
    pub border_px: usize,
    pub seed: u64,
}

impl SyntheticScene {
    /// A camera sliding along world `x` with a slight yaw, `frames` poses.
    pub fn sliding(seed: u64, frames: usize, width: usize, height: usize) -> Self {
        let f = 0.9375 * width as f64;
        let intrinsics = CameraIntrinsics {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            baseline: 5.0,
        };
        let trajectory = (0..frames)
            .map(|k| {
                let k = k as f64;
                RigidTransform::from_axis_angle(
                    Vector3::new(0.3, 1.0, 0.1),
                    0.004 * k,
                    Vector3::new(0.8 * k, 0.25 * k, 0.1 * k),
                )
            })
            .collect();
        Self {
            surface: HeightfieldSpec::default(),
            trajectory,
            intrinsics,
            width,
            height,
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            border_px: 0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidScene("image dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidScene("outlier_fraction must be in [0, 1)"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidScene("noise_sigma must be >= 0"));
        }
        for pose in &self.trajectory {
            RigidTransform::new(*pose.rotation(), *pose.translation())?;
        }
        Ok(())
    }

    pub fn heightfield(&self) -> Heightfield {
        Heightfield::generate(&self.surface, self.seed)
    }

    /// Transform taking camera-`k` coordinates into camera-0 coordinates.
    pub fn relative_pose(&self, k: usize) -> RigidTransform {
        compose(&self.trajectory[0].inverse(), &self.trajectory[k])
    }

    pub fn in_border(&self, u: usize, v: usize) -> bool {
        let b = self.border_px;
        u < b || v < b || u + b >= self.width || v + b >= self.height
    }

    /// Mask that is false exactly on the border frame.
    pub fn border_mask(&self) -> Raster<bool> {
        Raster::from_fn(self.width, self.height, |u, v| !self.in_border(u, v))
    }

    /// Renders frame `k`; independent of other frames.
    pub fn render_frame(&self, surface: &Heightfield, k: usize) -> Result<DepthMap> {
        let pose = self.trajectory[k];
        let origin = *pose.translation();
        let intr = &self.intrinsics;
        let mut values = Raster::filled(self.width, self.height, 0.0);
        for v in 0..self.height {
            for u in 0..self.width {
                if self.in_border(u, v) {
                    continue;
                }
                let ray = Vector3::new((u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0);
                let dir = pose.rotation() * ray;
                let s = surface.intersect(&origin, &dir).ok_or_else(|| {
                    Error::DegenerateTrajectory(format!("frame {k}: pixel ({u}, {v}) does not see the surface"))
                })?;
                *values.get_mut(u, v) = s;
            }
        }

        let mut rng = stream_rng(self.seed, k as u64 + 1);
        if self.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, self.noise_sigma).map_err(|_| Error::InvalidScene("noise_sigma"))?;
            for v in 0..self.height {
                for u in 0..self.width {
                    if !self.in_border(u, v) {
                        *values.get_mut(u, v) += normal.sample(&mut rng);
                    }
                }
            }
        }
        let interior: Vec<usize> = (0..self.width * self.height)
            .filter(|&i| !self.in_border(i % self.width, i / self.width))
            .collect();
        let n_out = outlier_count(self.outlier_fraction, interior.len());
        if n_out > 0 {
            for pick in index::sample(&mut rng, interior.len(), n_out) {
                let i = interior[pick];
                values.as_mut_slice()[i] *= rng.random_range(1.5..3.0);
            }
        }
        let mask = self.border_mask();
        DepthMap::with_mask(values, mask, DepthKind::Depth).map(DepthMap::ground_truth)
    }

    /// Renders every frame. Returns the depth maps and the camera-to-world
    /// poses they were rendered from.
    pub fn render_depth_sequence(&self) -> Result<(Vec<DepthMap>, Vec<RigidTransform>)> {
        self.validate()?;
        let surface = self.heightfield();
        let maps = (0..self.trajectory.len())
            .map(|k| self.render_frame(&surface, k))
            .collect::<Result<Vec<_>>>()?;
        Ok((maps, self.trajectory.clone()))
    }
}

pub fn render_depth_sequence(scene: &SyntheticScene) -> Result<(Vec<DepthMap>, Vec<RigidTransform>)> {
    scene.render_depth_sequence()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `floor(fraction * n)`.
pub fn outlier_count(fraction: f64, n: usize) -> usize {
    (libm::floor(fraction * n as f64) as usize).min(n)
}

/// Applies `transform`, adds isotropic Gaussian noise, then replaces
/// `floor(outlier_fraction * n)` points with uniform samples from the
/// bounding box expanded tenfold about its centre. Returns the cloud and the
/// replaced indices in ascending order.
pub fn perturb_cloud_with_outliers(
    cloud: &PointCloud,
    transform: &RigidTransform,
    noise_sigma: f64,
    outlier_fraction: f64,
    seed: u64,
) -> (PointCloud, Vec<usize>) {
    let mut out = cloud.transformed(transform);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("finite sigma");
        for p in &mut out.points {
            *p += Vector3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    let n_out = outlier_count(outlier_fraction.clamp(0.0, 1.0), out.len());
    let mut replaced = Vec::new();
    if n_out > 0 {
        let (lo, hi) = out.bounds().expect("non-empty");
        let centre = (lo + hi) * 0.5;
        let half = (hi - lo) * 5.0;
        let sample_axis = |rng: &mut ChaCha8Rng, c: f64, h: f64| {
            if h > 0.0 {
                rng.random_range(c - h..c + h)
            } else {
                c
            }
        };
        replaced = index::sample(&mut rng, out.len(), n_out).into_vec();
        replaced.sort_unstable();
        for &i in &replaced {
            out.points[i] = Point3::new(
                sample_axis(&mut rng, centre.x, half.x),
                sample_axis(&mut rng, centre.y, half.y),
                sample_axis(&mut rng, centre.z, half.z),
            );
        }
    }
    (out, replaced)
}

pub fn perturb_cloud(
    cloud: &PointCloud,
    transform: &RigidTransform,
    noise_sigma: f64,
    outlier_fraction: f64,
    seed: u64,
) -> PointCloud {
    perturb_cloud_with_outliers(cloud, transform, noise_sigma, outlier_fraction, seed).0
}
