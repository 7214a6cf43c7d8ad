//! Point-to-point ICP with dynamic correspondence thresholds.
//!
//! Each iteration pairs every source point with its exact nearest target
//! point, derives a threshold `T_d` from the pair distances, keeps pairs with
//! `d < T_d`, and solves the closed-form rigid update on those inliers.

mod correspond;
mod kabsch;
mod threshold;

use alloc::vec::Vec;

pub use correspond::{
    error_heatmap, find_correspondences, heatmap_from_correspondences, nearest_pairs,
    Correspondences, Pair,
};
pub use kabsch::svd_rigid_step;
pub use threshold::{
    compute_threshold, ThresholdScheme, DEFAULT_CONSTANT, DEFAULT_LINEAR_FINAL,
    DEFAULT_LINEAR_INITIAL, DEFAULT_MAX_FRACTION, DEFAULT_MEAN_FACTOR, DEFAULT_MEDIAN_FACTOR,
};

use crate::error::{Error, Result};
use crate::geometry::{compose, PointCloud, Point3, RigidTransform};
use crate::kdtree::KdTree;
use crate::merge::{self, GlobalMap};

pub const DEFAULT_MAX_ITERATIONS: usize = 40;
pub const DEFAULT_CONVERGENCE_EPS: f64 = 1e-6;

/// Which reference each new frame is registered against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum IcpMode {
    /// Register frame `k` against frame `k - 1` and chain the results.
    #[default]
    Neighbor,
    /// Register frame `k` against the merged map in frame-0 coordinates.
    Global,
}

impl IcpMode {
    pub fn id(self) -> &'static str {
        match self {
            IcpMode::Neighbor => "neighbor",
            IcpMode::Global => "global",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IcpConfig {
    pub mode: IcpMode,
    pub scheme: ThresholdScheme,
    pub max_iterations: usize,
    /// Stop once the mean inlier distance changes by less than this between
    /// consecutive iterations.
    pub convergence_eps: f64,
    /// Duplicate-rejection radius for map merging. `None` means the median
    /// nearest-neighbour spacing of the first cloud.
    pub merge_novelty_radius: Option<f64>,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            mode: IcpMode::Neighbor,
            scheme: ThresholdScheme::MeanPlus2Std,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            convergence_eps: DEFAULT_CONVERGENCE_EPS,
            merge_novelty_radius: None,
        }
    }
}

impl IcpConfig {
    pub fn with_scheme(scheme: ThresholdScheme) -> Self {
        Self {
            scheme,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidIcpConfig("max_iterations must be >= 1"));
        }
        if !(self.convergence_eps > 0.0) {
            return Err(Error::InvalidIcpConfig("convergence_eps must be > 0"));
        }
        if let Some(r) = self.merge_novelty_radius {
            if !(r >= 0.0) {
                return Err(Error::NegativeRadius(r));
            }
        }
        self.scheme.validate()
    }
}

/// Statistics for one executed iteration, taken over the inlier pairs before
/// that iteration's update is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterationRecord {
    pub iteration: usize,
    pub threshold: f64,
    pub inliers: usize,
    pub mean_distance: f64,
    pub max_distance: f64,
    pub rms_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpReport {
    pub per_iteration: Vec<IterationRecord>,
    /// Maps the original source cloud into the target frame.
    pub final_transform: RigidTransform,
    pub converged: bool,
    pub iterations_run: usize,
}

impl IcpReport {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.per_iteration.last()
    }
}

/// ICP failure with everything recorded up to the failing iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IcpFailure {
    pub error: Error,
    pub report: IcpReport,
}

impl core::fmt::Display for IcpFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{} after {} iterations", self.error, self.report.iterations_run)
    }
}

impl From<IcpFailure> for Error {
    fn from(f: IcpFailure) -> Self {
        f.error
    }
}

fn fail(error: Error, records: Vec<IterationRecord>, transform: RigidTransform) -> IcpFailure {
    IcpFailure {
        error,
        report: IcpReport {
            iterations_run: records.len(),
            per_iteration: records,
            final_transform: transform,
            converged: false,
        },
    }
}

/// Registers `source` onto `target` starting from the identity.
pub fn icp(source: &PointCloud, target: &PointCloud, config: &IcpConfig) -> Result<IcpReport, IcpFailure> {
    if source.len() < 3 || target.len() < 3 {
        return Err(fail(
            Error::InsufficientCorrespondences {
                count: source.len().min(target.len()),
            },
            Vec::new(),
            RigidTransform::identity(),
        ));
    }
    let index = KdTree::build(&target.points)
        .map_err(|e| fail(e, Vec::new(), RigidTransform::identity()))?;
    icp_with_index(source, &index, config, RigidTransform::identity())
}

/// Registers `source` against a prebuilt target index, starting from
/// `initial`.
pub fn icp_with_index(
    source: &PointCloud,
    target: &KdTree,
    config: &IcpConfig,
    initial: RigidTransform,
) -> Result<IcpReport, IcpFailure> {
    if let Err(e) = config.validate() {
        return Err(fail(e, Vec::new(), initial));
    }
    if source.len() < 3 || target.len() < 3 {
        return Err(fail(
            Error::InsufficientCorrespondences {
                count: source.len().min(target.len()),
            },
            Vec::new(),
            initial,
        ));
    }

    let mut records: Vec<IterationRecord> = Vec::with_capacity(config.max_iterations);
    let mut acc = initial;
    let mut current = source.transformed(&acc);
    let mut converged = false;
    let mut src_in: Vec<Point3> = Vec::with_capacity(source.len());
    let mut tgt_in: Vec<Point3> = Vec::with_capacity(source.len());

    for iteration in 0..config.max_iterations {
        let pairs = nearest_pairs(&current, target);
        let distances: Vec<f64> = pairs.iter().map(|p| p.distance).collect();
        let threshold = match compute_threshold(&config.scheme, &distances, iteration, config.max_iterations) {
            Ok(t) => t,
            Err(e) => return Err(fail(e, records, acc)),
        };
        let corr = Correspondences::from_pairs(pairs, threshold);

        src_in.clear();
        tgt_in.clear();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut max = 0.0f64;
        for pair in corr.inliers() {
            src_in.push(current.points[pair.source]);
            tgt_in.push(target_point(target, pair.target));
            sum += pair.distance;
            sum_sq += pair.distance * pair.distance;
            max = max.max(pair.distance);
        }
        let inliers = src_in.len();
        if inliers == 0 {
            return Err(fail(Error::NoInliers { iteration, threshold }, records, acc));
        }
        let mean = sum / inliers as f64;
        records.push(IterationRecord {
            iteration,
            threshold,
            inliers,
            mean_distance: mean,
            max_distance: max,
            rms_distance: libm::sqrt(sum_sq / inliers as f64),
        });

        let step = match svd_rigid_step(&src_in, &tgt_in) {
            Ok(s) => s,
            Err(e) => return Err(fail(e, records, acc)),
        };
        acc = compose(&step, &acc).orthonormalized();
        current = source.transformed(&acc);

        if records.len() >= 2 {
            let prev = records[records.len() - 2].mean_distance;
            if (mean - prev).abs() < config.convergence_eps {
                converged = true;
                break;
            }
        }
    }

    Ok(IcpReport {
        iterations_run: records.len(),
        per_iteration: records,
        final_transform: acc,
        converged,
    })
}

fn target_point(index: &KdTree, i: usize) -> Point3 {
    let p = index.point(i);
    Point3::new(p[0], p[1], p[2])
}

/// Result of registering a whole sequence.
#[derive(Debug, Clone, Default)]
pub struct SequenceAlignment {
    /// Per cloud, the transform into frame-0 coordinates.
    pub transforms: Vec<RigidTransform>,
    /// One report per registered pair (`clouds.len() - 1` on success).
    pub reports: Vec<IcpReport>,
    /// The merged map in global mode.
    pub map: Option<GlobalMap>,
}

/// Sequence registration that stopped early.
#[derive(Debug, Clone)]
pub struct SequenceFailure {
    /// Index of the cloud whose registration failed.
    pub index: usize,
    pub failure: IcpFailure,
    pub partial: SequenceAlignment,
}

impl core::fmt::Display for SequenceFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "registration of cloud {} failed: {}", self.index, self.failure)
    }
}

/// Registers every cloud into frame-0 coordinates.
///
/// Neighbor mode chains pairwise results: `T_k = T_{k-1} o icp(cloud_k, cloud_{k-1})`.
/// Global mode registers `cloud_k` against the merged map, seeded with
/// `T_{k-1}`, and merges it once ICP has finished.
pub fn align_sequence(clouds: &[PointCloud], config: &IcpConfig) -> Result<SequenceAlignment, SequenceFailure> {
    let mut out = SequenceAlignment::default();
    let abort = |index: usize, error: Error, partial: SequenceAlignment| SequenceFailure {
        index,
        failure: fail(error, Vec::new(), RigidTransform::identity()),
        partial,
    };
    if clouds.is_empty() {
        return Err(abort(0, Error::EmptyInput, out));
    }
    out.transforms.push(RigidTransform::identity());

    match config.mode {
        IcpMode::Neighbor => {
            for k in 1..clouds.len() {
                let report = match icp(&clouds[k], &clouds[k - 1], config) {
                    Ok(r) => r,
                    Err(failure) => {
                        return Err(SequenceFailure {
                            index: k,
                            failure,
                            partial: out,
                        })
                    }
                };
                let t = compose(&out.transforms[k - 1], &report.final_transform).orthonormalized();
                out.transforms.push(t);
                out.reports.push(report);
            }
        }
        IcpMode::Global => {
            let radius = match config
                .merge_novelty_radius
                .or_else(|| merge::median_spacing(&clouds[0]))
            {
                Some(r) => r,
                None => return Err(abort(0, Error::InsufficientCorrespondences { count: clouds[0].len() }, out)),
            };
            let mut map = GlobalMap::new();
            if let Err(e) = map.merge(&clouds[0], radius, 0) {
                return Err(abort(0, e, out));
            }
            for (k, cloud) in clouds.iter().enumerate().skip(1) {
                let Some(index) = map.index() else {
                    return Err(abort(k, Error::EmptyCloud, out));
                };
                let seed = out.transforms[k - 1];
                let report = match icp_with_index(cloud, index, config, seed) {
                    Ok(r) => r,
                    Err(failure) => {
                        out.map = Some(map);
                        return Err(SequenceFailure {
                            index: k,
                            failure,
                            partial: out,
                        });
                    }
                };
                let t = report.final_transform;
                if let Err(e) = map.merge(&cloud.transformed(&t), radius, k) {
                    out.map = Some(map);
                    return Err(abort(k, e, out));
                }
                out.transforms.push(t);
                out.reports.push(report);
            }
            out.map = Some(map);
        }
    }
    Ok(out)
}
