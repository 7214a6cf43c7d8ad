//! Core algorithms for reconstructing fused point clouds from endoscopic
//! depth and disparity maps.
//!
//! The crate is `no_std` and only needs an allocator. Everything that touches
//! the filesystem (NPY, PNG, PLY, configuration, the CLI) lives in the
//! `endorecon` companion crate.
//!
//! Stages, in pipeline order:
//!
//! - [`select`]: frame filtering by external quality score and red-channel mean.
//! - [`depth`]: disparity conversion, resizing, normalization, scale fitting,
//!   and the universal validity mask.
//! - [`geometry`] and [`kdtree`]: back-projection, rigid transforms, exact
//!   nearest-neighbour search.
//! - [`icp`]: point-to-point ICP with dynamic correspondence thresholds.
//! - [`merge`]: novelty-filtered fusion into a global map.
//! - [`metrics`]: depth evaluation metrics and error-spike flagging.
//! - [`synth`]: seeded synthetic scenes with known poses, used as a test oracle.

#![cfg_attr(not(test), no_std)]
// NaN-rejecting guards are written as `!(x > 0.0)` throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// ICP failures carry the partial report by value.
#![allow(clippy::result_large_err)]

extern crate alloc;

pub mod depth;
pub mod error;
pub mod geometry;
pub mod icp;
pub mod kdtree;
pub mod merge;
pub mod metrics;
pub mod raster;
pub mod select;
pub mod stats;
pub mod synth;

pub use depth::{CameraIntrinsics, DepthKind, DepthMap};
pub use error::{Error, Result};
pub use geometry::{PointCloud, RigidTransform};
pub use icp::{IcpConfig, IcpMode, IcpReport, ThresholdScheme};
pub use kdtree::KdTree;
pub use merge::GlobalMap;
pub use metrics::MetricReport;
pub use raster::Raster;
