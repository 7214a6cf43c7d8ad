//! Per-iteration correspondence distance thresholds.

use crate::error::{Error, Result};
use crate::stats;

pub const DEFAULT_CONSTANT: f64 = 10.0;
pub const DEFAULT_MEAN_FACTOR: f64 = 1.5;
pub const DEFAULT_MEDIAN_FACTOR: f64 = 1.5;
pub const DEFAULT_LINEAR_INITIAL: f64 = 10.0;
pub const DEFAULT_LINEAR_FINAL: f64 = 0.1;
pub const DEFAULT_MAX_FRACTION: f64 = 0.8;

/// How the inlier cutoff `T_d` is chosen at each ICP iteration. A
/// correspondence is an inlier when its distance is strictly below `T_d`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "id", rename_all = "snake_case"))]
pub enum ThresholdScheme {
    /// Fixed `T`.
    Constant { value: f64 },
    /// 90th percentile of the distances.
    Percentile90,
    /// `k * mean(d)`.
    MeanFactor { factor: f64 },
    /// `k * median(d)`.
    MedianFactor { factor: f64 },
    /// `a * T_final + (1 - a) * T_initial` with `a = i / (max_iterations - 1)`.
    LinearInterp { initial: f64, r#final: f64 },
    /// `f * max(d)`.
    MaxFraction { fraction: f64 },
    /// `mean(d) + 2 * std(d)`, population standard deviation.
    #[default]
    MeanPlus2Std,
}

impl ThresholdScheme {
    /// Every scheme with its default constants.
    pub const ALL: [ThresholdScheme; 7] = [
        ThresholdScheme::Constant {
            value: DEFAULT_CONSTANT,
        },
        ThresholdScheme::Percentile90,
        ThresholdScheme::MeanFactor {
            factor: DEFAULT_MEAN_FACTOR,
        },
        ThresholdScheme::MedianFactor {
            factor: DEFAULT_MEDIAN_FACTOR,
        },
        ThresholdScheme::LinearInterp {
            initial: DEFAULT_LINEAR_INITIAL,
            r#final: DEFAULT_LINEAR_FINAL,
        },
        ThresholdScheme::MaxFraction {
            fraction: DEFAULT_MAX_FRACTION,
        },
        ThresholdScheme::MeanPlus2Std,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            ThresholdScheme::Constant { .. } => "constant",
            ThresholdScheme::Percentile90 => "percentile90",
            ThresholdScheme::MeanFactor { .. } => "mean_factor",
            ThresholdScheme::MedianFactor { .. } => "median_factor",
            ThresholdScheme::LinearInterp { .. } => "linear_interp",
            ThresholdScheme::MaxFraction { .. } => "max_fraction",
            ThresholdScheme::MeanPlus2Std => "mean_plus_2std",
        }
    }

    /// Looks a scheme up by id with its default constants.
    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|s| s.id() == id)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, msg| if c { Ok(()) } else { Err(Error::InvalidScheme(msg)) };
        match *self {
            ThresholdScheme::Constant { value } => ok(value > 0.0, "constant threshold must be > 0"),
            ThresholdScheme::MeanFactor { factor } | ThresholdScheme::MedianFactor { factor } => {
                ok(factor > 0.0, "factor must be > 0")
            }
            ThresholdScheme::LinearInterp { initial, r#final } => ok(
                r#final > 0.0 && initial >= r#final,
                "linear interpolation needs initial >= final > 0",
            ),
            ThresholdScheme::MaxFraction { fraction } => {
                ok(fraction > 0.0 && fraction <= 1.0, "max fraction must be in (0, 1]")
            }
            ThresholdScheme::Percentile90 | ThresholdScheme::MeanPlus2Std => Ok(()),
        }
    }

    pub fn is_data_dependent(&self) -> bool {
        !matches!(
            self,
            ThresholdScheme::Constant { .. } | ThresholdScheme::LinearInterp { .. }
        )
    }
}

/// Threshold for `iteration` (0-based) given this iteration's correspondence
/// distances.
pub fn compute_threshold(
    scheme: &ThresholdScheme,
    distances: &[f64],
    iteration: usize,
    max_iterations: usize,
) -> Result<f64> {
    if scheme.is_data_dependent() && distances.is_empty() {
        return Err(Error::EmptyDistances);
    }
    let t = match *scheme {
        ThresholdScheme::Constant { value } => value,
        ThresholdScheme::Percentile90 => stats::percentile(distances, 90.0).unwrap(),
        ThresholdScheme::MeanFactor { factor } => factor * stats::mean(distances).unwrap(),
        ThresholdScheme::MedianFactor { factor } => factor * stats::median(distances).unwrap(),
        ThresholdScheme::LinearInterp { initial, r#final } => {
            let a = if max_iterations <= 1 {
                0.0
            } else {
                iteration as f64 / (max_iterations - 1) as f64
            };
            a * r#final + (1.0 - a) * initial
        }
        ThresholdScheme::MaxFraction { fraction } => fraction * stats::max(distances).unwrap(),
        ThresholdScheme::MeanPlus2Std => {
            stats::mean(distances).unwrap() + 2.0 * stats::population_std(distances).unwrap()
        }
    };
    Ok(t)
}
