//! Pipeline configuration, read from TOML.
//!
//! Top-level keys mirror the original tool's `CONFIG.yaml`: `DATA_PATH`,
//! `OUTPUT_DIR`, `SELECT_SCHEME`, `DEPTH_SCHEME`, plus `INTRINSICS`, `ICP`,
//! `GROUND_TRUTH` and `RECONSTRUCTION`. Relative paths are resolved against
//! the directory holding the config file. See the README for a full example.

use std::path::{Path, PathBuf};

use endorecon_core::icp::{
    DEFAULT_CONSTANT, DEFAULT_CONVERGENCE_EPS, DEFAULT_LINEAR_FINAL, DEFAULT_LINEAR_INITIAL, DEFAULT_MAX_FRACTION,
    DEFAULT_MAX_ITERATIONS, DEFAULT_MEAN_FACTOR, DEFAULT_MEDIAN_FACTOR,
};
use endorecon_core::select::SelectScheme;
use endorecon_core::{CameraIntrinsics, IcpConfig, IcpMode, ThresholdScheme};
use serde::{Deserialize, Serialize};

use crate::error::{fsx, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepthSourceKind {
    /// `<stem>_depth.png`, 8 or 16-bit grayscale.
    #[serde(rename = "depth-png")]
    DepthPng,
    /// `<stem>_disp.npy`, converted with `fx * b / disp`.
    #[serde(rename = "disparity-npy")]
    DisparityNpy,
}

impl DepthSourceKind {
    pub fn suffix(self) -> &'static str {
        match self {
            DepthSourceKind::DepthPng => "_depth.png",
            DepthSourceKind::DisparityNpy => "_disp.npy",
        }
    }
}

/// Optional treatment of imported depth before use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Postprocess {
    #[default]
    None,
    /// Rescale valid pixels to `[0, 255]`.
    Normalize,
    /// Normalize, then `255 - v`.
    NormalizeInvert,
    /// `1 / v` on valid pixels.
    Reciprocal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthSource {
    pub path: PathBuf,
    pub kind: DepthSourceKind,
    /// Multiplier applied to stored PNG values.
    pub unit_scale: f64,
    pub postprocess: Postprocess,
    /// Pixels whose maximum frame intensity stays below this are masked.
    pub mask_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub path: PathBuf,
    pub unit_scale: f64,
    pub scale_align: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectSpec {
    pub scheme: SelectScheme,
    /// Score sidecar for quality-score selection.
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub data_path: PathBuf,
    pub output_dir: PathBuf,
    pub staging_dir: PathBuf,
    pub select_schemes: Vec<SelectSpec>,
    pub depth_source: DepthSource,
    pub intrinsics: CameraIntrinsics,
    pub icp: IcpConfig,
    pub ground_truth: Option<GroundTruth>,
    /// Back-project every `pixel_stride`-th row and column.
    pub pixel_stride: usize,
    /// Frame ordinals after which a map snapshot PLY is written.
    pub checkpoints: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "DATA_PATH")]
    data_path: PathBuf,
    #[serde(rename = "OUTPUT_DIR")]
    output_dir: PathBuf,
    #[serde(rename = "STAGING_DIR")]
    staging_dir: Option<PathBuf>,
    #[serde(rename = "SELECT_SCHEME", default)]
    select_scheme: Vec<RawSelect>,
    #[serde(rename = "DEPTH_SCHEME")]
    depth_scheme: RawDepth,
    #[serde(rename = "INTRINSICS")]
    intrinsics: RawIntrinsics,
    #[serde(rename = "ICP", default)]
    icp: RawIcp,
    #[serde(rename = "GROUND_TRUTH")]
    ground_truth: Option<RawGroundTruth>,
    #[serde(rename = "RECONSTRUCTION", default)]
    reconstruction: RawReconstruction,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSelect {
    id: String,
    threshold: Option<f64>,
    scores: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDepth {
    path: PathBuf,
    kind: DepthSourceKind,
    unit_scale: Option<f64>,
    #[serde(default)]
    postprocess: Postprocess,
    mask_floor: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntrinsics {
    fx: f64,
    fy: Option<f64>,
    cx: f64,
    cy: f64,
    baseline: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawIcp {
    mode: Option<String>,
    scheme: Option<toml::Value>,
    max_iterations: Option<i64>,
    convergence_eps: Option<f64>,
    novelty_radius: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroundTruth {
    path: PathBuf,
    unit_scale: Option<f64>,
    #[serde(default)]
    scale_align: bool,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawReconstruction {
    pixel_stride: Option<i64>,
    #[serde(default)]
    checkpoints: Vec<usize>,
}

fn err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(err(format!("{field} must be a positive number, got {v}")))
    }
}

fn not_nan(field: &str, v: f64) -> Result<f64> {
    if v.is_nan() {
        Err(err(format!("{field} must be a number")))
    } else {
        Ok(v)
    }
}

/// Parses a scheme given either as a bare id (`"max_fraction"`, defaults
/// filled in) or as a table `{ id = "...", <parameter> = ... }`.
pub fn parse_scheme(value: &toml::Value) -> Result<ThresholdScheme> {
    let (id, table) = match value {
        toml::Value::String(s) => (s.as_str(), None),
        toml::Value::Table(t) => match t.get("id") {
            Some(toml::Value::String(s)) => (s.as_str(), Some(t)),
            _ => return Err(err("ICP.scheme table needs a string 'id'")),
        },
        _ => return Err(err("ICP.scheme must be a string or a table")),
    };
    let allowed: &[&str] = match id {
        "constant" => &["value"],
        "mean_factor" | "median_factor" => &["factor"],
        "linear_interp" => &["initial", "final"],
        "max_fraction" => &["fraction"],
        "percentile90" | "mean_plus_2std" => &[],
        _ => {
            return Err(err(format!(
                "unknown threshold scheme '{id}' (expected one of {})",
                ThresholdScheme::ALL.iter().map(|s| s.id()).collect::<Vec<_>>().join(", ")
            )))
        }
    };
    if let Some(t) = table {
        if let Some(k) = t.keys().find(|k| *k != "id" && !allowed.contains(&k.as_str())) {
            return Err(err(format!("ICP.scheme.{k} is not a parameter of '{id}'")));
        }
    }
    let param = |name: &str, default: f64| -> Result<f64> {
        match table.and_then(|t| t.get(name)) {
            None => Ok(default),
            Some(v) => {
                let x = v
                    .as_float()
                    .or_else(|| v.as_integer().map(|i| i as f64))
                    .ok_or_else(|| err(format!("ICP.scheme.{name} must be a number")))?;
                positive(&format!("ICP.scheme.{name}"), x)
            }
        }
    };
    let scheme = match id {
        "constant" => ThresholdScheme::Constant {
            value: param("value", DEFAULT_CONSTANT)?,
        },
        "mean_factor" => ThresholdScheme::MeanFactor {
            factor: param("factor", DEFAULT_MEAN_FACTOR)?,
        },
        "median_factor" => ThresholdScheme::MedianFactor {
            factor: param("factor", DEFAULT_MEDIAN_FACTOR)?,
        },
        "linear_interp" => ThresholdScheme::LinearInterp {
            initial: param("initial", DEFAULT_LINEAR_INITIAL)?,
            r#final: param("final", DEFAULT_LINEAR_FINAL)?,
        },
        "max_fraction" => ThresholdScheme::MaxFraction {
            fraction: param("fraction", DEFAULT_MAX_FRACTION)?,
        },
        "percentile90" => ThresholdScheme::Percentile90,
        _ => ThresholdScheme::MeanPlus2Std,
    };
    scheme.validate().map_err(|e| err(format!("ICP.scheme: {e}")))?;
    Ok(scheme)
}

pub fn parse_mode(s: &str) -> Result<IcpMode> {
    match s {
        "neighbor" => Ok(IcpMode::Neighbor),
        "global" => Ok(IcpMode::Global),
        other => Err(err(format!("unknown ICP mode '{other}' (expected neighbor or global)"))),
    }
}

impl PipelineConfig {
    /// Reads and validates a config file. `DATA_PATH` must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fsx::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let config = Self::parse(&text, base)?;
        if !config.data_path.is_dir() {
            return Err(err(format!("DATA_PATH {} is not a directory", config.data_path.display())));
        }
        Ok(config)
    }

    /// Parses and validates without touching the filesystem.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

        let mut select_schemes = Vec::with_capacity(raw.select_scheme.len());
        for (i, s) in raw.select_scheme.into_iter().enumerate() {
            let field = format!("SELECT_SCHEME[{i}].threshold");
            let threshold = not_nan(&field, s.threshold.ok_or_else(|| err(format!("{field} is required")))?)?;
            let spec = match s.id.as_str() {
                "quality_score" => SelectSpec {
                    scheme: SelectScheme::QualityScore { threshold },
                    scores: Some(resolve(
                        s.scores
                            .ok_or_else(|| err(format!("SELECT_SCHEME[{i}].scores is required for quality_score")))?,
                    )),
                },
                "red_channel" => {
                    if s.scores.is_some() {
                        return Err(err(format!("SELECT_SCHEME[{i}].scores only applies to quality_score")));
                    }
                    SelectSpec {
                        scheme: SelectScheme::RedChannel { threshold },
                        scores: None,
                    }
                }
                other => {
                    return Err(err(format!(
                        "unknown selection scheme '{other}' (expected quality_score or red_channel)"
                    )))
                }
            };
            select_schemes.push(spec);
        }

        let d = raw.depth_scheme;
        let depth_source = DepthSource {
            path: resolve(d.path),
            kind: d.kind,
            unit_scale: positive("DEPTH_SCHEME.unit_scale", d.unit_scale.unwrap_or(1.0))?,
            postprocess: d.postprocess,
            mask_floor: {
                let f = not_nan("DEPTH_SCHEME.mask_floor", d.mask_floor.unwrap_or(endorecon_core::depth::DEFAULT_MASK_FLOOR))?;
                if f < 0.0 {
                    return Err(err("DEPTH_SCHEME.mask_floor must be >= 0"));
                }
                f
            },
        };

        let i = raw.intrinsics;
        let intrinsics = CameraIntrinsics {
            fx: positive("INTRINSICS.fx", i.fx)?,
            fy: positive("INTRINSICS.fy", i.fy.unwrap_or(i.fx))?,
            cx: not_nan("INTRINSICS.cx", i.cx)?,
            cy: not_nan("INTRINSICS.cy", i.cy)?,
            baseline: match (i.baseline, d.kind) {
                (Some(b), _) => positive("INTRINSICS.baseline", b)?,
                (None, DepthSourceKind::DisparityNpy) => {
                    return Err(err("INTRINSICS.baseline is required for disparity-npy input"))
                }
                (None, DepthSourceKind::DepthPng) => 0.0,
            },
        };

        let r = raw.icp;
        let max_iterations = match r.max_iterations {
            None => DEFAULT_MAX_ITERATIONS,
            Some(n) if n >= 1 => n as usize,
            Some(n) => return Err(err(format!("ICP.max_iterations must be >= 1, got {n}"))),
        };
        let icp = IcpConfig {
            mode: r.mode.as_deref().map(parse_mode).transpose()?.unwrap_or_default(),
            scheme: r.scheme.as_ref().map(parse_scheme).transpose()?.unwrap_or_default(),
            max_iterations,
            convergence_eps: positive("ICP.convergence_eps", r.convergence_eps.unwrap_or(DEFAULT_CONVERGENCE_EPS))?,
            merge_novelty_radius: r
                .novelty_radius
                .map(|v| positive("ICP.novelty_radius", v))
                .transpose()?,
        };

        let ground_truth = raw
            .ground_truth
            .map(|g| -> Result<GroundTruth> {
                Ok(GroundTruth {
                    path: resolve(g.path),
                    unit_scale: positive("GROUND_TRUTH.unit_scale", g.unit_scale.unwrap_or(1.0))?,
                    scale_align: g.scale_align,
                })
            })
            .transpose()?;

        let pixel_stride = match raw.reconstruction.pixel_stride {
            None => 1,
            Some(n) if n >= 1 => n as usize,
            Some(n) => return Err(err(format!("RECONSTRUCTION.pixel_stride must be >= 1, got {n}"))),
        };

        let output_dir = resolve(raw.output_dir);
        Ok(Self {
            data_path: resolve(raw.data_path),
            staging_dir: raw
                .staging_dir
                .map(resolve)
                .unwrap_or_else(|| output_dir.join("staging")),
            output_dir,
            select_schemes,
            depth_source,
            intrinsics,
            icp,
            ground_truth,
            pixel_stride,
            checkpoints: raw.reconstruction.checkpoints,
        })
    }
}
