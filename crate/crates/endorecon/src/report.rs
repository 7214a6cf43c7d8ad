//! Tabular and JSON artifacts: score sidecars, ICP traces, metric reports,
//! heatmaps and pose files.

use std::path::Path;

use endorecon_core::icp::{IcpReport, IterationRecord};
use endorecon_core::metrics::MetricReport;
use endorecon_core::select::QualityScoreTable;
use endorecon_core::{Raster, RigidTransform};
use serde::{Deserialize, Serialize};

use crate::error::{fsx, Error, Result};
use crate::npy::{self, NpyArray};
use crate::images;

#[derive(Deserialize)]
struct ScoreRow {
    frame_index: usize,
    score: f64,
}

/// Reads a `frame_index,score` sidecar. Duplicate indices are rejected.
pub fn read_scores(path: &Path) -> Result<QualityScoreTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["frame_index", "score"] {
        return Err(Error::csv(path, "header must be 'frame_index,score'"));
    }
    let mut table = QualityScoreTable::new();
    for row in reader.deserialize::<ScoreRow>() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        if table.insert(row.frame_index, row.score).is_some() {
            return Err(Error::csv(path, format!("frame {} listed twice", row.frame_index)));
        }
    }
    Ok(table)
}

pub fn write_scores(path: &Path, table: &QualityScoreTable) -> Result<()> {
    let mut out = String::from("frame_index,score\n");
    for (frame, score) in table.iter() {
        out.push_str(&format!("{frame},{score}\n"));
    }
    fsx::write(path, out)
}

pub const TRACE_HEADER: &str = "iteration,threshold,inliers,mean_distance,max_distance";

pub fn trace_csv(records: &[IterationRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration, r.threshold, r.inliers, r.mean_distance, r.max_distance
        ));
    }
    out
}

pub fn write_trace(path: &Path, report: &IcpReport) -> Result<()> {
    fsx::write(path, trace_csv(&report.per_iteration))
}

pub const METRICS_HEADER: &str = "frame,rmse,mae,sq_rel,delta_accuracy,ssim,log_rmse,scale,excluded_nonpositive,spike";

pub fn metrics_csv(report: &MetricReport) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for (i, m) in report.per_frame.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            m.frame,
            m.rmse,
            m.mae,
            m.sq_rel,
            m.delta_accuracy,
            m.ssim,
            m.log_rmse,
            m.scale,
            m.excluded_nonpositive,
            report.spikes.contains(&i)
        ));
    }
    out
}

pub fn write_metrics(dir: &Path, report: &MetricReport) -> Result<[std::path::PathBuf; 2]> {
    let csv_path = dir.join("metrics.csv");
    let json_path = dir.join("metrics.json");
    fsx::write(&csv_path, metrics_csv(report))?;
    write_json(&json_path, report)?;
    Ok([csv_path, json_path])
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fsx::write(path, text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fsx::read_to_string(path)?)?)
}

/// Normalisation range stored next to a heatmap PNG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRange {
    pub min: f64,
    pub max: f64,
}

/// `round(255 (v - min) / (max - min))`, all zero when the range is empty.
pub fn heatmap_to_gray(raster: &Raster<f64>) -> (Raster<u8>, HeatmapRange) {
    let min = raster.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let max = raster.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let gray = raster.map(|&v| {
        if span > 0.0 {
            (255.0 * (v - min) / span).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    });
    (gray, HeatmapRange { min, max })
}

/// Writes `<stem>.png`, `<stem>.npy` (float32) and `<stem>.json` (range).
pub fn write_heatmap(dir: &Path, stem: &str, raster: &Raster<f64>) -> Result<Vec<std::path::PathBuf>> {
    let (gray, range) = heatmap_to_gray(raster);
    let png = dir.join(format!("{stem}.png"));
    let npy_path = dir.join(format!("{stem}.npy"));
    let json = dir.join(format!("{stem}.json"));
    images::write_gray8(&png, &gray)?;
    npy::write_npy(&npy_path, &NpyArray::from_raster_f32(raster))?;
    write_json(&json, &range)?;
    Ok(vec![png, npy_path, json])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame: usize,
    /// Row-major rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFile {
    /// What the transforms map, e.g. `camera_to_world` or `frame_to_frame0`.
    pub convention: String,
    pub poses: Vec<PoseRecord>,
}

impl PoseFile {
    pub fn new(convention: &str, transforms: &[RigidTransform]) -> Self {
        Self {
            convention: convention.into(),
            poses: transforms
                .iter()
                .enumerate()
                .map(|(frame, t)| {
                    let (rotation, translation) = t.to_row_major();
                    PoseRecord {
                        frame,
                        rotation,
                        translation,
                    }
                })
                .collect(),
        }
    }

    pub fn transforms(&self) -> Result<Vec<RigidTransform>> {
        self.poses
            .iter()
            .map(|p| RigidTransform::from_row_major(p.rotation, p.translation).map_err(Error::from))
            .collect()
    }
}
