//! Stage driver: select -> depth import -> reconstruct -> evaluate -> report.
//!
//! Every command runs the stages it depends on in memory and writes the
//! artifacts of the stages it names, followed by `manifest.json`. Output
//! layout under `OUTPUT_DIR`:
//!
//! ```text
//! staging/000000.png ...        selected frames, renumbered
//! selection.json
//! depth/<stem>_depth.npy        imported depth (f64, 0 = invalid)
//! depth/mask.png                universal mask, 255 = valid
//! icp/trace_000001.csv ...      per-iteration trace for each registered frame
//! icp/summary.json
//! transforms.json               frame -> frame 0 transforms
//! map.ply, map_frame_000031.ply fused map and checkpoint snapshots
//! heatmaps/heatmap_000001.{png,npy,json}
//! metrics/metrics.{csv,json}
//! manifest.json
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use endorecon_core::depth::{
    disparity_to_depth, generate_universal_mask, invert_8bit, invert_reciprocal, normalize_8bit, resize_bilinear,
};
use endorecon_core::geometry::backproject_strided;
use endorecon_core::icp::{align_sequence, error_heatmap, IcpMode, IcpReport};
use endorecon_core::merge::{median_spacing, GlobalMap};
use endorecon_core::metrics::{evaluate_sequence, MetricReport};
use endorecon_core::select::{select_sequence, Frame, QualityScoreTable};
use endorecon_core::{DepthKind, DepthMap, PointCloud, Raster, RigidTransform};
use serde::Serialize;

use crate::config::{DepthSourceKind, PipelineConfig, Postprocess};
use crate::error::{fsx, Error, Result};
use crate::frames::{list_frames, stage_frames};
use crate::manifest::{self, display_path, sha256_file, Abort};
use crate::npy::{self, NpyArray};
use crate::report::{self, PoseFile};
use crate::{images, ply};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Select,
    DepthImport,
    Reconstruct,
    Evaluate,
    Heatmap,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Select => "select",
            Command::DepthImport => "depth-import",
            Command::Reconstruct => "reconstruct",
            Command::Evaluate => "evaluate",
            Command::Heatmap => "heatmap",
        }
    }

    fn needs_depth(self) -> bool {
        self != Command::Select
    }

    fn reconstructs(self) -> bool {
        matches!(self, Command::Run | Command::Reconstruct | Command::Heatmap)
    }

    fn writes_depth(self) -> bool {
        matches!(self, Command::Run | Command::DepthImport)
    }

    fn writes_map(self) -> bool {
        matches!(self, Command::Run | Command::Reconstruct)
    }

    fn writes_heatmaps(self) -> bool {
        matches!(self, Command::Run | Command::Heatmap)
    }

    fn evaluates(self) -> bool {
        matches!(self, Command::Run | Command::Evaluate)
    }
}

/// What a completed command produced.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub manifest: PathBuf,
    pub outputs: Vec<PathBuf>,
    /// Stems of the selected frames, in order.
    pub selected: Vec<String>,
    pub transforms: Vec<RigidTransform>,
    pub map_points: usize,
    pub metrics: Option<MetricReport>,
}

struct Selected {
    frames: Vec<Frame>,
    stems: Vec<String>,
}

#[derive(Serialize)]
struct SelectionEntry {
    index: usize,
    source: String,
    staged: String,
}

#[derive(Serialize)]
struct IcpSummaryEntry {
    frame: usize,
    stem: String,
    iterations_run: usize,
    converged: bool,
    final_threshold: f64,
    final_inliers: usize,
    final_mean_distance: f64,
    final_rms_distance: f64,
}

struct Driver<'a> {
    config: &'a PipelineConfig,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
    summary: RunSummary,
}

/// Runs `command` and writes the manifest, also when a stage fails.
pub fn execute(config: &PipelineConfig, config_path: Option<&Path>, command: Command) -> Result<RunSummary> {
    fsx::create_dir_all(&config.output_dir)?;
    let mut driver = Driver {
        config,
        inputs: BTreeMap::new(),
        outputs: Vec::new(),
        summary: RunSummary::default(),
    };
    if let Some(path) = config_path {
        driver.record_input(path)?;
    }
    let result = driver.stages(command);
    let abort = result.as_ref().err().map(|(stage, e)| Abort {
        stage: stage.to_string(),
        error: e.to_string(),
    });
    let manifest = manifest::write_run_manifest(
        &config.output_dir,
        command.name(),
        config,
        &driver.inputs,
        &driver.outputs,
        abort,
    )?;
    match result {
        Ok(()) => {
            let mut summary = driver.summary;
            summary.manifest = manifest;
            summary.outputs = driver.outputs;
            Ok(summary)
        }
        Err((stage, e)) => Err(Error::Stage {
            stage,
            source: Box::new(e),
        }),
    }
}

type StageResult<T> = std::result::Result<T, (&'static str, Error)>;

fn at<T>(stage: &'static str, r: Result<T>) -> StageResult<T> {
    r.map_err(|e| (stage, e))
}

impl Driver<'_> {
    fn record_input(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.to_string_lossy().into_owned(), digest);
        Ok(())
    }

    fn out_dir(&self, sub: &str) -> Result<PathBuf> {
        let dir = self.config.output_dir.join(sub);
        fsx::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn stages(&mut self, command: Command) -> StageResult<()> {
        let selected = at("select", self.select())?;
        if !command.needs_depth() {
            return Ok(());
        }
        let depths = at("depth-import", self.import_depth(&selected, command.writes_depth()))?;
        if command.reconstructs() {
            at("reconstruct", self.reconstruct(&selected.stems, &depths, command))?;
        }
        if command.evaluates() {
            if let Some(report) = at("evaluate", self.evaluate(&selected.stems, &depths))? {
                self.summary.metrics = Some(report);
            }
        }
        Ok(())
    }

    fn select(&mut self) -> Result<Selected> {
        let config = self.config;
        let paths = list_frames(&config.data_path)?;
        if paths.is_empty() {
            return Err(Error::Input(format!(
                "no image frames in {}",
                config.data_path.display()
            )));
        }
        let mut frames = Vec::with_capacity(paths.len());
        for (i, path) in paths.iter().enumerate() {
            self.record_input(path)?;
            let frame = Frame::new(i, images::read_rgb(path)?);
            if let Some(first) = frames.first() {
                let first: &Frame = first;
                if first.pixels.shape() != frame.pixels.shape() {
                    return Err(Error::Input(format!(
                        "{} is {:?} but the first frame is {:?}",
                        path.display(),
                        frame.pixels.shape(),
                        first.pixels.shape()
                    )));
                }
            }
            frames.push(frame);
        }

        let mut keep: Vec<&Frame> = frames.iter().collect();
        for spec in &config.select_schemes {
            let table = match &spec.scores {
                Some(path) => {
                    self.record_input(path)?;
                    Some(report::read_scores(path)?)
                }
                None => None::<QualityScoreTable>,
            };
            keep = select_sequence(&keep, std::slice::from_ref(&spec.scheme), table.as_ref())?;
        }
        let kept: Vec<usize> = keep.iter().map(|f| f.index).collect();

        let sources: Vec<PathBuf> = kept.iter().map(|&i| paths[i].clone()).collect();
        let staged = stage_frames(&sources, &config.staging_dir)?;
        self.outputs.extend(staged.iter().cloned());

        let listing: Vec<SelectionEntry> = kept
            .iter()
            .zip(&staged)
            .map(|(&i, s)| SelectionEntry {
                index: i,
                source: paths[i].to_string_lossy().into_owned(),
                staged: display_path(s, &config.output_dir),
            })
            .collect();
        let listing_path = config.output_dir.join("selection.json");
        report::write_json(&listing_path, &listing)?;
        self.outputs.push(listing_path);

        let stems: Vec<String> = kept
            .iter()
            .map(|&i| paths[i].file_stem().unwrap_or_default().to_string_lossy().into_owned())
            .collect();
        self.summary.selected = stems.clone();
        let mut frames: Vec<Option<Frame>> = frames.into_iter().map(Some).collect();
        let frames = kept.iter().map(|&i| frames[i].take().expect("unique")).collect();
        Ok(Selected { frames, stems })
    }

    fn import_depth(&mut self, selected: &Selected, write: bool) -> Result<Vec<DepthMap>> {
        let config = self.config;
        let source = &config.depth_source;
        if selected.frames.is_empty() {
            return Ok(Vec::new());
        }
        let (w, h) = selected.frames[0].pixels.shape();
        let intensities: Vec<Raster<f64>> = selected.frames.iter().map(Frame::intensity).collect();
        let mask = generate_universal_mask(&intensities, source.mask_floor)?;

        let mut maps = Vec::with_capacity(selected.stems.len());
        for stem in &selected.stems {
            let path = source.path.join(format!("{stem}{}", source.kind.suffix()));
            if !path.is_file() {
                return Err(Error::Input(format!(
                    "no prediction for frame '{stem}': expected {}",
                    path.display()
                )));
            }
            self.record_input(&path)?;
            let map = match source.kind {
                DepthSourceKind::DepthPng => images::read_depth_png(&path, source.unit_scale)?,
                DepthSourceKind::DisparityNpy => {
                    disparity_to_depth(&npy::read_npy_2d(&path, DepthKind::Disparity)?, &config.intrinsics)?
                }
            };
            let mut map = if map.shape() == (w, h) {
                map
            } else {
                resize_bilinear(&map, w, h)?
            };
            map.apply_mask(&mask)?;
            let mut map = match source.postprocess {
                Postprocess::None => map,
                Postprocess::Normalize => normalize_8bit(&map)?,
                Postprocess::NormalizeInvert => invert_8bit(&normalize_8bit(&map)?)?,
                Postprocess::Reciprocal => invert_reciprocal(&map),
            };
            // Normalized maps are used as depth from here on; zero or
            // negative depth has no back-projection.
            map.kind = DepthKind::Depth;
            let positive = map.values.map(|&v| v > 0.0);
            map.apply_mask(&positive)?;
            maps.push(map);
        }

        if write {
            let dir = self.out_dir("depth")?;
            for (stem, map) in selected.stems.iter().zip(&maps) {
                let zeroed = Raster::from_fn(w, h, |u, v| if map.is_valid(u, v) { map.values.at(u, v) } else { 0.0 });
                let path = dir.join(format!("{stem}_depth.npy"));
                npy::write_npy(&path, &NpyArray::from_raster_f64(&zeroed))?;
                self.outputs.push(path);
            }
            let path = dir.join("mask.png");
            images::write_gray8(&path, &mask.map(|&m| if m { 255 } else { 0 }))?;
            self.outputs.push(path);
        }
        Ok(maps)
    }

    fn write_traces(&mut self, stems: &[String], reports: &[IcpReport]) -> Result<()> {
        let dir = self.out_dir("icp")?;
        let mut summary = Vec::with_capacity(reports.len());
        for (k, report) in reports.iter().enumerate() {
            let frame = k + 1;
            let path = dir.join(format!("trace_{frame:06}.csv"));
            report::write_trace(&path, report)?;
            self.outputs.push(path);
            let last = report.last();
            summary.push(IcpSummaryEntry {
                frame,
                stem: stems[frame].clone(),
                iterations_run: report.iterations_run,
                converged: report.converged,
                final_threshold: last.map_or(f64::NAN, |r| r.threshold),
                final_inliers: last.map_or(0, |r| r.inliers),
                final_mean_distance: last.map_or(f64::NAN, |r| r.mean_distance),
                final_rms_distance: last.map_or(f64::NAN, |r| r.rms_distance),
            });
        }
        let path = dir.join("summary.json");
        report::write_json(&path, &summary)?;
        self.outputs.push(path);
        Ok(())
    }

    fn write_transforms(&mut self, transforms: &[RigidTransform]) -> Result<()> {
        let path = self.config.output_dir.join("transforms.json");
        report::write_json(&path, &PoseFile::new("frame_to_frame0", transforms))?;
        self.outputs.push(path);
        Ok(())
    }

    fn reconstruct(&mut self, stems: &[String], depths: &[DepthMap], command: Command) -> Result<()> {
        let config = self.config;
        let clouds: Vec<PointCloud> = depths
            .iter()
            .map(|d| backproject_strided(d, &config.intrinsics, config.pixel_stride))
            .collect::<endorecon_core::Result<_>>()?;
        if clouds.is_empty() {
            return Err(Error::Input("no frames left after selection".into()));
        }

        let alignment = match align_sequence(&clouds, &config.icp) {
            Ok(a) => a,
            Err(failure) => {
                if command.writes_map() {
                    let mut reports = failure.partial.reports.clone();
                    reports.push(failure.failure.report.clone());
                    self.write_traces(stems, &reports)?;
                    self.write_transforms(&failure.partial.transforms)?;
                }
                return Err(Error::Input(format!(
                    "registration failed at sequence position {} (frame '{}'): {}",
                    failure.index, stems[failure.index], failure.failure.error
                )));
            }
        };
        self.summary.transforms = alignment.transforms.clone();

        if command.writes_map() {
            self.write_traces(stems, &alignment.reports)?;
            self.write_transforms(&alignment.transforms)?;
        }

        let radius = config
            .icp
            .merge_novelty_radius
            .or_else(|| median_spacing(&clouds[0]))
            .unwrap_or(0.0);
        let heat_dir = if command.writes_heatmaps() {
            Some(self.out_dir("heatmaps")?)
        } else {
            None
        };
        let (w, h) = depths[0].shape();
        let mut map = GlobalMap::new();
        let mut previous: Option<PointCloud> = None;
        for (k, cloud) in clouds.iter().enumerate() {
            let aligned = cloud.transformed(&alignment.transforms[k]);
            if let (Some(dir), true) = (&heat_dir, k > 0) {
                let threshold = alignment.reports[k - 1].last().map_or(0.0, |r| r.threshold);
                let target = match config.icp.mode {
                    IcpMode::Neighbor => endorecon_core::KdTree::build(&previous.as_ref().expect("k > 0").points)?,
                    IcpMode::Global => map.index().expect("map holds frame 0").clone(),
                };
                let heat = error_heatmap(&aligned, &target, threshold, w, h)?;
                let written = report::write_heatmap(dir, &format!("heatmap_{k:06}"), &heat)?;
                self.outputs.extend(written);
            }
            map.merge(&aligned, radius, k)?;
            if command.writes_map() && config.checkpoints.contains(&k) {
                let path = config.output_dir.join(format!("map_frame_{k:06}.ply"));
                ply::write_ply(&path, map.cloud())?;
                self.outputs.push(path);
            }
            previous = Some(aligned);
        }
        self.summary.map_points = map.len();
        if command.writes_map() {
            let path = config.output_dir.join("map.ply");
            ply::write_ply(&path, map.cloud())?;
            self.outputs.push(path);
        }
        Ok(())
    }

    fn evaluate(&mut self, stems: &[String], depths: &[DepthMap]) -> Result<Option<MetricReport>> {
        let Some(gt) = &self.config.ground_truth else {
            return Ok(None);
        };
        let mut gts = Vec::with_capacity(stems.len());
        for stem in stems {
            let path = gt.path.join(format!("{stem}_depth.png"));
            if !path.is_file() {
                return Err(Error::Input(format!(
                    "no ground truth for frame '{stem}': expected {}",
                    path.display()
                )));
            }
            self.record_input(&path)?;
            gts.push(images::read_depth_png(&path, gt.unit_scale)?.ground_truth());
        }
        let report = evaluate_sequence(depths, &gts, gt.scale_align)?;
        let dir = self.out_dir("metrics")?;
        self.outputs.extend(report::write_metrics(&dir, &report)?);
        Ok(Some(report))
    }
}
