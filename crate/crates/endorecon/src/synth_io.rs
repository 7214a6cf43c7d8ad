//! Writes a synthetic scene as a dataset the pipeline reads unchanged.
//!
//! ```text
//! frames/000000.png         RGB frames, black on the border
//! pred/000000_disp.npy      disparity (f64) of the noisy, outlier-laden depth
//! gt/000000_depth.png       noise-free depth, 16-bit, unit scale GT_UNIT_SCALE
//! poses.json                camera-to-world poses
//! config.toml               pipeline config pointing at the above
//! ```

use std::path::{Path, PathBuf};

use endorecon_core::depth::depth_to_disparity;
use endorecon_core::synth::SyntheticScene;
use endorecon_core::{DepthMap, Raster};

use crate::error::{fsx, Result};
use crate::npy::{self, NpyArray};
use crate::report::{self, PoseFile};
use crate::images;

pub const GT_UNIT_SCALE: f64 = 0.01;

/// Colour of a rendered pixel: a reddish tissue tone that darkens with depth
/// but never drops below the default mask floor.
fn shade(depth: f64) -> [u8; 3] {
    let t = ((depth - 40.0) / 120.0).clamp(0.0, 1.0);
    let r = 230.0 - 130.0 * t;
    [r.round() as u8, (0.45 * r).round() as u8, (0.35 * r).round() as u8]
}

pub fn frame_image(map: &DepthMap) -> Raster<[u8; 3]> {
    Raster::from_fn(map.width(), map.height(), |u, v| {
        if map.is_valid(u, v) {
            shade(map.values.at(u, v))
        } else {
            [0, 0, 0]
        }
    })
}

fn config_text(scene: &SyntheticScene) -> String {
    let i = &scene.intrinsics;
    format!(
        r#"DATA_PATH = "frames"
OUTPUT_DIR = "run"

[DEPTH_SCHEME]
path = "pred"
kind = "disparity-npy"

[INTRINSICS]
fx = {:?}
fy = {:?}
cx = {:?}
cy = {:?}
baseline = {:?}

[ICP]
mode = "neighbor"
scheme = "mean_plus_2std"
max_iterations = 40

[GROUND_TRUTH]
path = "gt"
unit_scale = {:?}
scale_align = false
"#,
        i.fx, i.fy, i.cx, i.cy, i.baseline, GT_UNIT_SCALE
    )
}

/// Renders `scene` and writes the dataset into `out`. Returns the written
/// files.
pub fn write_dataset(scene: &SyntheticScene, out: &Path) -> Result<Vec<PathBuf>> {
    let (noisy, poses) = scene.render_depth_sequence()?;
    let clean_scene = SyntheticScene {
        noise_sigma: 0.0,
        outlier_fraction: 0.0,
        ..scene.clone()
    };
    let (clean, _) = clean_scene.render_depth_sequence()?;

    let frames = out.join("frames");
    let pred = out.join("pred");
    let gt = out.join("gt");
    for dir in [&frames, &pred, &gt] {
        fsx::create_dir_all(dir)?;
    }
    let mut written = Vec::new();
    for (k, (n, c)) in noisy.iter().zip(&clean).enumerate() {
        let path = frames.join(format!("{k:06}.png"));
        images::write_rgb(&path, &frame_image(c))?;
        written.push(path);

        let disp = depth_to_disparity(n, &scene.intrinsics)?;
        let values = Raster::from_fn(disp.width(), disp.height(), |u, v| {
            if disp.is_valid(u, v) {
                disp.values.at(u, v)
            } else {
                0.0
            }
        });
        let path = pred.join(format!("{k:06}_disp.npy"));
        npy::write_npy(&path, &NpyArray::from_raster_f64(&values))?;
        written.push(path);

        let path = gt.join(format!("{k:06}_depth.png"));
        images::write_depth_png16(&path, c, GT_UNIT_SCALE)?;
        written.push(path);
    }
    let path = out.join("poses.json");
    report::write_json(&path, &PoseFile::new("camera_to_world", &poses))?;
    written.push(path);
    let path = out.join("config.toml");
    fsx::write(&path, config_text(scene))?;
    written.push(path);
    Ok(written)
}
