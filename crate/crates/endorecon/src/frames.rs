//! Frame directories and the staging area for selected frames.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{fsx, Error, Result};

pub const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];
pub const VIDEO_EXTENSIONS: &[&str] = &["mp4", "avi", "mov", "mkv", "webm", "mpg", "mpeg", "m4v", "wmv"];

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

/// Image files in `dir`, sorted by file name. Other files are ignored, but a
/// video file is an error: frames must be extracted beforehand.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        match extension(&path) {
            Some(ext) if VIDEO_EXTENSIONS.contains(&ext.as_str()) => {
                return Err(Error::Input(format!(
                    "{} is a video file; extract frames into an image directory first \
                     (for example `ffmpeg -i input.mp4 frames/%06d.png`)",
                    path.display()
                )))
            }
            Some(ext) if IMAGE_EXTENSIONS.contains(&ext.as_str()) => frames.push(path),
            _ => {}
        }
    }
    frames.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(frames)
}

/// Clears `staging_dir`, then copies `selected` into it as `000000.<ext>`,
/// `000001.<ext>`, ... in the given order.
pub fn stage_frames(selected: &[PathBuf], staging_dir: &Path) -> Result<Vec<PathBuf>> {
    if staging_dir.exists() {
        if !staging_dir.is_dir() {
            return Err(Error::Input(format!(
                "staging path {} exists and is not a directory",
                staging_dir.display()
            )));
        }
        fs::remove_dir_all(staging_dir).map_err(|e| Error::io(staging_dir, e))?;
    }
    fsx::create_dir_all(staging_dir)?;
    selected
        .iter()
        .enumerate()
        .map(|(i, src)| {
            let name = match extension(src) {
                Some(ext) => format!("{i:06}.{ext}"),
                None => format!("{i:06}"),
            };
            let dst = staging_dir.join(name);
            fs::copy(src, &dst).map_err(|e| Error::io(src, e))?;
            Ok(dst)
        })
        .collect()
}
