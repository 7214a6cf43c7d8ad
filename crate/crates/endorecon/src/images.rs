//! PNG frames and depth rasters.

use std::path::Path;

use endorecon_core::{DepthKind, DepthMap, Raster};
use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| Error::image(path, e.to_string()))
}

fn save<P, C>(path: &Path, buffer: ImageBuffer<P, C>) -> Result<()>
where
    P: image::Pixel + image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    buffer
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::image(path, e.to_string()))
}

/// Any colour image, converted to 8-bit RGB.
pub fn read_rgb(path: &Path) -> Result<Raster<[u8; 3]>> {
    let img = open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0).collect();
    Ok(Raster::from_vec(w as usize, h as usize, data)?)
}

pub fn write_rgb(path: &Path, r: &Raster<[u8; 3]>) -> Result<()> {
    let flat: Vec<u8> = r.as_slice().iter().flatten().copied().collect();
    let buf = ImageBuffer::<Rgb<u8>, _>::from_raw(r.width() as u32, r.height() as u32, flat).expect("sized");
    save(path, buf)
}

/// 8- or 16-bit grayscale depth; `depth = stored * unit_scale`. A stored 0
/// means "no measurement" and is masked out.
pub fn read_depth_png(path: &Path, unit_scale: f64) -> Result<DepthMap> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw: Vec<f64> = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(f64::from).collect(),
        other => {
            return Err(Error::image(
                path,
                format!("expected 8- or 16-bit grayscale depth, found {:?}", other.color()),
            ))
        }
    };
    let mask = Raster::from_vec(w, h, raw.iter().map(|&v| v > 0.0).collect())?;
    let values = Raster::from_vec(w, h, raw.into_iter().map(|v| v * unit_scale).collect())?;
    Ok(DepthMap::with_mask(values, mask, DepthKind::Depth)?)
}

pub fn write_gray8(path: &Path, r: &Raster<u8>) -> Result<()> {
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(r.width() as u32, r.height() as u32, r.as_slice().to_vec())
        .expect("sized");
    save(path, buf)
}

pub fn write_gray16(path: &Path, r: &Raster<u16>) -> Result<()> {
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(r.width() as u32, r.height() as u32, r.as_slice().to_vec())
        .expect("sized");
    save(path, buf)
}

/// Quantises depth to 16 bits, `round(depth / unit_scale)`; invalid pixels
/// become 0.
pub fn write_depth_png16(path: &Path, map: &DepthMap, unit_scale: f64) -> Result<()> {
    let q = Raster::from_fn(map.width(), map.height(), |u, v| {
        if map.is_valid(u, v) {
            (map.values.at(u, v) / unit_scale).round().clamp(0.0, u16::MAX as f64) as u16
        } else {
            0
        }
    });
    write_gray16(path, &q)
}
