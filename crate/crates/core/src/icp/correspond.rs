use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::kdtree::KdTree;
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub source: usize,
    pub target: usize,
    pub distance: f64,
}

/// Every source point paired with its nearest target point, plus which pairs
/// passed the distance threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondences {
    pub pairs: Vec<Pair>,
    pub inlier_mask: Vec<bool>,
    pub threshold: f64,
}

impl Correspondences {
    /// Marks `pairs[i]` as an inlier iff `distance < threshold`.
    pub fn from_pairs(pairs: Vec<Pair>, threshold: f64) -> Self {
        let inlier_mask = pairs.iter().map(|p| p.distance < threshold).collect();
        Self {
            pairs,
            inlier_mask,
            threshold,
        }
    }

    pub fn distances(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.distance).collect()
    }

    pub fn inliers(&self) -> impl Iterator<Item = &Pair> + '_ {
        self.pairs
            .iter()
            .zip(&self.inlier_mask)
            .filter_map(|(p, m)| m.then_some(p))
    }

    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|m| **m).count()
    }
}

/// Exact nearest target for every source point.
pub fn nearest_pairs(source: &PointCloud, target: &KdTree) -> Vec<Pair> {
    source
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (j, d) = target.nearest(p);
            Pair {
                source: i,
                target: j,
                distance: d,
            }
        })
        .collect()
}

pub fn find_correspondences(source: &PointCloud, target: &KdTree, threshold: f64) -> Correspondences {
    Correspondences::from_pairs(nearest_pairs(source, target), threshold)
}

/// Per-pixel error raster: the correspondence distance at the source pixel of
/// every inlier, 0 where there is no match or no point.
pub fn heatmap_from_correspondences(
    source: &PointCloud,
    corr: &Correspondences,
    width: usize,
    height: usize,
) -> Result<Raster<f64>> {
    let pixels = source.source_pixels.as_ref().ok_or(Error::MissingSourcePixels)?;
    let mut out = Raster::filled(width, height, 0.0);
    for pair in corr.inliers() {
        let (u, v) = pixels[pair.source];
        *out.get_mut(u as usize, v as usize) = pair.distance;
    }
    Ok(out)
}

pub fn error_heatmap(
    source: &PointCloud,
    target: &KdTree,
    threshold: f64,
    width: usize,
    height: usize,
) -> Result<Raster<f64>> {
    if source.source_pixels.is_none() {
        return Err(Error::MissingSourcePixels);
    }
    let corr = find_correspondences(source, target, threshold);
    heatmap_from_correspondences(source, &corr, width, height)
}
