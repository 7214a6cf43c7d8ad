//! Novelty-filtered fusion of aligned frame clouds into a global map.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::kdtree::KdTree;
use crate::stats;

/// Accumulated map plus, for every point, the frame it came from.
#[derive(Debug, Clone, Default)]
pub struct GlobalMap {
    cloud: PointCloud,
    frame_provenance: Vec<usize>,
    index: Option<KdTree>,
}

impl GlobalMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn frame_provenance(&self) -> &[usize] {
        &self.frame_provenance
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    /// Spatial index over the current map, `None` while empty.
    pub fn index(&self) -> Option<&KdTree> {
        self.index.as_ref()
    }

    /// Appends every point of `aligned` whose nearest map point is strictly
    /// farther than `novelty_radius`; the rest are treated as duplicates. All
    /// novelty queries run against the map as it was before this call. The
    /// first cloud into an empty map is taken whole. Returns the number of
    /// points appended.
    pub fn merge(&mut self, aligned: &PointCloud, novelty_radius: f64, frame: usize) -> Result<usize> {
        if !(novelty_radius >= 0.0) {
            return Err(Error::NegativeRadius(novelty_radius));
        }
        let novel: Vec<usize> = match &self.index {
            None => (0..aligned.len()).collect(),
            Some(index) => aligned
                .points
                .iter()
                .enumerate()
                .filter(|(_, p)| index.nearest(p).1 > novelty_radius)
                .map(|(i, _)| i)
                .collect(),
        };
        if novel.is_empty() {
            return Ok(0);
        }
        self.cloud
            .points
            .extend(novel.iter().map(|&i| aligned.points[i]));
        self.frame_provenance
            .extend(core::iter::repeat_n(frame, novel.len()));
        self.index = Some(KdTree::build(&self.cloud.points)?);
        Ok(novel.len())
    }
}

/// Functional form of [`GlobalMap::merge`].
pub fn merge(mut map: GlobalMap, aligned: &PointCloud, novelty_radius: f64, frame: usize) -> Result<GlobalMap> {
    map.merge(aligned, novelty_radius, frame)?;
    Ok(map)
}

/// Median distance from each point to its nearest other point. Used as the
/// default novelty radius.
pub fn median_spacing(cloud: &PointCloud) -> Option<f64> {
    if cloud.len() < 2 {
        return None;
    }
    let index = KdTree::build(&cloud.points).ok()?;
    let spacing: Vec<f64> = cloud
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| index.nearest_excluding(p, i).map(|(_, d)| d))
        .collect();
    stats::median(&spacing)
}
