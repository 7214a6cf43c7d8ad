//! Frame selection rules.
//!
//! Both rules keep a frame only when its statistic is strictly greater than
//! the threshold, and both preserve input order. Rules compose sequentially:
//! each scheme filters the survivors of the previous one.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::Raster;

/// An RGB frame with its position in the input sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    pub pixels: Raster<[u8; 3]>,
}

impl Frame {
    pub fn new(index: usize, pixels: Raster<[u8; 3]>) -> Self {
        Self { index, pixels }
    }

    /// Mean of the red channel over all pixels, no gamma correction.
    pub fn mean_red(&self) -> f64 {
        let sum: u64 = self.pixels.as_slice().iter().map(|p| u64::from(p[0])).sum();
        sum as f64 / self.pixels.len() as f64
    }

    /// Per-pixel brightness used by the universal mask: the largest channel.
    pub fn intensity(&self) -> Raster<f64> {
        self.pixels
            .map(|p| f64::from(p[0].max(p[1]).max(p[2])))
    }
}

/// Quality scores produced by an external image-quality model, keyed by
/// frame index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QualityScoreTable {
    entries: BTreeMap<usize, f64>,
}

impl QualityScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous score when `frame` was already present.
    pub fn insert(&mut self, frame: usize, score: f64) -> Option<f64> {
        self.entries.insert(frame, score)
    }

    pub fn get(&self, frame: usize) -> Option<f64> {
        self.entries.get(&frame).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }
}

impl FromIterator<(usize, f64)> for QualityScoreTable {
    fn from_iter<I: IntoIterator<Item = (usize, f64)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

pub fn select_by_score<'a>(
    frames: &[&'a Frame],
    scores: &QualityScoreTable,
    threshold: f64,
) -> Result<Vec<&'a Frame>> {
    let mut kept = Vec::new();
    for frame in frames {
        let score = scores
            .get(frame.index)
            .ok_or(Error::MissingScore { frame: frame.index })?;
        if score > threshold {
            kept.push(*frame);
        }
    }
    Ok(kept)
}

pub fn select_by_rchannel<'a>(frames: &[&'a Frame], threshold: f64) -> Vec<&'a Frame> {
    frames
        .iter()
        .copied()
        .filter(|f| f.mean_red() > threshold)
        .collect()
}

/// One selection rule with its threshold.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "id", rename_all = "snake_case"))]
pub enum SelectScheme {
    /// External quality score must exceed the threshold.
    QualityScore { threshold: f64 },
    /// Mean red intensity must exceed the threshold.
    RedChannel { threshold: f64 },
}

/// Applies `schemes` in order, each one filtering the survivors of the
/// previous. An empty scheme list keeps every frame.
pub fn select_sequence<'a>(
    frames: &[&'a Frame],
    schemes: &[SelectScheme],
    scores: Option<&QualityScoreTable>,
) -> Result<Vec<&'a Frame>> {
    let mut current: Vec<&'a Frame> = frames.to_vec();
    for scheme in schemes {
        current = match *scheme {
            SelectScheme::QualityScore { threshold } => {
                let empty = QualityScoreTable::new();
                select_by_score(&current, scores.unwrap_or(&empty), threshold)?
            }
            SelectScheme::RedChannel { threshold } => select_by_rchannel(&current, threshold),
        };
    }
    Ok(current)
}
