//! Depth evaluation metrics.
//!
//! Every metric compares a prediction against ground truth over the pixels
//! valid in both maps. `sq_rel` additionally skips pixels with `gt <= 0`;
//! `delta_accuracy` and `log_rmse` skip pixels where either value is `<= 0`.
//! Skipped pixels are counted in [`FrameMetrics::excluded_nonpositive`].

use alloc::vec::Vec;

use crate::depth::{fit_scale, DepthMap};
use crate::error::{Error, Result};
use crate::stats;

pub const DEFAULT_DELTA_THRESHOLD: f64 = 1.25;
pub const SSIM_WINDOW: usize = 7;
/// Spike rule: RMSE above `median + SPIKE_K * 1.4826 * MAD`.
pub const SPIKE_K: f64 = 3.0;

fn joint_pairs(pred: &DepthMap, gt: &DepthMap) -> Result<Vec<(f64, f64)>> {
    pred.values.ensure_same_shape(&gt.values)?;
    let pairs: Vec<(f64, f64)> = pred
        .values
        .as_slice()
        .iter()
        .zip(gt.values.as_slice())
        .zip(pred.mask.as_slice().iter().zip(gt.mask.as_slice()))
        .filter_map(|((p, g), (mp, mg))| (*mp && *mg).then_some((*p, *g)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoValidPixels);
    }
    Ok(pairs)
}

fn mean_over(pairs: impl Iterator<Item = f64>) -> Result<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in pairs {
        sum += v;
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(sum / n as f64)
}

pub fn rmse(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let pairs = joint_pairs(pred, gt)?;
    Ok(libm::sqrt(mean_over(pairs.iter().map(|(p, g)| (p - g) * (p - g)))?))
}

pub fn mae(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let pairs = joint_pairs(pred, gt)?;
    mean_over(pairs.iter().map(|(p, g)| libm::fabs(p - g)))
}

fn sq_rel_counted(pred: &DepthMap, gt: &DepthMap) -> Result<(f64, usize)> {
    let pairs = joint_pairs(pred, gt)?;
    let excluded = pairs.iter().filter(|(_, g)| !(*g > 0.0)).count();
    let v = mean_over(
        pairs
            .iter()
            .filter(|(_, g)| *g > 0.0)
            .map(|(p, g)| (p - g) * (p - g) / g),
    )?;
    Ok((v, excluded))
}

pub fn sq_rel(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    sq_rel_counted(pred, gt).map(|(v, _)| v)
}

fn positive_pairs(pred: &DepthMap, gt: &DepthMap) -> Result<(Vec<(f64, f64)>, usize)> {
    let pairs = joint_pairs(pred, gt)?;
    let total = pairs.len();
    let kept: Vec<(f64, f64)> = pairs
        .into_iter()
        .filter(|(p, g)| *p > 0.0 && *g > 0.0)
        .collect();
    if kept.is_empty() {
        return Err(Error::NoValidPixels);
    }
    let excluded = total - kept.len();
    Ok((kept, excluded))
}

/// Fraction of pixels with `max(p/g, g/p) < threshold`.
pub fn delta_accuracy(pred: &DepthMap, gt: &DepthMap, threshold: f64) -> Result<f64> {
    let (pairs, _) = positive_pairs(pred, gt)?;
    mean_over(pairs.iter().map(|(p, g)| {
        let ratio = p.max(*g) / p.min(*g);
        if ratio < threshold {
            1.0
        } else {
            0.0
        }
    }))
}

/// RMSE of natural logarithms.
pub fn log_rmse(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let (pairs, _) = positive_pairs(pred, gt)?;
    let v = mean_over(pairs.iter().map(|(p, g)| {
        let d = libm::log(*p) - libm::log(*g);
        d * d
    }))?;
    Ok(libm::sqrt(v))
}

/// Mean SSIM over all 7x7 uniform windows lying entirely inside the jointly
/// valid region. `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2` with
/// `L = max(max(pred), max(gt))` over valid pixels. Variances and covariance
/// use the sample normalization `1 / (N - 1)`.
pub fn ssim(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    pred.values.ensure_same_shape(&gt.values)?;
    let (w, h) = pred.shape();
    let win = SSIM_WINDOW;
    if w < win || h < win {
        return Err(Error::RegionTooSmall { window: win });
    }
    let valid: Vec<bool> = pred
        .mask
        .as_slice()
        .iter()
        .zip(gt.mask.as_slice())
        .map(|(a, b)| *a && *b)
        .collect();

    let mut range = f64::NEG_INFINITY;
    for (i, &ok) in valid.iter().enumerate() {
        if ok {
            range = range
                .max(pred.values.as_slice()[i])
                .max(gt.values.as_slice()[i]);
        }
    }
    let c1 = (0.01 * range) * (0.01 * range);
    let c2 = (0.03 * range) * (0.03 * range);

    // invalid pixel count in each window via a summed-area table
    let mut holes = alloc::vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            let here = u32::from(!valid[y * w + x]);
            holes[(y + 1) * (w + 1) + x + 1] =
                here + holes[y * (w + 1) + x + 1] + holes[(y + 1) * (w + 1) + x] - holes[y * (w + 1) + x];
        }
    }
    let holes_in = |x: usize, y: usize| {
        let (x1, y1) = (x + win, y + win);
        holes[y1 * (w + 1) + x1] + holes[y * (w + 1) + x] - holes[y * (w + 1) + x1] - holes[y1 * (w + 1) + x]
    };

    let n = (win * win) as f64;
    let cov_norm = n / (n - 1.0);
    let px = pred.values.as_slice();
    let gy = gt.values.as_slice();
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=(h - win) {
        for x in 0..=(w - win) {
            if holes_in(x, y) != 0 {
                continue;
            }
            let mut sx = 0.0;
            let mut sy = 0.0;
            for dy in 0..win {
                let row = (y + dy) * w + x;
                for dx in 0..win {
                    sx += px[row + dx];
                    sy += gy[row + dx];
                }
            }
            let mx = sx / n;
            let my = sy / n;
            let mut vxx = 0.0;
            let mut vyy = 0.0;
            let mut vxy = 0.0;
            for dy in 0..win {
                let row = (y + dy) * w + x;
                for dx in 0..win {
                    let a = px[row + dx] - mx;
                    let b = gy[row + dx] - my;
                    vxx += a * a;
                    vyy += b * b;
                    vxy += a * b;
                }
            }
            let vx = cov_norm * vxx / n;
            let vy = cov_norm * vyy / n;
            let cxy = cov_norm * vxy / n;
            let num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
            let den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::RegionTooSmall { window: win });
    }
    Ok(total / count as f64)
}

/// Metrics for one frame of a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameMetrics {
    pub frame: usize,
    pub rmse: f64,
    pub mae: f64,
    pub sq_rel: f64,
    pub delta_accuracy: f64,
    pub ssim: f64,
    pub log_rmse: f64,
    /// Scale applied to the prediction (1 without alignment).
    pub scale: f64,
    /// Jointly valid pixels skipped by the ratio/log metrics for being <= 0.
    pub excluded_nonpositive: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricMeans {
    pub rmse: f64,
    pub mae: f64,
    pub sq_rel: f64,
    pub delta_accuracy: f64,
    pub ssim: f64,
    pub log_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub per_frame: Vec<FrameMetrics>,
    pub means: MetricMeans,
    /// Frames whose RMSE is an outlier against the rest of the sequence.
    pub spikes: Vec<usize>,
}

pub fn evaluate_frame(frame: usize, pred: &DepthMap, gt: &DepthMap, scale_align: bool) -> Result<FrameMetrics> {
    let scale = if scale_align { fit_scale(pred, gt)? } else { 1.0 };
    let aligned;
    let pred = if scale_align {
        aligned = pred.scaled(scale);
        &aligned
    } else {
        pred
    };
    let (sq, _) = sq_rel_counted(pred, gt)?;
    let (_, excluded) = positive_pairs(pred, gt)?;
    Ok(FrameMetrics {
        frame,
        rmse: rmse(pred, gt)?,
        mae: mae(pred, gt)?,
        sq_rel: sq,
        delta_accuracy: delta_accuracy(pred, gt, DEFAULT_DELTA_THRESHOLD)?,
        ssim: ssim(pred, gt)?,
        log_rmse: log_rmse(pred, gt)?,
        scale,
        excluded_nonpositive: excluded,
    })
}

/// Evaluates each `(pred, gt)` pair, optionally rescaling every prediction by
/// its least-squares scale first, and flags RMSE spikes.
pub fn evaluate_sequence(preds: &[DepthMap], gts: &[DepthMap], scale_align: bool) -> Result<MetricReport> {
    if preds.len() != gts.len() {
        return Err(Error::LengthMismatch {
            preds: preds.len(),
            gts: gts.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let per_frame = preds
        .iter()
        .zip(gts)
        .enumerate()
        .map(|(i, (p, g))| evaluate_frame(i, p, g, scale_align).map_err(|e| e.at_frame(i)))
        .collect::<Result<Vec<_>>>()?;

    let avg = |f: fn(&FrameMetrics) -> f64| per_frame.iter().map(f).sum::<f64>() / per_frame.len() as f64;
    let means = MetricMeans {
        rmse: avg(|m| m.rmse),
        mae: avg(|m| m.mae),
        sq_rel: avg(|m| m.sq_rel),
        delta_accuracy: avg(|m| m.delta_accuracy),
        ssim: avg(|m| m.ssim),
        log_rmse: avg(|m| m.log_rmse),
    };
    let rmses: Vec<f64> = per_frame.iter().map(|m| m.rmse).collect();
    let spikes = flag_spikes(&rmses);
    Ok(MetricReport {
        per_frame,
        means,
        spikes,
    })
}

/// Indices whose value exceeds `median + 3 * 1.4826 * MAD`.
pub fn flag_spikes(values: &[f64]) -> Vec<usize> {
    let (Some(med), Some(mad)) = (stats::median(values), stats::scaled_mad(values)) else {
        return Vec::new();
    };
    let limit = med + SPIKE_K * mad;
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > limit)
        .map(|(i, _)| i)
        .collect()
}
