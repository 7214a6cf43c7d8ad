//! Small descriptive statistics over `f64` samples.
//!
//! Percentiles use linear interpolation between order statistics (rank
//! `p * (n - 1)`), the same convention as NumPy's default. Standard deviation
//! is the population estimator (divide by `n`).

use alloc::vec::Vec;

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn population_std(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    Some(libm::sqrt(var))
}

pub fn max(values: &[f64]) -> Option<f64> {
    values.iter().copied().reduce(f64::max)
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// `p` in `[0, 100]`.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(percentile_sorted(&sorted(values), p))
}

pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = libm::floor(rank) as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Option<f64> {
    percentile(values, 50.0)
}

/// Median absolute deviation scaled by 1.4826 so it estimates sigma for
/// normally distributed samples.
pub fn scaled_mad(values: &[f64]) -> Option<f64> {
    let med = median(values)?;
    let dev: Vec<f64> = values.iter().map(|v| libm::fabs(v - med)).collect();
    median(&dev).map(|m| 1.4826 * m)
}
