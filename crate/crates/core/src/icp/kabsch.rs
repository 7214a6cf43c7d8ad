//! Closed-form rigid fit between paired point sets.

use nalgebra::{Matrix3, SVD};

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};

/// Singular-value ratio below which the cross-covariance counts as rank <= 1.
const RANK_TOLERANCE: f64 = 1e-10;

/// Least-squares rigid transform taking `source[i]` onto `target[i]`.
///
/// `H = sum (b_i - mean_b)(a_i - mean_a)^T`, `U S V^T = SVD(H)`,
/// `R = V U^T`, `t = mean_a - R mean_b`. When `det(V U^T) < 0` the column of
/// `V` paired with the smallest singular value is negated so `R` is a proper
/// rotation.
pub fn svd_rigid_step(source: &[Point3], target: &[Point3]) -> Result<RigidTransform> {
    assert_eq!(source.len(), target.len(), "paired point sets");
    let n = source.len();
    if n < 3 {
        return Err(Error::InsufficientCorrespondences { count: n });
    }
    let inv_n = 1.0 / n as f64;
    let mean_b = source.iter().fold(Point3::zeros(), |acc, p| acc + p) * inv_n;
    let mean_a = target.iter().fold(Point3::zeros(), |acc, p| acc + p) * inv_n;

    let mut h = Matrix3::zeros();
    for (b, a) in source.iter().zip(target) {
        h += (b - mean_b) * (a - mean_a).transpose();
    }

    let svd = SVD::new(h, true, true);
    let s = svd.singular_values;
    if !(s[0] > 0.0) || s[1] <= RANK_TOLERANCE * s[0] {
        return Err(Error::RankDeficient);
    }
    let u = svd.u.expect("u requested");
    let mut v = svd.v_t.expect("v_t requested").transpose();
    let mut r = v * u.transpose();
    if r.determinant() < 0.0 {
        // singular values are sorted descending
        v.column_mut(2).neg_mut();
        r = v * u.transpose();
    }
    let t = mean_a - r * mean_b;
    RigidTransform::new(r, t)
}
