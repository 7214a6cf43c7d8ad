//! ASCII PLY point clouds, vertices only.

use std::fmt::Write as _;
use std::path::Path;

use endorecon_core::geometry::{Point3, PointCloud};

use crate::error::{fsx, Error, Result};

pub const SIGNIFICANT_DIGITS: usize = 9;

/// C's `%.{digits}g`: shortest of fixed or exponent notation, trailing zeros
/// removed.
pub fn format_g(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", strip_zeros(mantissa), sign, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn to_string(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(64 + cloud.len() * 36);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    for p in &cloud.points {
        let _ = writeln!(
            out,
            "{} {} {}",
            format_g(p.x, SIGNIFICANT_DIGITS),
            format_g(p.y, SIGNIFICANT_DIGITS),
            format_g(p.z, SIGNIFICANT_DIGITS)
        );
    }
    out
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    fsx::write(path, to_string(cloud))
}

/// Reads files produced by [`write_ply`] (ASCII, `x y z` first on each line;
/// other vertex properties are ignored).
pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let text = fsx::read_to_string(path)?;
    let bad = |m: &str| Error::Input(format!("{}: {m}", path.display()));
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(bad("missing 'ply' magic line"));
    }
    let mut count = None;
    for line in lines.by_ref() {
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        if line.starts_with("format") && line != "format ascii 1.0" {
            return Err(bad("only 'format ascii 1.0' is supported"));
        }
        if let Some(n) = line.strip_prefix("element vertex ") {
            count = Some(n.trim().parse::<usize>().map_err(|_| bad("bad vertex count"))?);
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element"))?;
    let mut points = Vec::with_capacity(count);
    for line in lines.take(count) {
        let mut it = line.split_ascii_whitespace().map(str::parse::<f64>);
        let mut next = || it.next().and_then(|r| r.ok()).ok_or_else(|| bad("bad vertex line"));
        points.push(Point3::new(next()?, next()?, next()?));
    }
    if points.len() != count {
        return Err(bad("fewer vertices than declared"));
    }
    Ok(PointCloud::new(points))
}
