use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

/// Rotation blocks read from text are accepted this far from orthonormal and
/// then projected onto SO(3).
pub const POSE_TOLERANCE: f64 = 1e-3;

fn parse_values(tokens: &[&str], loc: &str) -> Result<[f64; 12]> {
    if tokens.len() != 12 {
        return Err(Error::parse(loc, format!("expected 12 values, found {}", tokens.len())));
    }
    let mut v = [0.0f64; 12];
    for (slot, t) in v.iter_mut().zip(tokens) {
        *slot = t
            .parse()
            .map_err(|_| Error::parse(loc, format!("non-numeric token `{t}`")))?;
        if !slot.is_finite() {
            return Err(Error::parse(loc, format!("non-finite value `{t}`")));
        }
    }
    Ok(v)
}

/// A single pose: twelve row-major values of `[R | t]`, any whitespace.
pub fn parse_pose(text: &str) -> Result<RigidTransform> {
    let tokens: Vec<&str> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .collect();
    RigidTransform::from_row_major(&parse_values(&tokens, "pose")?, POSE_TOLERANCE)
}

/// One pose per non-empty line.
pub fn parse_pose_list(text: &str) -> Result<Vec<RigidTransform>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let loc = format!("line {}", i + 1);
        out.push(RigidTransform::from_row_major(&parse_values(&tokens, &loc)?, POSE_TOLERANCE)?);
    }
    Ok(out)
}

pub fn format_pose(t: &RigidTransform) -> String {
    let mut s = String::new();
    for (i, v) in t.to_row_major().iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

pub fn read_pose(path: impl AsRef<Path>) -> Result<RigidTransform> {
    let path = path.as_ref();
    parse_pose(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn read_pose_list(path: impl AsRef<Path>) -> Result<Vec<RigidTransform>> {
    let path = path.as_ref();
    parse_pose_list(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_pose(path: impl AsRef<Path>, t: &RigidTransform) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_pose(t) + "\n").map_err(|e| Error::io(path, e))
}
