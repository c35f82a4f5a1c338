//! Oriented point cloud text files: a count line, then one
//! `x y z dx dy dz` line per point.

use crate::geom::{OrientedPoint, OrientedPointCloud};
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

pub fn write_opc(path: &Path, cloud: &OrientedPointCloud) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{}", cloud.points.len());
    for p in &cloud.points {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            p.pos[0], p.pos[1], p.pos[2], p.dir[0], p.dir[1], p.dir[2]
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_opc(path: &Path) -> Result<OrientedPointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fmt = |msg: String| Error::format("opc", path, msg);
    let mut lines = text.lines();
    let count: usize = lines
        .next()
        .ok_or_else(|| fmt("empty file".into()))?
        .trim()
        .parse()
        .map_err(|_| fmt("bad count".into()))?;
    let mut points = Vec::with_capacity(count);
    for i in 0..count {
        let line = lines.next().ok_or_else(|| fmt(format!("missing point {i}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| fmt(format!("bad float in '{line}'")))?;
        if vals.len() != 6 {
            return Err(fmt(format!("expected 6 values, got {} in '{line}'", vals.len())));
        }
        points.push(OrientedPoint {
            pos: [vals[0], vals[1], vals[2]],
            dir: [vals[3], vals[4], vals[5]],
        });
    }
    Ok(OrientedPointCloud::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.opc");
        let cloud = OrientedPointCloud::new(vec![
            OrientedPoint { pos: [0.1, 0.2, 0.3], dir: [1.0, 0.0, 0.0] },
            OrientedPoint { pos: [-1e-7, 2.5, 0.0], dir: [0.0, -1.0, 0.0] },
        ]);
        write_opc(&path, &cloud).unwrap();
        let back = read_opc(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in cloud.points.iter().zip(&back.points) {
            assert_eq!(a.pos, b.pos);
            assert_eq!(a.dir, b.dir);
        }
    }
}
