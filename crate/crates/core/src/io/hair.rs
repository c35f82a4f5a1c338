//! Plain-text strand files.
//!
//! Line 1: `HAIRTXT 1`. Line 2: strand count. Per strand: a node-count
//! line followed by that many `x y z` lines (meters). Floats are written
//! with Rust's shortest round-trip formatting, so read(write(s)) is exact.

use crate::geom::StrandSet;
use crate::math::Vec3;
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

pub fn write_strands(path: &Path, strands: &StrandSet) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "HAIRTXT 1");
    let _ = writeln!(out, "{}", strands.num_strands());
    for s in strands.iter_strands() {
        let _ = writeln!(out, "{}", s.len());
        for n in s {
            let _ = writeln!(out, "{} {} {}", n[0], n[1], n[2]);
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_strands(path: &Path) -> Result<StrandSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fmt = |msg: String| Error::format("hair", path, msg);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| fmt("empty file".into()))?;
    if header.trim() != "HAIRTXT 1" {
        return Err(fmt(format!("bad header '{header}'")));
    }
    let count: usize = lines
        .next()
        .ok_or_else(|| fmt("missing strand count".into()))?
        .trim()
        .parse()
        .map_err(|_| fmt("bad strand count".into()))?;
    let mut strands: Vec<Vec<Vec3>> = Vec::with_capacity(count);
    for si in 0..count {
        let n: usize = lines
            .next()
            .ok_or_else(|| fmt(format!("missing node count for strand {si}")))?
            .trim()
            .parse()
            .map_err(|_| fmt(format!("bad node count for strand {si}")))?;
        let mut nodes = Vec::with_capacity(n);
        for ni in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| fmt(format!("missing node {ni} of strand {si}")))?;
            let mut it = line.split_whitespace();
            let mut p = [0.0f64; 3];
            for v in &mut p {
                *v = it
                    .next()
                    .ok_or_else(|| fmt(format!("short node line '{line}'")))?
                    .parse()
                    .map_err(|_| fmt(format!("bad float in '{line}'")))?;
            }
            nodes.push(p);
        }
        strands.push(nodes);
    }
    if strands.is_empty() {
        return Err(fmt("no strands".into()));
    }
    let npr = strands[0].len();
    if !strands.iter().all(|s| s.len() == npr) {
        return Err(fmt("strands have differing node counts".into()));
    }
    Ok(StrandSet::from_strands(&strands))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.hair");
        let strands = StrandSet::from_strands(&[
            vec![[0.1234567891234, -0.5, 0.25], [1e-9, 2.0, -3.5]],
            vec![[0.0, 0.0, 0.0], [std::f64::consts::PI, 1.0 / 3.0, -1e-12]],
        ]);
        write_strands(&path, &strands).unwrap();
        let back = read_strands(&path).unwrap();
        assert_eq!(back.num_strands(), 2);
        assert_eq!(back.nodes_per_strand(), 2);
        for (a, b) in strands.nodes().iter().zip(back.nodes()) {
            for q in 0..3 {
                assert_eq!(a[q].to_bits(), b[q].to_bits());
            }
        }
    }

    #[test]
    fn bad_header_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.hair");
        std::fs::write(&path, "HAIRBIN 2\n1\n").unwrap();
        assert!(matches!(read_strands(&path), Err(Error::Format { .. })));
    }
}
