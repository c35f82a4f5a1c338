//! Grayscale PFM depth maps.
//!
//! "Pf" header, width/height line, then a scale whose sign encodes byte
//! order (negative = little-endian, which is what we write). Scanlines are
//! stored bottom-to-top per the PFM convention.

use crate::geom::DepthMap;
use crate::{Error, Result};
use byteorder::{BigEndian, ByteOrder, LittleEndian};
use std::io::Read;
use std::path::Path;

pub fn write_pfm(path: &Path, map: &DepthMap) -> Result<()> {
    assert_eq!(map.channels(), 1, "pfm writer handles grayscale maps");
    let (w, h) = (map.width(), map.height());
    let mut bytes = Vec::with_capacity(32 + w * h * 4);
    bytes.extend_from_slice(format!("Pf\n{} {}\n-1.0\n", w, h).as_bytes());
    let mut row = vec![0u8; w * 4];
    for y in (0..h).rev() {
        let src = &map.data()[y * w..(y + 1) * w];
        LittleEndian::write_f32_into(src, &mut row);
        bytes.extend_from_slice(&row);
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let fmt = |msg: String| Error::format("pfm", path, msg);
    let mut cursor = std::io::Cursor::new(&bytes);
    let mut header = Vec::new();
    // Three whitespace-terminated tokens after the type line: w, h, scale.
    let mut tokens = Vec::new();
    let mut tok = Vec::new();
    while tokens.len() < 4 {
        let mut b = [0u8; 1];
        cursor.read_exact(&mut b).map_err(|_| fmt("truncated header".into()))?;
        if b[0].is_ascii_whitespace() {
            if !tok.is_empty() {
                tokens.push(String::from_utf8_lossy(&tok).into_owned());
                tok.clear();
            }
        } else {
            tok.push(b[0]);
        }
    }
    header.extend_from_slice(&bytes[..cursor.position() as usize]);
    if tokens[0] != "Pf" {
        return Err(fmt(format!("expected grayscale 'Pf', got '{}'", tokens[0])));
    }
    let w: usize = tokens[1].parse().map_err(|_| fmt("bad width".into()))?;
    let h: usize = tokens[2].parse().map_err(|_| fmt("bad height".into()))?;
    let scale: f64 = tokens[3].parse().map_err(|_| fmt("bad scale".into()))?;
    let little = scale < 0.0;
    let payload = &bytes[cursor.position() as usize..];
    if payload.len() < w * h * 4 {
        return Err(fmt(format!("truncated payload: {} < {}", payload.len(), w * h * 4)));
    }
    let mut data = vec![0.0f32; w * h];
    let mut row = vec![0.0f32; w];
    for y in 0..h {
        let src = &payload[y * w * 4..(y + 1) * w * 4];
        if little {
            LittleEndian::read_f32_into(src, &mut row);
        } else {
            BigEndian::read_f32_into(src, &mut row);
        }
        // PFM rows are bottom-to-top.
        data[(h - 1 - y) * w..(h - y) * w].copy_from_slice(&row);
    }
    Ok(DepthMap::from_data(w, h, 1, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Grid;

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        let mut map = Grid::new(6, 4, 1);
        for (i, v) in map.data_mut().iter_mut().enumerate() {
            *v = (i as f32).sqrt() * 0.77;
        }
        write_pfm(&path, &map).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!((back.width(), back.height()), (6, 4));
        for (a, b) in map.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_color_pfm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pfm");
        std::fs::write(&path, b"PF\n2 2\n-1.0\n0000000000000000").unwrap();
        assert!(matches!(read_pfm(&path), Err(Error::Format { .. })));
    }
}
