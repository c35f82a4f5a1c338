//! Middlebury .flo optical-flow files.
//!
//! Layout: f32 magic 202021.25 (little-endian), i32 width, i32 height,
//! then height*width interleaved (u,v) f32 pairs in row-major order.

use crate::geom::FlowMap;
use crate::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{BufReader, BufWriter};
use std::path::Path;

const MAGIC: f32 = 202021.25;

pub fn write_flo(path: &Path, flow: &FlowMap) -> Result<()> {
    assert_eq!(flow.channels(), 2, "flow maps have two channels");
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_f32::<LittleEndian>(MAGIC).map_err(io_err)?;
    w.write_i32::<LittleEndian>(flow.width() as i32).map_err(io_err)?;
    w.write_i32::<LittleEndian>(flow.height() as i32).map_err(io_err)?;
    for v in flow.data() {
        w.write_f32::<LittleEndian>(*v).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_flo(path: &Path) -> Result<FlowMap> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let fmt = |msg: String| Error::format("flo", path, msg);
    let magic = r
        .read_f32::<LittleEndian>()
        .map_err(|_| fmt("truncated header".into()))?;
    if magic.to_bits() != MAGIC.to_bits() {
        return Err(fmt(format!("bad magic {magic}")));
    }
    let width = r.read_i32::<LittleEndian>().map_err(|_| fmt("truncated width".into()))?;
    let height = r.read_i32::<LittleEndian>().map_err(|_| fmt("truncated height".into()))?;
    if width <= 0 || height <= 0 || width > 1 << 16 || height > 1 << 16 {
        return Err(fmt(format!("implausible dimensions {width}x{height}")));
    }
    let n = width as usize * height as usize * 2;
    let mut data = vec![0.0f32; n];
    r.read_f32_into::<LittleEndian>(&mut data)
        .map_err(|_| fmt(format!("truncated payload, wanted {n} floats")))?;
    Ok(FlowMap::from_data(width as usize, height as usize, 2, data))
}
