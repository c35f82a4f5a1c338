//! 8-bit RGB PNG in/out for [`Image`] grids (values in [0,255]).

use crate::geom::Image;
use crate::{Error, Result};
use std::path::Path;

pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    assert_eq!(img.channels(), 3, "png writer expects RGB");
    let (w, h) = (img.width(), img.height());
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let p = img.pixel(x, y);
            buf.put_pixel(
                x as u32,
                y as u32,
                image::Rgb([quantize(p[0]), quantize(p[1]), quantize(p[2])]),
            );
        }
    }
    buf.save(path)
        .map_err(|e| Error::format("png", path, e.to_string()))
}

pub fn read_png(path: &Path) -> Result<Image> {
    let img = image::open(path)
        .map_err(|e| Error::format("png", path, e.to_string()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Image::new(w, h, 3);
    for y in 0..h {
        for x in 0..w {
            let p = img.get_pixel(x as u32, y as u32);
            for c in 0..3 {
                out.set(x, y, c, p.0[c] as f64);
            }
        }
    }
    Ok(out)
}

#[inline]
fn quantize(v: f32) -> u8 {
    (v.round().clamp(0.0, 255.0)) as u8
}
