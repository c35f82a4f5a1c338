//! Dense per-pixel maps (images, depth, flow) with bilinear lookup.
//!
//! Storage is row-major f32 with interleaved channels. Integer pixel
//! coordinates address texel centers exactly, matching the camera
//! projection convention.

/// A W x H map with `ch` interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

/// RGB image in [0,255].
pub type Image = Grid;
/// Camera-axis depth in meters; 0 marks "no surface".
pub type DepthMap = Grid;
/// Per-pixel 2D flow in pixels.
pub type FlowMap = Grid;

impl Grid {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Grid { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height * channels);
        Grid { width, height, channels, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c] as f64
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v as f32;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let base = (y * self.width + x) * self.channels;
        &self.data[base..base + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let base = (y * self.width + x) * self.channels;
        &mut self.data[base..base + self.channels]
    }

    #[inline]
    pub fn in_bounds(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && x <= (self.width - 1) as f64 && y >= 0.0 && y <= (self.height - 1) as f64
    }

    /// Bilinear lookup of all channels into `out`. Returns false (leaving
    /// `out` untouched) when the position is outside [0,W-1] x [0,H-1].
    pub fn bilinear_into(&self, x: f64, y: f64, out: &mut [f64]) -> bool {
        if !self.in_bounds(x, y) {
            return false;
        }
        debug_assert_eq!(out.len(), self.channels);
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let (x0, y0) = (x0.min(self.width - 1), y0.min(self.height - 1));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p00 = self.pixel(x0, y0);
        let p10 = self.pixel(x1, y0);
        let p01 = self.pixel(x0, y1);
        let p11 = self.pixel(x1, y1);
        for c in 0..self.channels {
            let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
            let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
            out[c] = top * (1.0 - fy) + bot * fy;
        }
        true
    }

    /// Bilinear lookup of a single channel; None when out of bounds.
    pub fn bilinear_ch(&self, x: f64, y: f64, c: usize) -> Option<f64> {
        if !self.in_bounds(x, y) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2)).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2)).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.at(x0, y0, c) * (1.0 - fx) + self.at(x1, y0, c) * fx;
        let bot = self.at(x0, y1, c) * (1.0 - fx) + self.at(x1, y1, c) * fx;
        Some(top * (1.0 - fy) + bot * fy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_pixel_returns_exact_texel() {
        let mut g = Grid::new(4, 3, 2);
        g.set(2, 1, 0, 5.0);
        g.set(2, 1, 1, -3.0);
        let mut out = [0.0; 2];
        assert!(g.bilinear_into(2.0, 1.0, &mut out));
        assert_eq!(out, [5.0, -3.0]);
    }

    #[test]
    fn midpoint_is_mean_of_neighbors() {
        let mut g = Grid::new(2, 1, 1);
        g.set(0, 0, 0, 1.0);
        g.set(1, 0, 0, 3.0);
        assert_eq!(g.bilinear_ch(0.5, 0.0, 0), Some(2.0));
    }

    #[test]
    fn out_of_bounds_is_none() {
        let g = Grid::new(4, 4, 1);
        assert_eq!(g.bilinear_ch(-0.01, 0.0, 0), None);
        assert_eq!(g.bilinear_ch(3.01, 0.0, 0), None);
        assert_eq!(g.bilinear_ch(0.0, 3.0001, 0), None);
        assert!(g.bilinear_ch(3.0, 3.0, 0).is_some());
    }

    #[test]
    fn bilinear_interpolates_in_both_axes() {
        let mut g = Grid::new(2, 2, 1);
        g.set(0, 0, 0, 0.0);
        g.set(1, 0, 0, 1.0);
        g.set(0, 1, 0, 2.0);
        g.set(1, 1, 0, 3.0);
        assert!((g.bilinear_ch(0.5, 0.5, 0).unwrap() - 1.5).abs() < 1e-12);
        assert!((g.bilinear_ch(0.25, 0.75, 0).unwrap() - (0.25 + 2.0 * 0.75)).abs() < 1e-12);
    }
}
