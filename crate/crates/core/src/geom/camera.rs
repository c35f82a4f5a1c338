//! Calibrated pinhole camera with world-to-camera extrinsics.
//!
//! Pixel convention: integer coordinates are texel centers, so the
//! projection of a point maps straight into [`crate::geom::Grid`] lookups
//! and rays through "pixel (i,j)" use exactly (i,j).

use crate::math::{self, Mat3, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PinholeCamera {
    pub id: usize,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation (row-major).
    pub rot: Mat3,
    /// World-to-camera translation: x_cam = R x_world + t.
    pub t: Vec3,
}

impl PinholeCamera {
    /// Camera placed at `position` looking at `target`, image +y down.
    pub fn look_at(
        id: usize,
        position: Vec3,
        target: Vec3,
        up_hint: Vec3,
        width: usize,
        height: usize,
        focal_px: f64,
    ) -> Self {
        let fwd = math::normalize(math::sub(target, position));
        // Guard a degenerate up hint (parallel to the view direction).
        let mut up = up_hint;
        if math::norm(math::cross(fwd, up)) < 1e-9 {
            up = if fwd[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] };
        }
        let right = math::normalize(math::cross(fwd, up));
        let down = math::cross(fwd, right); // +y in image space points down
        let rot: Mat3 = [right, down, fwd];
        let t = math::scale(math::mat_vec(&rot, position), -1.0);
        PinholeCamera {
            id,
            width,
            height,
            fx: focal_px,
            fy: focal_px,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            rot,
            t,
        }
    }

    #[inline]
    pub fn to_camera(&self, x: Vec3) -> Vec3 {
        math::add(math::mat_vec(&self.rot, x), self.t)
    }

    /// Camera-axis depth of a world point (may be negative behind the camera).
    #[inline]
    pub fn depth_of(&self, x: Vec3) -> f64 {
        math::dot(self.rot[2], x) + self.t[2]
    }

    /// Projects a world point; errors for points at or behind the camera
    /// plane (z <= 1e-6). Returns (pixel, camera-axis depth).
    #[inline]
    pub fn project(&self, x: Vec3) -> Result<([f64; 2], f64)> {
        let c = self.to_camera(x);
        if c[2] <= 1e-6 {
            return Err(Error::BehindCamera { z: c[2] });
        }
        let px = self.fx * c[0] / c[2] + self.cx;
        let py = self.fy * c[1] / c[2] + self.cy;
        Ok(([px, py], c[2]))
    }

    /// World point on the pixel ray at the given camera-axis depth.
    #[inline]
    pub fn unproject(&self, pixel: [f64; 2], depth: f64) -> Vec3 {
        let dir = [
            (pixel[0] - self.cx) / self.fx,
            (pixel[1] - self.cy) / self.fy,
            1.0,
        ];
        let cam = math::scale(dir, depth);
        math::mat_t_vec(&self.rot, math::sub(cam, self.t))
    }

    /// Camera center in world coordinates.
    #[inline]
    pub fn center(&self) -> Vec3 {
        math::scale(math::mat_t_vec(&self.rot, self.t), -1.0)
    }

    /// World-space ray through a pixel: (origin at camera center, unit direction).
    pub fn ray_through(&self, pixel: [f64; 2]) -> (Vec3, Vec3) {
        let o = self.center();
        let p = self.unproject(pixel, 1.0);
        (o, math::normalize(math::sub(p, o)))
    }

    /// Jacobian of the projected pixel w.r.t. the world point (2x3).
    pub fn project_jacobian(&self, x: Vec3) -> [[f64; 3]; 2] {
        let c = self.to_camera(x);
        let iz = 1.0 / c[2];
        let mut j = [[0.0; 3]; 2];
        for q in 0..3 {
            let dc = [self.rot[0][q], self.rot[1][q], self.rot[2][q]];
            j[0][q] = self.fx * (dc[0] * iz - c[0] * dc[2] * iz * iz);
            j[1][q] = self.fy * (dc[1] * iz - c[1] * dc[2] * iz * iz);
        }
        j
    }

    /// Is a pixel inside the image bounds [0, W-1] x [0, H-1]?
    #[inline]
    pub fn in_bounds(&self, pixel: [f64; 2]) -> bool {
        pixel[0] >= 0.0
            && pixel[0] <= (self.width - 1) as f64
            && pixel[1] >= 0.0
            && pixel[1] <= (self.height - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn test_cam() -> PinholeCamera {
        PinholeCamera::look_at(0, [0.0, 0.0, -1.0], [0.0, 0.0, 0.0], [0.0, -1.0, 0.0], 128, 128, 140.0)
    }

    #[test]
    fn center_point_projects_to_principal_point() {
        let cam = test_cam();
        let (px, depth) = cam.project([0.0, 0.0, 0.0]).unwrap();
        assert!((px[0] - cam.cx).abs() < 1e-12);
        assert!((px[1] - cam.cy).abs() < 1e-12);
        assert!((depth - 1.0).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let cam = test_cam();
        assert!(matches!(
            cam.project([0.0, 0.0, -2.0]),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn unproject_round_trips_project() {
        let cam = PinholeCamera::look_at(
            1,
            [0.7, -0.4, 0.9],
            [0.05, 0.02, -0.01],
            [0.0, 1.0, 0.0],
            256,
            192,
            300.0,
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10_000 {
            let x = [
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
            ];
            let Ok((px, depth)) = cam.project(x) else { continue };
            let back = cam.unproject(px, depth);
            let err = crate::math::norm(crate::math::sub(back, x));
            assert!(err < 1e-9, "round trip err {err} at {x:?}");
        }
    }

    #[test]
    fn ray_through_pixel_passes_through_unprojection() {
        let cam = test_cam();
        let (o, d) = cam.ray_through([40.0, 90.0]);
        let p = cam.unproject([40.0, 90.0], 0.7);
        // p - o should be parallel to d
        let v = crate::math::sub(p, o);
        let c = crate::math::cross(v, d);
        assert!(crate::math::norm(c) < 1e-9);
    }

    #[test]
    fn projection_jacobian_matches_finite_differences() {
        let cam = test_cam();
        let x = [0.05, -0.08, 0.1];
        let j = cam.project_jacobian(x);
        let h = 1e-7;
        for q in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[q] += h;
            xm[q] -= h;
            let (pp, _) = cam.project(xp).unwrap();
            let (pm, _) = cam.project(xm).unwrap();
            for r in 0..2 {
                let fd = (pp[r] - pm[r]) / (2.0 * h);
                assert!((fd - j[r][q]).abs() < 1e-5, "J[{r}][{q}] fd {fd} vs {}", j[r][q]);
            }
        }
    }
}
