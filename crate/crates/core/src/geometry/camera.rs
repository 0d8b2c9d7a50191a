use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Bvh, TriMesh};

/// Pinhole camera. Pixel `(row, col)` is sampled through its center; row 0
/// is the top of the image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: DVec3,
    pub target: DVec3,
    pub up: DVec3,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub rows: u32,
    pub cols: u32,
}

impl Camera {
    pub fn look_at(position: DVec3, target: DVec3, up: DVec3, fov_y: f64, rows: u32, cols: u32) -> Result<Camera> {
        let cam = Camera {
            position,
            target,
            up,
            fov_y,
            rows,
            cols,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::InvalidArgument(format!("fov_y {} outside (0, pi)", self.fov_y)));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidArgument("camera resolution must be nonzero".into()));
        }
        let fwd = self.target - self.position;
        if fwd.length() == 0.0 || fwd.normalize().cross(self.up.normalize_or_zero()).length() < 1e-9 {
            return Err(Error::InvalidArgument(
                "view direction and up vector are parallel".into(),
            ));
        }
        Ok(())
    }

    /// Orthonormal (right, up, forward) basis.
    pub fn basis(&self) -> (DVec3, DVec3, DVec3) {
        let fwd = (self.target - self.position).normalize();
        let right = fwd.cross(self.up).normalize();
        let up = right.cross(fwd);
        (right, up, fwd)
    }

    /// Unit-length primary ray through the center of pixel `(row, col)`.
    pub fn ray(&self, row: u32, col: u32) -> (DVec3, DVec3) {
        let (right, up, fwd) = self.basis();
        let h = (0.5 * self.fov_y).tan();
        let aspect = self.cols as f64 / self.rows as f64;
        let x = ((col as f64 + 0.5) / self.cols as f64 * 2.0 - 1.0) * h * aspect;
        let y = (1.0 - (row as f64 + 0.5) / self.rows as f64 * 2.0) * h;
        (self.position, (fwd + x * right + y * up).normalize())
    }

    /// Continuous pixel coordinates `(row, col)` of a point in front of the
    /// camera, plus its distance from the camera center.
    pub fn project(&self, p: DVec3) -> Option<(f64, f64, f64)> {
        let (right, up, fwd) = self.basis();
        let d = p - self.position;
        let z = d.dot(fwd);
        if z <= 0.0 {
            return None;
        }
        let h = (0.5 * self.fov_y).tan();
        let aspect = self.cols as f64 / self.rows as f64;
        let x = d.dot(right) / z / (h * aspect);
        let y = d.dot(up) / z / h;
        let col = (x + 1.0) * 0.5 * self.cols as f64;
        let row = (1.0 - y) * 0.5 * self.rows as f64;
        Some((row, col, d.length()))
    }
}

/// Six cameras on a ring around the origin: azimuths 30°, 90°, ..., 330°
/// with elevations alternating ±atan(1/2) (the latitude of an
/// icosahedron's vertex rings), looking at the origin from distance 3.5.
pub fn default_rig(rows: u32, cols: u32) -> Vec<Camera> {
    let elevation = 0.5f64.atan();
    (0..6)
        .map(|k| {
            let az = (30.0 + 60.0 * k as f64).to_radians();
            let el = if k % 2 == 0 { elevation } else { -elevation };
            let dir = DVec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            Camera {
                position: 3.5 * dir,
                target: DVec3::ZERO,
                up: DVec3::Z,
                fov_y: 50f64.to_radians(),
                rows,
                cols,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelHit {
    /// Distance from the camera center along the unit primary ray.
    pub depth: f64,
    pub face: u32,
    pub barycentric: [f64; 3],
}

/// Per-pixel primary-ray hits; `None` where the ray misses.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthIdImage {
    pub rows: u32,
    pub cols: u32,
    pub pixels: Vec<Option<PixelHit>>,
}

impl DepthIdImage {
    pub fn get(&self, row: u32, col: u32) -> Option<&PixelHit> {
        self.pixels[(row * self.cols + col) as usize].as_ref()
    }

    pub fn hit_count(&self) -> usize {
        self.pixels.iter().filter(|p| p.is_some()).count()
    }

    /// World-space points of all hit pixels as `(pixel index, point)`.
    pub fn unproject(&self, camera: &Camera) -> Vec<(usize, DVec3)> {
        let mut out = Vec::with_capacity(self.hit_count());
        for row in 0..self.rows {
            for col in 0..self.cols {
                if let Some(hit) = self.get(row, col) {
                    let (o, d) = camera.ray(row, col);
                    out.push(((row * self.cols + col) as usize, o + hit.depth * d));
                }
            }
        }
        out
    }
}

pub fn render_depth_ids(mesh: &TriMesh, camera: &Camera) -> Result<DepthIdImage> {
    camera.validate()?;
    Ok(render_with_bvh(&Bvh::build(mesh), camera))
}

pub(crate) fn render_with_bvh(bvh: &Bvh, camera: &Camera) -> DepthIdImage {
    let mut pixels = Vec::with_capacity((camera.rows * camera.cols) as usize);
    for row in 0..camera.rows {
        for col in 0..camera.cols {
            let (o, d) = camera.ray(row, col);
            pixels.push(bvh.ray_cast(o, d).map(|h| PixelHit {
                depth: h.t,
                face: h.face,
                barycentric: h.barycentric,
            }));
        }
    }
    DepthIdImage {
        rows: camera.rows,
        cols: camera.cols,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_quad() -> TriMesh {
        TriMesh::new(
            vec![
                DVec3::new(-0.5, -0.5, 0.0),
                DVec3::new(0.5, -0.5, 0.0),
                DVec3::new(0.5, 0.5, 0.0),
                DVec3::new(-0.5, 0.5, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn center_pixel_sees_quad_at_depth_3() {
        // Odd resolution so one pixel center lies exactly on the axis.
        let cam = Camera::look_at(DVec3::new(0.0, 0.0, 3.0), DVec3::ZERO, DVec3::Y, 0.8, 33, 33).unwrap();
        let img = render_depth_ids(&unit_quad(), &cam).unwrap();
        let hit = img.get(16, 16).unwrap();
        assert!((hit.depth - 3.0).abs() < 1e-12);
        assert!(img.get(0, 0).is_none(), "corner pixels look past the quad");
        assert!(img.hit_count() > 0 && img.hit_count() < 33 * 33);
    }

    #[test]
    fn project_inverts_ray() {
        let cam = &default_rig(40, 60)[1];
        let (o, d) = cam.ray(7, 45);
        let (r, c, dist) = cam.project(o + 2.0 * d).unwrap();
        assert!((r - 7.5).abs() < 1e-9 && (c - 45.5).abs() < 1e-9);
        assert!((dist - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_cameras() {
        assert!(Camera::look_at(DVec3::Z, DVec3::ZERO, DVec3::Z, 0.5, 4, 4).is_err());
        assert!(Camera::look_at(DVec3::Z, DVec3::ZERO, DVec3::Y, 3.5, 4, 4).is_err());
        for cam in default_rig(8, 8) {
            cam.validate().unwrap();
        }
    }
}
