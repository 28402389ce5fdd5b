use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::ShelfSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("focal lengths must be positive")]
    Focal,
    #[error("principal point ({0}, {1}) outside the {2}x{3} image")]
    PrincipalPoint(f64, f64, usize, usize),
    #[error("image must have at least one pixel")]
    EmptyImage,
    #[error("only a camera looking along -y is supported")]
    LookDirection,
    #[error("camera must sit in front of the shelf opening")]
    InsideShelf,
    #[error("shelf opening is not fully in view")]
    OpeningOutOfView,
}

/// Pinhole camera looking into the shelf along -y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub position: [f64; 3],
    pub look: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraSpec {
    /// Centered on the opening, one meter from the shelf center, 512x320.
    pub fn default_for(shelf: &ShelfSpec) -> Self {
        CameraSpec {
            position: [0.0, 1.0, shelf.height / 2.0],
            look: [0.0, -1.0, 0.0],
            fx: 450.0,
            fy: 450.0,
            cx: 256.0,
            cy: 160.0,
            width: 512,
            height: 320,
        }
    }

    pub fn validate(&self, shelf: &ShelfSpec) -> Result<(), CameraError> {
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::EmptyImage);
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CameraError::Focal);
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(CameraError::PrincipalPoint(self.cx, self.cy, self.width, self.height));
        }
        let [lx, ly, lz] = self.look;
        if lx.abs() > 1e-9 || lz.abs() > 1e-9 || (ly + 1.0).abs() > 1e-9 {
            return Err(CameraError::LookDirection);
        }
        if self.position[1] <= shelf.half_depth() {
            return Err(CameraError::InsideShelf);
        }
        let hw = shelf.half_width();
        for (x, z) in [(-hw, 0.0), (hw, 0.0), (-hw, shelf.height), (hw, shelf.height)] {
            let (u, v) = self.project([x, shelf.half_depth(), z]);
            if u < 0.0 || u > self.width as f64 || v < 0.0 || v > self.height as f64 {
                return Err(CameraError::OpeningOutOfView);
            }
        }
        Ok(())
    }

    /// Depth of a point: distance along the optical axis.
    pub fn depth_of(&self, p: [f64; 3]) -> f64 {
        self.position[1] - p[1]
    }

    /// Continuous image coordinates `(u, v)`; pixel `(c, r)` covers
    /// `[c, c+1) x [r, r+1)`.
    pub fn project(&self, p: [f64; 3]) -> (f64, f64) {
        let t = self.depth_of(p);
        let u = self.cx + self.fx * (p[0] - self.position[0]) / t;
        let v = self.cy - self.fy * (p[2] - self.position[2]) / t;
        (u, v)
    }

    /// Ray direction through the center of column `col`, x component (per
    /// unit depth).
    pub fn ray_dx(&self, col: usize) -> f64 {
        (col as f64 + 0.5 - self.cx) / self.fx
    }

    /// Ray direction through the center of row `row`, z component.
    pub fn ray_dz(&self, row: usize) -> f64 {
        -(row as f64 + 0.5 - self.cy) / self.fy
    }

    /// Shelf-frame point seen at pixel center `(col, row)` at depth `t`.
    pub fn unproject(&self, col: usize, row: usize, t: f64) -> [f64; 3] {
        [
            self.position[0] + t * self.ray_dx(col),
            self.position[1] - t,
            self.position[2] + t * self.ray_dz(row),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_camera_is_valid_and_centered() {
        let shelf = ShelfSpec::default();
        let cam = CameraSpec::default_for(&shelf);
        cam.validate(&shelf).unwrap();
        let (u, v) = cam.project([0.0, 0.0, shelf.height / 2.0]);
        assert_eq!((u, v), (256.0, 160.0));
        // back wall spans 0.8 m at 1.25 m depth -> 288 px
        let (l, _) = cam.project([-0.4, -0.25, 0.0]);
        let (r, _) = cam.project([0.4, -0.25, 0.0]);
        assert!((r - l - 288.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_cameras_rejected() {
        let shelf = ShelfSpec::default();
        let mut cam = CameraSpec::default_for(&shelf);
        cam.fx = 0.0;
        assert_eq!(cam.validate(&shelf), Err(CameraError::Focal));
        let mut cam = CameraSpec::default_for(&shelf);
        cam.cx = 600.0;
        assert!(matches!(cam.validate(&shelf), Err(CameraError::PrincipalPoint(..))));
        let mut cam = CameraSpec::default_for(&shelf);
        cam.position[1] = 0.1;
        assert_eq!(cam.validate(&shelf), Err(CameraError::InsideShelf));
        let mut cam = CameraSpec::default_for(&shelf);
        cam.fx = 900.0;
        assert_eq!(cam.validate(&shelf), Err(CameraError::OpeningOutOfView));
    }

    #[test]
    fn unproject_inverts_project() {
        let cam = CameraSpec::default_for(&ShelfSpec::default());
        let p = cam.unproject(100, 50, 1.1);
        let (u, v) = cam.project(p);
        assert!((u - 100.5).abs() < 1e-9 && (v - 50.5).abs() < 1e-9);
    }
}
