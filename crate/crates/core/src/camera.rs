//! Planar similarity-transform cameras.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maps world points to pixels by translating by `-center`, rotating by
/// `-rotation`, scaling by `zoom` and offsetting to the image center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub center: [f64; 2],
    pub rotation: f64,
    pub zoom: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.zoom.is_finite() && self.zoom > 0.0) {
            return Err(Error::InvalidCamera(format!("zoom {} must be > 0", self.zoom)));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::InvalidCamera(format!(
                "resolution {}x{} must be at least 1x1",
                self.width, self.height
            )));
        }
        if !(self.center.iter().all(|v| v.is_finite()) && self.rotation.is_finite()) {
            return Err(Error::InvalidCamera("non-finite pose".into()));
        }
        Ok(())
    }

    /// World position of the center of pixel (col, row), i.e. (col+0.5, row+0.5).
    pub fn pixel_to_world(&self, col: usize, row: usize) -> [f64; 2] {
        self.image_to_world([col as f64 + 0.5, row as f64 + 0.5])
    }

    pub fn image_to_world(&self, p: [f64; 2]) -> [f64; 2] {
        let u = (p[0] - 0.5 * self.width as f64) / self.zoom;
        let v = (p[1] - 0.5 * self.height as f64) / self.zoom;
        let (sn, cs) = self.rotation.sin_cos();
        [
            self.center[0] + cs * u - sn * v,
            self.center[1] + sn * u + cs * v,
        ]
    }

    pub fn world_to_image(&self, x: [f64; 2]) -> [f64; 2] {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        let (sn, cs) = self.rotation.sin_cos();
        let u = cs * dx + sn * dy;
        let v = -sn * dx + cs * dy;
        [
            u * self.zoom + 0.5 * self.width as f64,
            v * self.zoom + 0.5 * self.height as f64,
        ]
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cam = Camera {
            center: [0.3, -0.2],
            rotation: 0.7,
            zoom: 12.5,
            width: 20,
            height: 14,
        };
        let w = cam.pixel_to_world(3, 9);
        let p = cam.world_to_image(w);
        assert!((p[0] - 3.5).abs() < 1e-12 && (p[1] - 9.5).abs() < 1e-12);
    }

    #[test]
    fn image_center_maps_to_camera_center() {
        let cam = Camera {
            center: [1.0, 2.0],
            rotation: 1.1,
            zoom: 4.0,
            width: 2,
            height: 2,
        };
        assert_eq!(cam.image_to_world([1.0, 1.0]), [1.0, 2.0]);
    }

    #[test]
    fn rejects_invalid() {
        let mut cam = Camera {
            center: [0.0, 0.0],
            rotation: 0.0,
            zoom: 1.0,
            width: 1,
            height: 1,
        };
        assert!(cam.validate().is_ok());
        cam.zoom = 0.0;
        assert!(cam.validate().is_err());
        cam.zoom = 1.0;
        cam.width = 0;
        assert!(cam.validate().is_err());
    }
}
