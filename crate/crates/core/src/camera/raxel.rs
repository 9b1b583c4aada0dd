//! Per-pixel ray offsets stored on a coarse control grid and read back with
//! bilinear interpolation.

use crate::error::{Error, Result};
use crate::math::V3;

#[derive(Clone, Debug, PartialEq)]
pub struct RaxelGrids {
    pub width: usize,
    pub height: usize,
    /// Direction offsets, row-major (`y * width + x`).
    pub dir: Vec<V3>,
    /// Origin offsets in world units, same layout as `dir`.
    pub origin: Vec<V3>,
}

/// The four control nodes around a pixel and their bilinear weights, ordered
/// `(x0,y0), (x1,y0), (x0,y1), (x1,y1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaxelStencil {
    pub nodes: [usize; 4],
    pub weights: [f64; 4],
}

impl RaxelGrids {
    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::Invalid(format!(
                "raxel grid must be at least 2x2, got {width}x{height}"
            )));
        }
        let n = width * height;
        Ok(RaxelGrids {
            width,
            height,
            dir: vec![[0.0; 3]; n],
            origin: vec![[0.0; 3]; n],
        })
    }

    /// Default control grid for an image: one node per 8 pixels, at least 2×2.
    pub fn default_for_image(image_width: usize, image_height: usize) -> Self {
        let w = image_width.div_ceil(8).max(2);
        let h = image_height.div_ceil(8).max(2);
        Self::zeros(w, h).expect("dimensions are at least 2")
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_zero(&self) -> bool {
        self.dir.iter().chain(self.origin.iter()).all(|v| *v == [0.0; 3])
    }

    /// Maps pixel `p` of a `image_width × image_height` image affinely onto the
    /// grid (image corners land on grid corners).
    pub fn stencil(&self, image_width: usize, image_height: usize, p: [f64; 2]) -> Result<RaxelStencil> {
        let (w, h) = (image_width as f64, image_height as f64);
        if !(p[0] >= 0.0 && p[0] <= w && p[1] >= 0.0 && p[1] <= h) {
            return Err(Error::OutOfBounds {
                x: p[0],
                y: p[1],
                width: image_width,
                height: image_height,
            });
        }
        let gx = p[0] / w * (self.width - 1) as f64;
        let gy = p[1] / h * (self.height - 1) as f64;
        let x0 = (gx.floor() as usize).min(self.width - 2);
        let y0 = (gy.floor() as usize).min(self.height - 2);
        let fx = gx - x0 as f64;
        let fy = gy - y0 as f64;
        let row0 = y0 * self.width;
        let row1 = row0 + self.width;
        Ok(RaxelStencil {
            nodes: [row0 + x0, row0 + x0 + 1, row1 + x0, row1 + x0 + 1],
            weights: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
        })
    }

    /// Interpolated `(direction offset, origin offset)` at pixel `p`.
    pub fn offset(&self, image_width: usize, image_height: usize, p: [f64; 2]) -> Result<(V3, V3)> {
        let s = self.stencil(image_width, image_height, p)?;
        let mut d = [0.0; 3];
        let mut o = [0.0; 3];
        for (&n, &w) in s.nodes.iter().zip(s.weights.iter()) {
            for k in 0..3 {
                d[k] += w * self.dir[n][k];
                o[k] += w * self.origin[n][k];
            }
        }
        Ok((d, o))
    }
}
