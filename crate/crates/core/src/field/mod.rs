//! Dense voxel radiance field with trilinear lookup.
//!
//! Each voxel stores four unconstrained values: a density pre-activation `s`
//! (density is `softplus(s)`) and three color logits (color is their
//! sigmoid). Values are interpolated first and activated afterwards, so the
//! density is non-negative and the color lies in `[0, 1]³` everywhere.
//! Voxel values sit at voxel centers; queries outside the bounds return zero
//! density and black.

mod io;
mod render;

pub use io::{read_field, write_field, decode_field, encode_field};
pub use render::{
    photometric_loss, render_image, render_ray, PhotometricLoss, PixelSample, RaySamples, RenderOutput,
    SamplingSpec,
};

use crate::error::{Error, Result};
use crate::math::V3;

pub const CHANNELS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Aabb {
    pub min: V3,
    pub max: V3,
}

impl Aabb {
    pub fn cube(half: f64) -> Self {
        Aabb {
            min: [-half; 3],
            max: [half; 3],
        }
    }

    pub fn contains(&self, x: V3) -> bool {
        (0..3).all(|k| x[k] >= self.min[k] && x[k] <= self.max[k])
    }

    pub fn center(&self) -> V3 {
        std::array::from_fn(|k| 0.5 * (self.min[k] + self.max[k]))
    }

    pub fn extent(&self) -> V3 {
        std::array::from_fn(|k| self.max[k] - self.min[k])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadianceField {
    pub dims: [usize; 3],
    pub bounds: Aabb,
    /// `CHANNELS` values per voxel, x fastest then y then z.
    pub data: Vec<f64>,
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for positive arguments.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub fn logit(y: f64) -> f64 {
    (y / (1.0 - y)).ln()
}

/// The eight voxels around a point with their trilinear weights.
#[derive(Clone, Copy, Debug)]
pub struct Cell {
    pub base: [usize; 3],
    pub frac: [f64; 3],
    /// `d frac / d x` per axis; zero where the coordinate is clamped.
    pub dfrac: [f64; 3],
}

impl Cell {
    /// Corner `k` is offset by bit 0 in x, bit 1 in y, bit 2 in z.
    #[inline]
    pub fn corners(&self, dims: &[usize; 3]) -> [(usize, f64); 8] {
        std::array::from_fn(|k| {
            let o = [k & 1, (k >> 1) & 1, (k >> 2) & 1];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if o[a] == 1 { self.frac[a] } else { 1.0 - self.frac[a] };
            }
            let idx = ((self.base[2] + o[2]) * dims[1] + self.base[1] + o[1]) * dims[0] + self.base[0] + o[0];
            (idx, w)
        })
    }

    /// Spatial gradient of each corner weight.
    #[inline]
    pub fn weight_gradients(&self) -> [V3; 8] {
        std::array::from_fn(|k| {
            let o = [k & 1, (k >> 1) & 1, (k >> 2) & 1];
            let f: [f64; 3] = std::array::from_fn(|a| if o[a] == 1 { self.frac[a] } else { 1.0 - self.frac[a] });
            let s: [f64; 3] = std::array::from_fn(|a| if o[a] == 1 { 1.0 } else { -1.0 });
            [
                s[0] * self.dfrac[0] * f[1] * f[2],
                s[1] * self.dfrac[1] * f[0] * f[2],
                s[2] * self.dfrac[2] * f[0] * f[1],
            ]
        })
    }
}

/// Activated field values at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub density: f64,
    pub color: V3,
}

impl RadianceField {
    /// A field with every voxel set to `(density_pre, 0, 0, 0)`: uniform
    /// density `softplus(density_pre)` and mid-gray color.
    pub fn constant(dims: [usize; 3], bounds: Aabb, density_pre: f64) -> Result<Self> {
        if dims.iter().any(|&n| n < 2) {
            return Err(Error::Invalid(format!("field grid must be at least 2 per axis, got {dims:?}")));
        }
        if (0..3).any(|k| !(bounds.max[k] > bounds.min[k])) {
            return Err(Error::Invalid("field bounds must have positive extent".into()));
        }
        let n = dims[0] * dims[1] * dims[2];
        let mut data = vec![0.0; n * CHANNELS];
        for v in data.chunks_exact_mut(CHANNELS) {
            v[0] = density_pre;
        }
        Ok(RadianceField { dims, bounds, data })
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn voxel_index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn voxel_size(&self) -> V3 {
        std::array::from_fn(|a| (self.bounds.max[a] - self.bounds.min[a]) / self.dims[a] as f64)
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> V3 {
        let s = self.voxel_size();
        let ijk = [i, j, k];
        std::array::from_fn(|a| self.bounds.min[a] + (ijk[a] as f64 + 0.5) * s[a])
    }

    /// Interpolation cell of `x`, or `None` outside the bounds.
    #[inline]
    pub fn cell(&self, x: V3) -> Option<Cell> {
        if !self.bounds.contains(x) {
            return None;
        }
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        let mut dfrac = [0.0; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let size = (self.bounds.max[a] - self.bounds.min[a]) / n as f64;
            let u = (x[a] - self.bounds.min[a]) / size - 0.5;
            let hi = (n - 1) as f64;
            let (uc, slope) = if u <= 0.0 {
                (0.0, 0.0)
            } else if u >= hi {
                (hi, 0.0)
            } else {
                (u, 1.0 / size)
            };
            let i0 = (uc.floor() as usize).min(n - 2);
            base[a] = i0;
            frac[a] = uc - i0 as f64;
            dfrac[a] = slope;
        }
        Some(Cell { base, frac, dfrac })
    }

    /// Interpolated pre-activation values `(s, r, g, b)` at a cell.
    #[inline]
    pub fn interpolate(&self, cell: &Cell) -> [f64; CHANNELS] {
        let mut out = [0.0; CHANNELS];
        for (idx, w) in cell.corners(&self.dims) {
            let v = &self.data[idx * CHANNELS..idx * CHANNELS + CHANNELS];
            for c in 0..CHANNELS {
                out[c] += w * v[c];
            }
        }
        out
    }

    pub fn query(&self, x: V3) -> FieldSample {
        match self.cell(x) {
            None => FieldSample {
                density: 0.0,
                color: [0.0; 3],
            },
            Some(cell) => {
                let raw = self.interpolate(&cell);
                FieldSample {
                    density: softplus(raw[0]),
                    color: [sigmoid(raw[1]), sigmoid(raw[2]), sigmoid(raw[3])],
                }
            }
        }
    }
}
