//! Differentiable generic camera: pinhole intrinsics with learnable residuals,
//! 6-vector rotation, radial distortion, and raxel ray offsets.
//!
//! Conventions: `R` maps camera to world and `t` is the camera center, so a
//! camera-frame point `y` sits at `R y + t` in the world. The camera looks
//! down `+z`; pixel `(i, j)` covers `[i, i+1) × [j, j+1)`.
//!
//! Every parameter is split into a frozen initialization and a residual that
//! starts at zero. The effective value is their sum.

mod grad;
mod io;
mod radial;
mod raxel;
mod rotation;

pub use grad::CameraGrad;
pub use io::{
    format_cameras, format_residuals, parse_cameras, parse_residuals_into, read_cameras, read_residuals, write_cameras,
    write_residuals,
};
pub use radial::{apply_radial, invert_radial, INVERSE_ITERATIONS, INVERSE_TOLERANCE};
pub use raxel::{RaxelGrids, RaxelStencil};
pub use rotation::{rotation_from_6vec, six_vec_from_rotation};

use crate::diff::Scalar;
use crate::error::{Error, Result};
use crate::math::{add, lift3, mat_t_vec, mat_vec, sub, M3, V3};

/// Depth below which a point counts as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

/// Derivative slots for one camera view. A view's rays depend on 15 global
/// scalars and on the 4 raxel nodes around the pixel (6 scalars each).
pub mod slots {
    pub const DF: usize = 0;
    pub const DC: usize = 2;
    pub const DA: usize = 4;
    pub const DT: usize = 10;
    pub const DK: usize = 13;
    /// Direction offsets of stencil corner `c` occupy `ZD + 3c .. ZD + 3c + 3`.
    pub const ZD: usize = 15;
    /// Origin offsets of stencil corner `c` occupy `ZO + 3c .. ZO + 3c + 3`.
    pub const ZO: usize = 27;
    pub const COUNT: usize = 39;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Intrinsics {
    pub f: [f64; 2],
    pub c: [f64; 2],
    pub df: [f64; 2],
    pub dc: [f64; 2],
}

impl Intrinsics {
    pub fn new(f: [f64; 2], c: [f64; 2]) -> Self {
        Intrinsics {
            f,
            c,
            df: [0.0; 2],
            dc: [0.0; 2],
        }
    }

    pub fn focal(&self) -> [f64; 2] {
        [self.f[0] + self.df[0], self.f[1] + self.df[1]]
    }

    pub fn principal_point(&self) -> [f64; 2] {
        [self.c[0] + self.dc[0], self.c[1] + self.dc[1]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extrinsics {
    pub a0: [f64; 6],
    pub t0: V3,
    pub da: [f64; 6],
    pub dt: V3,
}

impl Extrinsics {
    pub fn new(a0: [f64; 6], t0: V3) -> Self {
        Extrinsics {
            a0,
            t0,
            da: [0.0; 6],
            dt: [0.0; 3],
        }
    }

    pub fn from_rotation(r: &M3, t0: V3) -> Self {
        Self::new(six_vec_from_rotation(r), t0)
    }

    pub fn six_vec(&self) -> [f64; 6] {
        std::array::from_fn(|i| self.a0[i] + self.da[i])
    }

    pub fn rotation(&self) -> Result<M3> {
        rotation_from_6vec(&self.six_vec())
    }

    pub fn translation(&self) -> V3 {
        add(self.t0, self.dt)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadialDistortion {
    pub k0: [f64; 2],
    pub dk: [f64; 2],
}

impl RadialDistortion {
    pub fn none() -> Self {
        RadialDistortion {
            k0: [0.0; 2],
            dk: [0.0; 2],
        }
    }

    pub fn coefficients(&self) -> [f64; 2] {
        [self.k0[0] + self.dk[0], self.k0[1] + self.dk[1]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraParams {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    pub extrinsics: Extrinsics,
    pub radial: RadialDistortion,
    pub raxel: RaxelGrids,
}

/// A ray `o + s·d` in world coordinates. `d` is not normalized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray<S = f64> {
    pub origin: V3<S>,
    pub dir: V3<S>,
}

impl<S: Scalar> Ray<S> {
    pub fn at(&self, s: S) -> V3<S> {
        [
            self.origin[0] + self.dir[0] * s,
            self.origin[1] + self.dir[1] * s,
            self.origin[2] + self.dir[2] * s,
        ]
    }

    pub fn value(&self) -> Ray {
        Ray {
            origin: crate::math::value3(&self.origin),
            dir: crate::math::value3(&self.dir),
        }
    }
}

/// Effective camera quantities lifted into a scalar type, with the learnable
/// ones seeded as variables at `base + slot`.
#[derive(Clone, Debug)]
pub struct CameraVars<S> {
    pub f: [S; 2],
    pub c: [S; 2],
    pub rot: M3<S>,
    pub t: V3<S>,
    pub k: [S; 2],
    pub base: usize,
}

impl CameraParams {
    /// Pinhole camera with zero distortion and the default raxel grid.
    pub fn pinhole(width: usize, height: usize, f: [f64; 2], c: [f64; 2], rotation: &M3, center: V3) -> Self {
        CameraParams {
            width,
            height,
            intrinsics: Intrinsics::new(f, c),
            extrinsics: Extrinsics::from_rotation(rotation, center),
            radial: RadialDistortion::none(),
            raxel: RaxelGrids::default_for_image(width, height),
        }
    }

    /// Checks the structural invariants of every parameter block.
    pub fn validate(&self) -> Result<()> {
        let f = self.intrinsics.focal();
        if !(f[0] > 0.0 && f[1] > 0.0) {
            return Err(Error::Invalid(format!("focal length must be positive, got {f:?}")));
        }
        let c = self.intrinsics.principal_point();
        let (w, h) = (self.width as f64, self.height as f64);
        if !(c[0] >= -0.5 * w && c[0] <= 1.5 * w && c[1] >= -0.5 * h && c[1] <= 1.5 * h) {
            return Err(Error::Invalid(format!("principal point {c:?} outside image margin")));
        }
        if c[0] == 0.0 || c[1] == 0.0 {
            return Err(Error::Invalid("principal point coordinates must be nonzero".into()));
        }
        let k = self.radial.coefficients();
        if !(k[0].is_finite() && k[1].is_finite()) {
            return Err(Error::NonFinite("radial coefficients".into()));
        }
        if self.raxel.width < 2 || self.raxel.height < 2 {
            return Err(Error::Invalid("raxel grid must be at least 2x2".into()));
        }
        if !self
            .raxel
            .dir
            .iter()
            .chain(self.raxel.origin.iter())
            .flatten()
            .all(|x| x.is_finite())
        {
            return Err(Error::NonFinite("raxel offsets".into()));
        }
        self.extrinsics.rotation()?;
        Ok(())
    }

    pub fn rotation(&self) -> Result<M3> {
        self.extrinsics.rotation()
    }

    pub fn center(&self) -> V3 {
        self.extrinsics.translation()
    }

    /// World direction of the optical axis, `R·(0,0,1)`.
    pub fn optical_axis(&self) -> Result<V3> {
        let r = self.rotation()?;
        Ok([r[0][2], r[1][2], r[2][2]])
    }

    /// Lifts the effective parameters into `S`, seeding residuals at
    /// `base + slots::*`.
    pub fn vars<S: Scalar>(&self, base: usize) -> Result<CameraVars<S>> {
        let i = &self.intrinsics;
        let e = &self.extrinsics;
        let f = [
            S::var(i.f[0] + i.df[0], base + slots::DF),
            S::var(i.f[1] + i.df[1], base + slots::DF + 1),
        ];
        let c = [
            S::var(i.c[0] + i.dc[0], base + slots::DC),
            S::var(i.c[1] + i.dc[1], base + slots::DC + 1),
        ];
        let a: [S; 6] = std::array::from_fn(|j| S::var(e.a0[j] + e.da[j], base + slots::DA + j));
        let rot = rotation_from_6vec(&a)?;
        let t = std::array::from_fn(|j| S::var(e.t0[j] + e.dt[j], base + slots::DT + j));
        let k = [
            S::var(self.radial.k0[0] + self.radial.dk[0], base + slots::DK),
            S::var(self.radial.k0[1] + self.radial.dk[1], base + slots::DK + 1),
        ];
        Ok(CameraVars { f, c, rot, t, k, base })
    }

    /// Ray through pixel `p` with partials w.r.t. all residuals seeded in
    /// `vars`, plus the raxel stencil that says which grid nodes the raxel
    /// slots refer to.
    pub fn unproject_with<S: Scalar>(&self, vars: &CameraVars<S>, p: [f64; 2]) -> Result<(Ray<S>, RaxelStencil)> {
        let stencil = self.raxel.stencil(self.width, self.height, p)?;
        let pd = apply_radial([S::cst(p[0]), S::cst(p[1])], vars.c, vars.k);
        let cam_dir = [
            (pd[0] - vars.c[0]) / vars.f[0],
            (pd[1] - vars.c[1]) / vars.f[1],
            S::cst(1.0),
        ];
        let mut dir = mat_vec(&vars.rot, cam_dir);
        let mut origin = vars.t;
        for (corner, (&node, &w)) in stencil.nodes.iter().zip(stencil.weights.iter()).enumerate() {
            for k in 0..3 {
                let zd = S::var(self.raxel.dir[node][k], vars.base + slots::ZD + 3 * corner + k);
                let zo = S::var(self.raxel.origin[node][k], vars.base + slots::ZO + 3 * corner + k);
                dir[k] = dir[k] + zd * w;
                origin[k] = origin[k] + zo * w;
            }
        }
        Ok((Ray { origin, dir }, stencil))
    }

    pub fn unproject(&self, p: [f64; 2]) -> Result<Ray> {
        let vars = self.vars::<f64>(0)?;
        Ok(self.unproject_with(&vars, p)?.0)
    }

    /// Camera-frame coordinates `Rᵀ(x − t)`.
    pub fn world_to_camera(&self, x: V3) -> Result<V3> {
        let r = self.rotation()?;
        Ok(mat_t_vec(&r, sub(x, self.center())))
    }

    pub fn camera_to_world(&self, y: V3) -> Result<V3> {
        let r = self.rotation()?;
        Ok(add(mat_vec(&r, y), self.center()))
    }

    /// Pixel of world point `x`. The radial map is inverted numerically;
    /// raxel offsets are not part of the projection.
    pub fn project_with<S: Scalar>(&self, vars: &CameraVars<S>, x: V3<S>) -> Result<[S; 2]> {
        let q = mat_t_vec(&vars.rot, sub(x, vars.t));
        if !(q[2].value() > MIN_DEPTH) {
            return Err(Error::BehindCamera { depth: q[2].value() });
        }
        let ideal = [
            vars.f[0] * q[0] / q[2] + vars.c[0],
            vars.f[1] * q[1] / q[2] + vars.c[1],
        ];
        invert_radial(ideal, vars.c, vars.k)
    }

    pub fn project(&self, x: V3) -> Result<[f64; 2]> {
        let vars = self.vars::<f64>(0)?;
        self.project_with(&vars, lift3(x))
    }
}
