use super::{slots, CameraParams, RaxelStencil};
use crate::math::V3;

/// Gradient of a scalar with respect to one camera's residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraGrad {
    pub df: [f64; 2],
    pub dc: [f64; 2],
    pub da: [f64; 6],
    pub dt: [f64; 3],
    pub dk: [f64; 2],
    pub raxel_dir: Vec<V3>,
    pub raxel_origin: Vec<V3>,
}

impl CameraGrad {
    pub fn zeros_like(cam: &CameraParams) -> Self {
        CameraGrad {
            df: [0.0; 2],
            dc: [0.0; 2],
            da: [0.0; 6],
            dt: [0.0; 3],
            dk: [0.0; 2],
            raxel_dir: vec![[0.0; 3]; cam.raxel.len()],
            raxel_origin: vec![[0.0; 3]; cam.raxel.len()],
        }
    }

    /// Adds `scale · local[base + slot]` for every slot of one view, routing
    /// raxel slots to the grid nodes named by `stencil`.
    pub fn accumulate(&mut self, local: &[f64], base: usize, stencil: Option<&RaxelStencil>, scale: f64) {
        let g = |s: usize| local[base + s] * scale;
        for j in 0..2 {
            self.df[j] += g(slots::DF + j);
            self.dc[j] += g(slots::DC + j);
            self.dk[j] += g(slots::DK + j);
        }
        for j in 0..6 {
            self.da[j] += g(slots::DA + j);
        }
        for j in 0..3 {
            self.dt[j] += g(slots::DT + j);
        }
        if let Some(st) = stencil {
            for (corner, &node) in st.nodes.iter().enumerate() {
                for k in 0..3 {
                    self.raxel_dir[node][k] += g(slots::ZD + 3 * corner + k);
                    self.raxel_origin[node][k] += g(slots::ZO + 3 * corner + k);
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &CameraGrad) {
        for j in 0..2 {
            self.df[j] += other.df[j];
            self.dc[j] += other.dc[j];
            self.dk[j] += other.dk[j];
        }
        for j in 0..6 {
            self.da[j] += other.da[j];
        }
        for j in 0..3 {
            self.dt[j] += other.dt[j];
        }
        for (a, b) in self.raxel_dir.iter_mut().zip(&other.raxel_dir) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
        for (a, b) in self.raxel_origin.iter_mut().zip(&other.raxel_origin) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.for_each_mut(|x| *x *= s);
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        self.df.iter_mut().for_each(&mut f);
        self.dc.iter_mut().for_each(&mut f);
        self.da.iter_mut().for_each(&mut f);
        self.dt.iter_mut().for_each(&mut f);
        self.dk.iter_mut().for_each(&mut f);
        self.raxel_dir.iter_mut().flatten().for_each(&mut f);
        self.raxel_origin.iter_mut().flatten().for_each(&mut f);
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        let mut c = self.clone();
        c.for_each_mut(|x| ok &= x.is_finite());
        ok
    }
}
