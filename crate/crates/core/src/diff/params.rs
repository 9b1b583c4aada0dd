use std::fmt;

use crate::camera::{CameraGrad, CameraParams};
use crate::error::{Error, Result};
use crate::field::RadianceField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    Field,
    Intrinsics,
    Extrinsics,
    Radial,
    Raxel,
}

impl Group {
    pub const ALL: [Group; 5] = [Group::Field, Group::Intrinsics, Group::Extrinsics, Group::Radial, Group::Raxel];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Field => "field",
            Group::Intrinsics => "intrinsics",
            Group::Extrinsics => "extrinsics",
            Group::Radial => "radial",
            Group::Raxel => "raxel",
        }
    }

    pub fn from_name(s: &str) -> Option<Group> {
        Group::ALL.into_iter().find(|g| g.name() == s)
    }
}

/// A set of parameter groups.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct GroupSet(u8);

impl GroupSet {
    pub const fn empty() -> Self {
        GroupSet(0)
    }

    pub const fn all() -> Self {
        GroupSet(0b11111)
    }

    pub fn with(mut self, g: Group) -> Self {
        self.insert(g);
        self
    }

    pub fn insert(&mut self, g: Group) {
        self.0 |= 1 << g.index();
    }

    pub fn remove(&mut self, g: Group) {
        self.0 &= !(1 << g.index());
    }

    pub fn contains(&self, g: Group) -> bool {
        self.0 & (1 << g.index()) != 0
    }

    pub fn is_superset(&self, other: GroupSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn iter(self) -> impl Iterator<Item = Group> {
        Group::ALL.into_iter().filter(move |g| self.contains(*g))
    }
}

impl fmt::Display for GroupSet {
    /// Group names joined by `+`, or `none`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return f.write_str("none");
        }
        let names: Vec<&str> = self.iter().map(Group::name).collect();
        f.write_str(&names.join("+"))
    }
}

/// How camera residuals map onto flat group vectors.
///
/// With `shared_lens`, every view shares camera 0's intrinsic, radial and
/// raxel residuals (one physical lens): gathering reads camera 0, scattering
/// writes all views, and gradients from all views are summed. Extrinsics are
/// always per view; views flagged in `frozen_extrinsics` receive zero
/// gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub shared_lens: bool,
    pub frozen_extrinsics: Vec<bool>,
}

impl Layout {
    pub fn new(cams: &[CameraParams], shared_lens: bool, freeze_first: bool) -> Result<Self> {
        if cams.is_empty() {
            return Err(Error::Invalid("at least one camera is required".into()));
        }
        if shared_lens {
            let (gw, gh) = (cams[0].raxel.width, cams[0].raxel.height);
            if cams.iter().any(|c| c.raxel.width != gw || c.raxel.height != gh) {
                return Err(Error::DimensionMismatch("a shared lens needs equal raxel grids".into()));
            }
        }
        let mut frozen = vec![false; cams.len()];
        frozen[0] = freeze_first;
        Ok(Layout {
            shared_lens,
            frozen_extrinsics: frozen,
        })
    }

    fn lens_views(&self, n: usize) -> usize {
        if self.shared_lens {
            1
        } else {
            n
        }
    }
}

/// Learnable scalars, one flat vector per [`Group`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    pub values: [Vec<f64>; 5],
}

impl ParamSet {
    pub fn group(&self, g: Group) -> &[f64] {
        &self.values[g.index()]
    }

    pub fn group_mut(&mut self, g: Group) -> &mut Vec<f64> {
        &mut self.values[g.index()]
    }

    pub fn len(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Length of each group vector for this field, rig and layout.
    pub fn group_lengths(field: &RadianceField, cams: &[CameraParams], layout: &Layout) -> [usize; 5] {
        let lens = &cams[..layout.lens_views(cams.len())];
        let mut n = [0; 5];
        n[Group::Field.index()] = field.data.len();
        n[Group::Intrinsics.index()] = 4 * lens.len();
        n[Group::Radial.index()] = 2 * lens.len();
        n[Group::Raxel.index()] = lens.iter().map(|c| 6 * c.raxel.len()).sum();
        n[Group::Extrinsics.index()] = 9 * cams.len();
        n
    }

    pub fn zeros(lengths: [usize; 5]) -> ParamSet {
        ParamSet {
            values: lengths.map(|n| vec![0.0; n]),
        }
    }

    pub fn gather(field: &RadianceField, cams: &[CameraParams], layout: &Layout) -> ParamSet {
        let lens = &cams[..layout.lens_views(cams.len())];
        let mut values: [Vec<f64>; 5] = Default::default();
        values[Group::Field.index()] = field.data.clone();
        for c in lens {
            let i = &c.intrinsics;
            values[Group::Intrinsics.index()].extend([i.df[0], i.df[1], i.dc[0], i.dc[1]]);
            values[Group::Radial.index()].extend(c.radial.dk);
            let rax = &mut values[Group::Raxel.index()];
            for (d, o) in c.raxel.dir.iter().zip(&c.raxel.origin) {
                rax.extend(d);
                rax.extend(o);
            }
        }
        for c in cams {
            let e = &c.extrinsics;
            values[Group::Extrinsics.index()].extend(e.da);
            values[Group::Extrinsics.index()].extend(e.dt);
        }
        ParamSet { values }
    }

    /// Writes the vectors back into the field and cameras.
    pub fn scatter(&self, field: &mut RadianceField, cams: &mut [CameraParams], layout: &Layout) -> Result<()> {
        let expected = ParamSet::group_lengths(field, cams, layout);
        for g in Group::ALL {
            if expected[g.index()] != self.group(g).len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} group has {} values, expected {}",
                    g.name(),
                    self.group(g).len(),
                    expected[g.index()]
                )));
            }
        }
        field.data.copy_from_slice(self.group(Group::Field));
        let shared = layout.shared_lens;
        let mut rax_off = 0;
        for (v, c) in cams.iter_mut().enumerate() {
            let lv = if shared { 0 } else { v };
            let intr = &self.group(Group::Intrinsics)[4 * lv..4 * lv + 4];
            c.intrinsics.df = [intr[0], intr[1]];
            c.intrinsics.dc = [intr[2], intr[3]];
            let rad = &self.group(Group::Radial)[2 * lv..2 * lv + 2];
            c.radial.dk = [rad[0], rad[1]];
            let n = 6 * c.raxel.len();
            let rax = &self.group(Group::Raxel)[rax_off..rax_off + n];
            if !shared {
                rax_off += n;
            }
            for (node, chunk) in rax.chunks_exact(6).enumerate() {
                c.raxel.dir[node] = [chunk[0], chunk[1], chunk[2]];
                c.raxel.origin[node] = [chunk[3], chunk[4], chunk[5]];
            }
            let ext = &self.group(Group::Extrinsics)[9 * v..9 * v + 9];
            c.extrinsics.da.copy_from_slice(&ext[..6]);
            c.extrinsics.dt.copy_from_slice(&ext[6..]);
        }
        Ok(())
    }

    /// Gradient vectors in the same layout as [`ParamSet::gather`]. An empty
    /// `field_grad` counts as zero.
    pub fn from_grads(
        field_grad: &[f64],
        cam_grads: &[CameraGrad],
        field: &RadianceField,
        cams: &[CameraParams],
        layout: &Layout,
    ) -> Result<ParamSet> {
        if cam_grads.len() != cams.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} camera gradients for {} cameras",
                cam_grads.len(),
                cams.len()
            )));
        }
        let mut out = ParamSet::zeros(ParamSet::group_lengths(field, cams, layout));
        if !field_grad.is_empty() {
            if field_grad.len() != field.data.len() {
                return Err(Error::DimensionMismatch("field gradient length".into()));
            }
            out.group_mut(Group::Field).copy_from_slice(field_grad);
        }
        let shared = layout.shared_lens;
        let mut rax_off = 0;
        for (v, g) in cam_grads.iter().enumerate() {
            let lv = if shared { 0 } else { v };
            let intr = &mut out.group_mut(Group::Intrinsics)[4 * lv..4 * lv + 4];
            for (dst, src) in intr.iter_mut().zip(g.df.iter().chain(&g.dc)) {
                *dst += src;
            }
            let rad = &mut out.group_mut(Group::Radial)[2 * lv..2 * lv + 2];
            rad[0] += g.dk[0];
            rad[1] += g.dk[1];
            let n = 6 * g.raxel_dir.len();
            if n != 6 * cams[v].raxel.len() {
                return Err(Error::DimensionMismatch(format!("raxel gradient of camera {v}")));
            }
            let rax = &mut out.group_mut(Group::Raxel)[rax_off..rax_off + n];
            if !shared {
                rax_off += n;
            }
            for (node, chunk) in rax.chunks_exact_mut(6).enumerate() {
                for k in 0..3 {
                    chunk[k] += g.raxel_dir[node][k];
                    chunk[3 + k] += g.raxel_origin[node][k];
                }
            }
            if !layout.frozen_extrinsics[v] {
                let ext = &mut out.group_mut(Group::Extrinsics)[9 * v..9 * v + 9];
                for (dst, src) in ext.iter_mut().zip(g.da.iter().chain(&g.dt)) {
                    *dst += src;
                }
            }
        }
        Ok(out)
    }

    /// `self += s · other`, group by group.
    pub fn add_scaled(&mut self, other: &ParamSet, s: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }
}

/// Bounds the intrinsic residuals: `|Δf| ≤ 0.5·f₀` and
/// `|Δc| ≤ 0.25·min(W, H)`.
pub fn clamp_camera_residuals(cam: &mut CameraParams) {
    let i = &mut cam.intrinsics;
    let cmax = 0.25 * cam.width.min(cam.height) as f64;
    for k in 0..2 {
        let fmax = 0.5 * i.f[k].abs();
        i.df[k] = i.df[k].clamp(-fmax, fmax);
        i.dc[k] = i.dc[k].clamp(-cmax, cmax);
    }
}
