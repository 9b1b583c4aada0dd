//! Volume rendering along a ray and its reverse pass.
//!
//! With sample depths `t₁ < … < t_N` in `[near, far]`, segment lengths
//! `Δᵢ = tᵢ₊₁ − tᵢ` (`Δ_N = far − t_N`), per-segment transmittance
//! `αᵢ = exp(−σᵢ Δᵢ ‖d‖)` and accumulated transmittance `Tᵢ = Π_{j<i} αⱼ`,
//! the rendered color is `Σᵢ Tᵢ (1 − αᵢ) cᵢ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{sigmoid, softplus, Cell, RadianceField, CHANNELS};
use crate::camera::{slots, CameraGrad, CameraParams, Ray};
use crate::diff::Jet;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::math::{norm, V3};

/// Work is split into this many ray chunks regardless of thread count, and
/// chunk results are reduced in order, so results do not depend on the
/// number of threads.
const CHUNKS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingSpec {
    pub near: f64,
    pub far: f64,
    pub samples: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.near > 0.0 && self.far > self.near) {
            return Err(Error::Invalid(format!(
                "sampling range must satisfy 0 < near < far, got [{}, {}]",
                self.near, self.far
            )));
        }
        if self.samples < 2 {
            return Err(Error::Invalid("at least 2 samples per ray are required".into()));
        }
        Ok(())
    }

    /// Sample depths for the ray identified by `key`. Stratified jitter is a
    /// pure function of `(seed, key)`.
    pub fn depths(&self, key: u64, out: &mut Vec<f64>) {
        out.clear();
        let h = (self.far - self.near) / self.samples as f64;
        if self.stratified {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            out.extend((0..self.samples).map(|i| self.near + (i as f64 + rng.random::<f64>()) * h));
        } else {
            out.extend((0..self.samples).map(|i| self.near + i as f64 * h));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOutput {
    pub color: V3,
    pub weight_sum: f64,
}

#[derive(Clone, Copy, Debug)]
struct Sample {
    t: f64,
    delta: f64,
    cell: Option<Cell>,
    raw: [f64; CHANNELS],
    sigma: f64,
    color: V3,
    /// Transmittance up to (not including) this sample.
    trans: f64,
    alpha: f64,
}

/// Per-ray scratch space reused across rays.
#[derive(Default)]
pub struct RaySamples {
    depths: Vec<f64>,
    samples: Vec<Sample>,
}

fn trace(field: &RadianceField, ray: &Ray, spec: &SamplingSpec, key: u64, scratch: &mut RaySamples) -> RenderOutput {
    spec.depths(key, &mut scratch.depths);
    scratch.samples.clear();
    let dir_norm = norm(ray.dir);
    let mut trans = 1.0;
    let mut color = [0.0; 3];
    let mut weight_sum = 0.0;
    let n = scratch.depths.len();
    for i in 0..n {
        let t = scratch.depths[i];
        let next = if i + 1 < n { scratch.depths[i + 1] } else { spec.far };
        let delta = next - t;
        let x = ray.at(t);
        let cell = field.cell(x);
        let (raw, sigma, c) = match &cell {
            Some(cell) => {
                let raw = field.interpolate(cell);
                (raw, softplus(raw[0]), [sigmoid(raw[1]), sigmoid(raw[2]), sigmoid(raw[3])])
            }
            None => ([0.0; CHANNELS], 0.0, [0.0; 3]),
        };
        let alpha = (-sigma * delta * dir_norm).exp();
        let w = trans * (1.0 - alpha);
        for k in 0..3 {
            color[k] += w * c[k];
        }
        weight_sum += w;
        scratch.samples.push(Sample {
            t,
            delta,
            cell,
            raw,
            sigma,
            color: c,
            trans,
            alpha,
        });
        trans *= alpha;
    }
    debug_assert!(weight_sum.is_nan() || (weight_sum >= 0.0 && weight_sum <= 1.0 + 1e-12));
    RenderOutput { color, weight_sum }
}

/// Reverse pass of [`trace`] for an upstream gradient `g = dL/dColor`.
/// Accumulates voxel gradients into `field_grad` (if given) and returns
/// `(dL/d origin, dL/d dir)`.
fn backprop(
    field: &RadianceField,
    ray: &Ray,
    scratch: &RaySamples,
    g: V3,
    mut field_grad: Option<&mut [f64]>,
) -> (V3, V3) {
    let dir_norm = norm(ray.dir);
    let mut d_origin = [0.0; 3];
    let mut d_dir = [0.0; 3];
    let mut d_norm = 0.0;
    // Σ_{k>i} w_k c_k, built back to front.
    let mut behind = [0.0; 3];
    for s in scratch.samples.iter().rev() {
        let w = s.trans * (1.0 - s.alpha);
        let Some(cell) = &s.cell else {
            continue;
        };
        let trans_after = s.trans * s.alpha;
        let q: f64 = (0..3).map(|k| g[k] * (trans_after * s.color[k] - behind[k])).sum();
        let d_sigma = s.delta * dir_norm * q;
        d_norm += s.sigma * s.delta * q;
        let d_pre = [
            d_sigma * sigmoid(s.raw[0]),
            w * g[0] * s.color[0] * (1.0 - s.color[0]),
            w * g[1] * s.color[1] * (1.0 - s.color[1]),
            w * g[2] * s.color[2] * (1.0 - s.color[2]),
        ];
        let corners = cell.corners(&field.dims);
        let grads = cell.weight_gradients();
        let mut dx = [0.0; 3];
        for ((idx, cw), gw) in corners.iter().zip(grads.iter()) {
            let v = &field.data[idx * CHANNELS..idx * CHANNELS + CHANNELS];
            let along: f64 = (0..CHANNELS).map(|c| d_pre[c] * v[c]).sum();
            for a in 0..3 {
                dx[a] += along * gw[a];
            }
            if let Some(fg) = field_grad.as_deref_mut() {
                let out = &mut fg[idx * CHANNELS..idx * CHANNELS + CHANNELS];
                for c in 0..CHANNELS {
                    out[c] += cw * d_pre[c];
                }
            }
        }
        for a in 0..3 {
            d_origin[a] += dx[a];
            d_dir[a] += s.t * dx[a];
        }
        for k in 0..3 {
            behind[k] += w * s.color[k];
        }
    }
    if dir_norm > 0.0 {
        for a in 0..3 {
            d_dir[a] += d_norm * ray.dir[a] / dir_norm;
        }
    }
    (d_origin, d_dir)
}

pub fn render_ray(field: &RadianceField, ray: &Ray, spec: &SamplingSpec, key: u64) -> RenderOutput {
    let mut scratch = RaySamples::default();
    trace(field, ray, spec, key, &mut scratch)
}

/// Renders every pixel center `(i + 0.5, j + 0.5)`; pixel `(i, j)` uses ray
/// key `j·W + i`.
pub fn render_image(field: &RadianceField, cam: &CameraParams, spec: &SamplingSpec) -> Result<ImageBuffer> {
    spec.validate()?;
    let vars = cam.vars::<f64>(0)?;
    let (w, h) = (cam.width, cam.height);
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|j| {
            let mut scratch = RaySamples::default();
            let mut row = Vec::with_capacity(w * 3);
            for i in 0..w {
                let p = [i as f64 + 0.5, j as f64 + 0.5];
                let (ray, _) = cam.unproject_with(&vars, p)?;
                let out = trace(field, &ray, spec, (j * w + i) as u64, &mut scratch);
                row.extend_from_slice(&out.color);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(ImageBuffer {
        width: w,
        height: h,
        data: rows.concat(),
    })
}

/// One supervised pixel: image coordinate, observed color, and ray key.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelSample {
    pub p: [f64; 2],
    pub target: V3,
    pub key: u64,
}

#[derive(Clone, Debug)]
pub struct PhotometricLoss {
    pub value: f64,
    /// Empty when field gradients were not requested.
    pub field_grad: Vec<f64>,
    pub camera_grad: CameraGrad,
    /// Largest per-ray weight sum seen; never above 1.
    pub max_weight_sum: f64,
}

struct ChunkResult {
    sum: f64,
    field_grad: Vec<f64>,
    camera_grad: CameraGrad,
    max_weight_sum: f64,
}

/// Mean over `pixels` of `‖C(p) − Ĉ(r(p))‖²` with gradients for the field
/// voxels and the camera's residuals.
pub fn photometric_loss(
    field: &RadianceField,
    cam: &CameraParams,
    pixels: &[PixelSample],
    spec: &SamplingSpec,
    want_field_grad: bool,
) -> Result<PhotometricLoss> {
    if pixels.is_empty() {
        return Err(Error::Invalid("photometric loss needs a nonempty pixel batch".into()));
    }
    spec.validate()?;
    let vars = cam.vars::<Jet<{ slots::COUNT }>>(0)?;
    let scale = 2.0 / pixels.len() as f64;
    let chunk_len = pixels.len().div_ceil(CHUNKS);
    let results: Vec<ChunkResult> = pixels
        .par_chunks(chunk_len)
        .map(|chunk| -> Result<ChunkResult> {
            let mut scratch = RaySamples::default();
            let mut field_grad = if want_field_grad {
                vec![0.0; field.data.len()]
            } else {
                Vec::new()
            };
            let mut camera_grad = CameraGrad::zeros_like(cam);
            let mut sum = 0.0;
            let mut max_weight_sum: f64 = 0.0;
            let mut local = [0.0; slots::COUNT];
            for px in chunk {
                let (jray, stencil) = cam.unproject_with(&vars, px.p)?;
                let ray = jray.value();
                let out = trace(field, &ray, spec, px.key, &mut scratch);
                max_weight_sum = max_weight_sum.max(out.weight_sum);
                let err: V3 = std::array::from_fn(|k| out.color[k] - px.target[k]);
                sum += err[0] * err[0] + err[1] * err[1] + err[2] * err[2];
                let g: V3 = std::array::from_fn(|k| err[k] * scale);
                let fg = if want_field_grad { Some(field_grad.as_mut_slice()) } else { None };
                let (d_o, d_d) = backprop(field, &ray, &scratch, g, fg);
                for (s, l) in local.iter_mut().enumerate() {
                    *l = (0..3)
                        .map(|k| d_o[k] * jray.origin[k].d[s] + d_d[k] * jray.dir[k].d[s])
                        .sum();
                }
                camera_grad.accumulate(&local, 0, Some(&stencil), 1.0);
            }
            Ok(ChunkResult {
                sum,
                field_grad,
                camera_grad,
                max_weight_sum,
            })
        })
        .collect::<Result<_>>()?;

    let mut iter = results.into_iter();
    let first = iter.next().expect("nonempty batch");
    let mut sum = first.sum;
    let mut field_grad = first.field_grad;
    let mut camera_grad = first.camera_grad;
    let mut max_weight_sum = first.max_weight_sum;
    for r in iter {
        sum += r.sum;
        for (a, b) in field_grad.iter_mut().zip(&r.field_grad) {
            *a += b;
        }
        camera_grad.add_assign(&r.camera_grad);
        max_weight_sum = max_weight_sum.max(r.max_weight_sum);
    }
    Ok(PhotometricLoss {
        value: sum / pixels.len() as f64,
        field_grad,
        camera_grad,
        max_weight_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{logit, softplus_inv, Aabb};

    fn spec(samples: usize) -> SamplingSpec {
        SamplingSpec {
            near: 1.0,
            far: 3.0,
            samples,
            stratified: false,
            seed: 0,
        }
    }

    fn axis_ray() -> Ray {
        Ray {
            origin: [0.0, 0.0, -2.0],
            dir: [0.0, 0.0, 1.0],
        }
    }

    fn uniform(density: f64, color: V3) -> RadianceField {
        let mut f = RadianceField::constant([4, 4, 4], Aabb::cube(2.0), softplus_inv(density)).unwrap();
        for v in f.data.chunks_exact_mut(4) {
            for k in 0..3 {
                v[k + 1] = logit(color[k]);
            }
        }
        f
    }

    #[test]
    fn empty_field_renders_black() {
        let f = RadianceField::constant([4, 4, 4], Aabb::cube(2.0), -800.0).unwrap();
        let out = render_ray(&f, &axis_ray(), &spec(16), 0);
        assert_eq!(out.color, [0.0; 3]);
        assert_eq!(out.weight_sum, 0.0);
    }

    #[test]
    fn opaque_limit() {
        // σ (far − near) ‖d‖ = 10 · 2 · 1 = 20.
        let c = [0.2, 0.5, 0.9];
        let f = uniform(10.0, c);
        let out = render_ray(&f, &axis_ray(), &spec(32), 0);
        for k in 0..3 {
            let expected = c[k] * (1.0 - (-20.0f64).exp());
            assert!((out.color[k] - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn rescaling_the_direction_is_invariant() {
        let f = uniform(0.7, [0.3, 0.6, 0.1]);
        let ray = Ray {
            origin: [0.1, -0.2, -2.0],
            dir: [0.05, 0.1, 1.0],
        };
        let base = render_ray(&f, &ray, &spec(24), 0);
        for s in [0.5, 3.0] {
            let scaled = Ray {
                origin: ray.origin,
                dir: [ray.dir[0] * s, ray.dir[1] * s, ray.dir[2] * s],
            };
            let sp = SamplingSpec {
                near: 1.0 / s,
                far: 3.0 / s,
                ..spec(24)
            };
            let out = render_ray(&f, &scaled, &sp, 0);
            for k in 0..3 {
                assert!((out.color[k] - base.color[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn occlusion_moves_toward_front_color() {
        // Two samples: front half red, back half green.
        let mut f = RadianceField::constant([2, 2, 2], Aabb::cube(1.0), softplus_inv(0.5)).unwrap();
        for k in 0..2 {
            for j in 0..2 {
                for i in 0..2 {
                    let idx = f.voxel_index(i, j, k) * 4;
                    let c = if k == 0 { [0.99, 0.01, 0.01] } else { [0.01, 0.99, 0.01] };
                    for ch in 0..3 {
                        f.data[idx + 1 + ch] = logit(c[ch]);
                    }
                }
            }
        }
        let ray = Ray {
            origin: [0.0, 0.0, -1.5],
            dir: [0.0, 0.0, 1.0],
        };
        let sp = SamplingSpec {
            near: 1.0,
            far: 2.0,
            samples: 2,
            stratified: false,
            seed: 0,
        };
        let mut last = render_ray(&f, &ray, &sp, 0).color[0];
        for pre in [0.0, 1.0, 2.0, 4.0] {
            for j in 0..2 {
                for i in 0..2 {
                    let idx = f.voxel_index(i, j, 0) * 4;
                    f.data[idx] = pre;
                }
            }
            let red = render_ray(&f, &ray, &sp, 0).color[0];
            assert!(red > last);
            last = red;
        }
    }

    #[test]
    fn stratified_depths_are_seeded() {
        let sp = SamplingSpec {
            stratified: true,
            seed: 9,
            ..spec(8)
        };
        let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
        sp.depths(3, &mut a);
        sp.depths(3, &mut b);
        sp.depths(4, &mut c);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(a[0] >= 1.0 && *a.last().unwrap() < 3.0);
    }

    #[test]
    fn invalid_sampling_is_rejected() {
        assert!(SamplingSpec { near: 0.0, ..spec(4) }.validate().is_err());
        assert!(SamplingSpec { far: 0.5, ..spec(4) }.validate().is_err());
        assert!(spec(1).validate().is_err());
    }

    #[test]
    fn ray_gradients_match_finite_differences() {
        let mut f = uniform(0.8, [0.4, 0.5, 0.6]);
        for (i, v) in f.data.iter_mut().enumerate() {
            *v += ((i * 7919) % 13) as f64 * 0.1 - 0.6;
        }
        let ray = Ray {
            origin: [0.13, -0.21, -2.0],
            dir: [0.07, 0.11, 0.97],
        };
        let sp = spec(16);
        let g = [0.3, -0.7, 0.2];
        let loss = |r: &Ray| {
            let c = render_ray(&f, r, &sp, 0).color;
            g[0] * c[0] + g[1] * c[1] + g[2] * c[2]
        };
        let mut scratch = RaySamples::default();
        trace(&f, &ray, &sp, 0, &mut scratch);
        let mut fg = vec![0.0; f.data.len()];
        let (d_o, d_d) = backprop(&f, &ray, &scratch, g, Some(&mut fg));
        let h = 1e-6;
        for a in 0..3 {
            let mut rp = ray;
            rp.origin[a] += h;
            let mut rm = ray;
            rm.origin[a] -= h;
            let fd = (loss(&rp) - loss(&rm)) / (2.0 * h);
            assert!((d_o[a] - fd).abs() < 1e-6 * fd.abs().max(1.0), "origin {a}: {} vs {fd}", d_o[a]);
            let mut rp = ray;
            rp.dir[a] += h;
            let mut rm = ray;
            rm.dir[a] -= h;
            let fd = (loss(&rp) - loss(&rm)) / (2.0 * h);
            assert!((d_d[a] - fd).abs() < 1e-6 * fd.abs().max(1.0), "dir {a}: {} vs {fd}", d_d[a]);
        }
        for idx in [0, 1, 22, 87, 130, 255] {
            let mut fp = f.clone();
            fp.data[idx] += h;
            let mut fm = f.clone();
            fm.data[idx] -= h;
            let lp = {
                let c = render_ray(&fp, &ray, &sp, 0).color;
                g[0] * c[0] + g[1] * c[1] + g[2] * c[2]
            };
            let lm = {
                let c = render_ray(&fm, &ray, &sp, 0).color;
                g[0] * c[0] + g[1] * c[1] + g[2] * c[2]
            };
            let fd = (lp - lm) / (2.0 * h);
            assert!((fg[idx] - fd).abs() < 1e-6 * fd.abs().max(1e-3), "voxel {idx}: {} vs {fd}", fg[idx]);
        }
    }
}
