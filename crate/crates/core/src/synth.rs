//! Synthetic ground truth: blob fields, camera arcs, exact correspondences
//! and pose/focal noise injection.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::camera::{read_cameras, write_cameras, CameraParams, Extrinsics};
use crate::error::{Error, Result};
use crate::field::{logit, read_field, render_image, softplus_inv, write_field, Aabb, RadianceField, SamplingSpec};
use crate::image::{read_image, write_image, ImageBuffer};
use crate::io::write_atomic;
use crate::math::{axis_angle, cross, mat_mul, norm, V3};
use crate::rays::{prd_values, read_correspondences, write_correspondences, Correspondence};

/// Derives an independent stream seed from a base seed and a label.
pub fn stream_seed(seed: u64, label: &[u64]) -> u64 {
    // SplitMix64 finalizer folded over the label.
    let mut h = seed ^ 0x243F_6A88_85A3_08D3;
    for &x in label {
        h = h.wrapping_add(x).wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub cameras: usize,
    pub width: usize,
    pub height: usize,
    pub blobs: usize,
    /// Voxels per axis of the ground-truth field.
    pub grid: usize,
    pub samples: usize,
    /// Focal length as a multiple of the image width.
    pub focal_scale: f64,
    pub radius: f64,
    pub arc_deg: f64,
    /// Peak camera elevation. Views weave above and below the equator; the
    /// two ends of the arc sit on it.
    pub elevation_deg: f64,
    /// Ground-truth radial coefficients shared by every view.
    pub radial: [f64; 2],
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            cameras: 20,
            width: 32,
            height: 32,
            blobs: 5,
            grid: 24,
            samples: 48,
            focal_scale: 1.1,
            radius: 4.0,
            arc_deg: 60.0,
            elevation_deg: 12.0,
            radial: [0.0; 2],
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cameras < 2 {
            return Err(Error::Invalid("a scene needs at least 2 cameras".into()));
        }
        if self.width < 8 || self.height < 8 {
            return Err(Error::Invalid("scene images must be at least 8x8".into()));
        }
        if self.grid < 2 || self.samples < 2 {
            return Err(Error::Invalid("grid and samples must be at least 2".into()));
        }
        if !(self.radius > 2.0) {
            return Err(Error::Invalid("camera radius must exceed the scene diagonal".into()));
        }
        Ok(())
    }

    /// Depth range covering the scene cube from every camera on the arc.
    pub fn sampling(&self) -> SamplingSpec {
        let half_diag = 3f64.sqrt();
        SamplingSpec {
            near: self.radius - half_diag,
            far: self.radius + half_diag,
            samples: self.samples,
            stratified: false,
            seed: self.seed,
        }
    }

    pub fn to_meta(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "cameras={}", self.cameras);
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "height={}", self.height);
        let _ = writeln!(s, "blobs={}", self.blobs);
        let _ = writeln!(s, "grid={}", self.grid);
        let _ = writeln!(s, "samples={}", self.samples);
        let _ = writeln!(s, "focal_scale={:?}", self.focal_scale);
        let _ = writeln!(s, "radius={:?}", self.radius);
        let _ = writeln!(s, "arc_deg={:?}", self.arc_deg);
        let _ = writeln!(s, "elevation_deg={:?}", self.elevation_deg);
        let _ = writeln!(s, "radial={:?} {:?}", self.radial[0], self.radial[1]);
        s
    }

    pub fn from_meta(path: &Path, text: &str) -> Result<SceneSpec> {
        let kv = parse_key_values(path, text)?;
        let mut spec = SceneSpec::default();
        for (key, (line, value)) in &kv {
            let bad = |what: &str| Error::parse(path, *line, format!("{key}: expected {what}, got {value:?}"));
            let int = || value.parse::<usize>().map_err(|_| bad("an integer"));
            let float = || {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad("a finite number"))
            };
            match key.as_str() {
                "seed" => spec.seed = value.parse().map_err(|_| bad("an integer"))?,
                "cameras" => spec.cameras = int()?,
                "width" => spec.width = int()?,
                "height" => spec.height = int()?,
                "blobs" => spec.blobs = int()?,
                "grid" => spec.grid = int()?,
                "samples" => spec.samples = int()?,
                "focal_scale" => spec.focal_scale = float()?,
                "radius" => spec.radius = float()?,
                "arc_deg" => spec.arc_deg = float()?,
                "elevation_deg" => spec.elevation_deg = float()?,
                "radial" => {
                    let v: Vec<f64> = value
                        .split_whitespace()
                        .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
                        .collect::<Option<_>>()
                        .ok_or_else(|| bad("two numbers"))?;
                    if v.len() != 2 {
                        return Err(bad("two numbers"));
                    }
                    spec.radial = [v[0], v[1]];
                }
                _ => return Err(Error::parse(path, *line, format!("unknown key {key:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
/// Returns each key with its line number; duplicate keys are an error.
pub fn parse_key_values(path: &Path, text: &str) -> Result<BTreeMap<String, (usize, String)>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, idx + 1, "expected key=value"))?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), (idx + 1, v.trim().to_string())).is_some() {
            return Err(Error::parse(path, idx + 1, format!("duplicate key {k:?}")));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
struct Blob {
    center: V3,
    radius: f64,
    peak: f64,
    color: V3,
    stripe: V3,
    phase: f64,
}

/// Ground-truth density and color at `x` (before rasterization).
fn blob_field(blobs: &[Blob], x: V3) -> (f64, V3) {
    let window: f64 = x
        .iter()
        .map(|&c| {
            let u = ((0.95 - c.abs()) / 0.2).clamp(0.0, 1.0);
            u * u * (3.0 - 2.0 * u)
        })
        .product();
    let mut density = 0.0;
    let mut color = [0.0; 3];
    let mut wsum = 0.0;
    for b in blobs {
        let d2: f64 = (0..3).map(|k| (x[k] - b.center[k]).powi(2)).sum();
        let w = (-d2 / (2.0 * b.radius * b.radius)).exp();
        density += b.peak * w;
        let s = (b.stripe[0] * x[0] + b.stripe[1] * x[1] + b.stripe[2] * x[2] + b.phase).sin();
        for k in 0..3 {
            color[k] += w * (b.color[k] + 0.25 * s * if k == 1 { -1.0 } else { 1.0 });
        }
        wsum += w;
    }
    let color = if wsum > 0.0 {
        color.map(|c| (c / wsum).clamp(0.02, 0.98))
    } else {
        [0.5; 3]
    };
    (density * window, color)
}

/// Camera on the arc looking at the origin. Image `y` points down.
pub fn look_at(width: usize, height: usize, focal: f64, position: V3) -> CameraParams {
    let n = norm(position);
    let z = [-position[0] / n, -position[1] / n, -position[2] / n];
    let up = [0.0, -1.0, 0.0];
    let x = cross(z, up);
    let xn = norm(x);
    let x = [x[0] / xn, x[1] / xn, x[2] / xn];
    let y = cross(z, x);
    let r = [[x[0], y[0], z[0]], [x[1], y[1], z[1]], [x[2], y[2], z[2]]];
    CameraParams::pinhole(
        width,
        height,
        [focal, focal],
        [width as f64 / 2.0, height as f64 / 2.0],
        &r,
        position,
    )
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub field: RadianceField,
    pub cameras: Vec<CameraParams>,
    pub images: Vec<ImageBuffer>,
}

impl SyntheticScene {
    pub fn sampling(&self) -> SamplingSpec {
        self.spec.sampling()
    }
}

pub fn make_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, &[1]));
    let blobs: Vec<Blob> = (0..spec.blobs)
        .map(|_| {
            let center = std::array::from_fn(|_| rng.random_range(-0.45..0.45));
            let color = std::array::from_fn(|_| rng.random_range(0.15..0.85));
            let stripe = std::array::from_fn(|_| rng.random_range(-9.0..9.0));
            Blob {
                center,
                radius: rng.random_range(0.18..0.3),
                peak: rng.random_range(6.0..14.0),
                color,
                stripe,
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            }
        })
        .collect();

    let n = spec.grid;
    let mut field = RadianceField::constant([n; 3], Aabb::cube(1.0), 0.0)?;
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let (density, color) = blob_field(&blobs, field.voxel_center(i, j, k));
                let idx = field.voxel_index(i, j, k) * 4;
                field.data[idx] = softplus_inv(density.max(1e-3));
                for c in 0..3 {
                    field.data[idx + 1 + c] = logit(color[c]);
                }
            }
        }
    }

    let focal = spec.focal_scale * spec.width as f64;
    let m = spec.cameras;
    let cameras: Vec<CameraParams> = (0..m)
        .map(|v| {
            let u = v as f64 / (m - 1) as f64;
            let az = (u - 0.5) * spec.arc_deg.to_radians();
            let el = spec.elevation_deg.to_radians() * (2.0 * std::f64::consts::TAU * u).sin();
            let dir = [az.sin() * el.cos(), -el.sin(), -az.cos() * el.cos()];
            let mut cam = look_at(spec.width, spec.height, focal, dir.map(|d| d * spec.radius));
            cam.radial.k0 = spec.radial;
            cam
        })
        .collect();

    let sampling = spec.sampling();
    let images = cameras
        .iter()
        .map(|c| render_image(&field, c, &sampling))
        .collect::<Result<_>>()?;
    Ok(SyntheticScene {
        spec: spec.clone(),
        field,
        cameras,
        images,
    })
}

/// Camera pairs whose optical axes are within `max_angle_deg`.
pub fn nearby_pairs(cameras: &[CameraParams], max_angle_deg: f64) -> Result<Vec<(usize, usize)>> {
    let axes: Vec<V3> = cameras.iter().map(|c| c.optical_axis()).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for a in 0..axes.len() {
        for b in a + 1..axes.len() {
            if crate::math::dot(axes[a], axes[b]).clamp(-1.0, 1.0).acos().to_degrees() <= max_angle_deg {
                out.push((a, b));
            }
        }
    }
    Ok(out)
}

/// Density above which a sampled point counts as surface.
pub const SURFACE_DENSITY: f64 = 1.0;

/// Exact correspondences: points of the ground-truth field with density above
/// [`SURFACE_DENSITY`], projected into both views of each pair. Every emitted
/// correspondence has a projected ray distance below `1e-8` on the
/// ground-truth cameras before `pixel_noise` (Gaussian, pixels) is added.
pub fn gen_correspondences(
    scene: &SyntheticScene,
    pairs: &[(usize, usize)],
    count: usize,
    pixel_noise: f64,
    seed: u64,
) -> Result<Vec<Correspondence>> {
    let cams = &scene.cameras;
    let mut out = Vec::with_capacity(pairs.len() * count);
    for (pi, &(a, b)) in pairs.iter().enumerate() {
        if a >= cams.len() || b >= cams.len() || a == b {
            return Err(Error::Invalid(format!("no camera pair ({a}, {b})")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[2, pi as u64]));
        let noise = Normal::new(0.0, pixel_noise.max(0.0)).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut found = 0;
        let (lo, hi) = (scene.field.bounds.min, scene.field.bounds.max);
        for _ in 0..count * 100 {
            if found == count {
                break;
            }
            let x: V3 = std::array::from_fn(|k| rng.random_range(lo[k]..hi[k]));
            if scene.field.query(x).density <= SURFACE_DENSITY {
                continue;
            }
            let (Ok(pa), Ok(pb)) = (cams[a].project(x), cams[b].project(x)) else {
                continue;
            };
            let inside = |p: [f64; 2], c: &CameraParams| {
                p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= c.width as f64 && p[1] <= c.height as f64
            };
            if !inside(pa, &cams[a]) || !inside(pb, &cams[b]) {
                continue;
            }
            let corr = Correspondence {
                cam_a: a,
                cam_b: b,
                p_a: pa,
                p_b: pb,
            };
            match prd_values(cams, &[corr], f64::MAX)?[0] {
                Some(d) if d < 1e-8 => {}
                _ => continue,
            }
            let corr = if pixel_noise > 0.0 {
                let jitter = |p: [f64; 2], c: &CameraParams, rng: &mut ChaCha8Rng| {
                    [
                        (p[0] + noise.sample(rng)).clamp(0.0, c.width as f64),
                        (p[1] + noise.sample(rng)).clamp(0.0, c.height as f64),
                    ]
                };
                Correspondence {
                    p_a: jitter(pa, &cams[a], &mut rng),
                    p_b: jitter(pb, &cams[b], &mut rng),
                    ..corr
                }
            } else {
                corr
            };
            out.push(corr);
            found += 1;
        }
        if found < count {
            return Err(Error::InsufficientGeometry { found, wanted: count });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NoiseSpec {
    /// Multiplicative focal noise in percent (`f·(1 + N/100)`).
    pub focal_pct: f64,
    /// Translation noise range: each component gets `U(−α, α)`.
    pub trans_range: f64,
    /// Rotation noise range in degrees.
    pub rot_range_deg: f64,
    pub seed: u64,
    /// View whose extrinsics are left exact (the gauge anchor).
    pub anchor: Option<usize>,
}

/// Perturbs the frozen initializations (`f`, `a₀`, `t₀`); residuals are not
/// touched, so zeroing the injected deltas restores the input.
pub fn inject_noise(cameras: &[CameraParams], spec: &NoiseSpec) -> Result<Vec<CameraParams>> {
    if spec.focal_pct < 0.0 || spec.trans_range < 0.0 || spec.rot_range_deg < 0.0 {
        return Err(Error::Invalid("noise ranges must be non-negative".into()));
    }
    cameras
        .iter()
        .enumerate()
        .map(|(v, cam)| {
            let mut out = cam.clone();
            if spec.focal_pct != 0.0 {
                let s = 1.0 + spec.focal_pct / 100.0;
                out.intrinsics.f = [cam.intrinsics.f[0] * s, cam.intrinsics.f[1] * s];
            }
            if spec.anchor == Some(v) {
                return Ok(out);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, &[3, v as u64]));
            if spec.trans_range > 0.0 {
                for k in 0..3 {
                    out.extrinsics.t0[k] += rng.random_range(-spec.trans_range..=spec.trans_range);
                }
            }
            if spec.rot_range_deg > 0.0 {
                let axis: V3 = loop {
                    let a: V3 = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                    if norm(a) > 1e-6 {
                        break a;
                    }
                };
                let angle = rng.random_range(-spec.rot_range_deg..=spec.rot_range_deg).to_radians();
                let r0 = crate::camera::rotation_from_6vec(&cam.extrinsics.a0)?;
                let r = mat_mul(&r0, &axis_angle(axis, angle));
                out.extrinsics = Extrinsics {
                    a0: Extrinsics::from_rotation(&r, out.extrinsics.t0).a0,
                    ..out.extrinsics
                };
            }
            Ok(out)
        })
        .collect()
}

/// On-disk scene: `cameras.txt`, `images/####.ppm` (plus `.pfm` with the
/// float values), `corrs.txt`, `field.rfg` and `meta.txt`.
#[derive(Clone, Debug)]
pub struct SceneBundle {
    pub spec: SceneSpec,
    pub field: RadianceField,
    pub cameras: Vec<CameraParams>,
    pub images: Vec<ImageBuffer>,
    pub corrs: Vec<Correspondence>,
}

fn image_path(dir: &Path, v: usize, ext: &str) -> PathBuf {
    dir.join("images").join(format!("{v:04}.{ext}"))
}

pub fn write_scene(dir: &Path, scene: &SyntheticScene, corrs: &[Correspondence]) -> Result<()> {
    std::fs::create_dir_all(dir.join("images")).map_err(|e| Error::io(dir, e))?;
    write_cameras(&dir.join("cameras.txt"), &scene.cameras)?;
    for (v, img) in scene.images.iter().enumerate() {
        write_image(&image_path(dir, v, "ppm"), img)?;
        write_image(&image_path(dir, v, "pfm"), img)?;
    }
    write_correspondences(&dir.join("corrs.txt"), corrs)?;
    write_field(&dir.join("field.rfg"), &scene.field)?;
    write_atomic(&dir.join("meta.txt"), scene.spec.to_meta().as_bytes())
}

/// Loads a bundle, preferring the `.pfm` image of each view.
pub fn read_scene(dir: &Path) -> Result<SceneBundle> {
    let meta_path = dir.join("meta.txt");
    let meta = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let spec = SceneSpec::from_meta(&meta_path, &meta)?;
    let cameras = read_cameras(&dir.join("cameras.txt"))?;
    let images = (0..cameras.len())
        .map(|v| {
            let pfm = image_path(dir, v, "pfm");
            if pfm.exists() {
                read_image(&pfm)
            } else {
                read_image(&image_path(dir, v, "ppm"))
            }
        })
        .collect::<Result<_>>()?;
    let corrs_path = dir.join("corrs.txt");
    let corrs = if corrs_path.exists() {
        read_correspondences(&corrs_path)?
    } else {
        Vec::new()
    };
    Ok(SceneBundle {
        spec,
        field: read_field(&dir.join("field.rfg"))?,
        cameras,
        images,
        corrs,
    })
}
