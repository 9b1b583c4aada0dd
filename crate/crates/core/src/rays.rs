//! Closest points between rays, the projected ray distance, and the
//! chirality filter.

use std::path::Path;

use crate::camera::{slots, CameraGrad, CameraParams, CameraVars, Ray, RaxelStencil};
use crate::diff::{Jet, Scalar};
use crate::error::{Error, Result};
use crate::math::{cross, dot, norm_sq, safe_sqrt, sub, V3};

/// Rays whose squared direction cross product falls below this are parallel.
pub const PARALLEL_EPS: f64 = 1e-12;

/// Derivative slots of a two-camera evaluation: camera A then camera B.
pub const PAIR_SLOTS: usize = 2 * slots::COUNT;
pub type PairJet = Jet<PAIR_SLOTS>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub cam_a: usize,
    pub cam_b: usize,
    pub p_a: [f64; 2],
    pub p_b: [f64; 2],
}

#[derive(Clone, Copy, Debug)]
pub struct RayPair<S = f64> {
    pub ray_a: Ray<S>,
    pub ray_b: Ray<S>,
    pub t_a: S,
    pub t_b: S,
    pub x_a: V3<S>,
    pub x_b: V3<S>,
}

/// Mutually closest points of two (infinite) lines.
pub fn closest_points<S: Scalar>(ray_a: &Ray<S>, ray_b: &Ray<S>) -> Result<RayPair<S>> {
    let c = cross(ray_a.dir, ray_b.dir);
    let c2 = norm_sq(c);
    if !(c2.value() >= PARALLEL_EPS) {
        return Err(Error::ParallelRays);
    }
    // Origin difference taken B − A: with A − B (as the formula is usually
    // quoted) both parameters come out with the wrong sign.
    let w = sub(ray_b.origin, ray_a.origin);
    let t_b = dot(cross(w, ray_a.dir), c) / c2;
    let t_a = dot(cross(w, ray_b.dir), c) / c2;
    Ok(RayPair {
        ray_a: *ray_a,
        ray_b: *ray_b,
        t_a,
        t_b,
        x_a: ray_a.at(t_a),
        x_b: ray_b.at(t_b),
    })
}

/// Length of the common perpendicular of two lines.
pub fn ray_distance<S: Scalar>(ray_a: &Ray<S>, ray_b: &Ray<S>) -> Result<S> {
    let c = cross(ray_a.dir, ray_b.dir);
    let c2 = norm_sq(c);
    if !(c2.value() >= PARALLEL_EPS) {
        return Err(Error::ParallelRays);
    }
    let w = sub(ray_a.origin, ray_b.origin);
    Ok(dot(w, c).abs() / c2.sqrt())
}

/// True when each closest point lies in front of the *other* camera.
pub fn chirality_valid(cam_a: &CameraParams, cam_b: &CameraParams, x_a: V3, x_b: V3) -> Result<bool> {
    Ok(cam_a.world_to_camera(x_b)?[2] > 0.0 && cam_b.world_to_camera(x_a)?[2] > 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkipReason {
    Parallel,
    Chirality,
    Projection,
    Threshold,
}

/// Projected ray distance of one correspondence, or why it was skipped.
#[derive(Clone, Debug)]
pub enum PrdOutcome<S> {
    Valid {
        distance: S,
        stencil_a: RaxelStencil,
        stencil_b: RaxelStencil,
    },
    Skipped(SkipReason),
}

impl<S: Scalar> PrdOutcome<S> {
    pub fn distance(&self) -> Option<f64> {
        match self {
            PrdOutcome::Valid { distance, .. } => Some(distance.value()),
            PrdOutcome::Skipped(_) => None,
        }
    }
}

/// Generic core of [`projected_ray_distance`]. `vars_a` / `vars_b` decide
/// which slots carry derivatives; errors other than a broken camera map to
/// `Skipped`.
pub fn projected_ray_distance_with<S: Scalar>(
    cam_a: &CameraParams,
    vars_a: &CameraVars<S>,
    cam_b: &CameraParams,
    vars_b: &CameraVars<S>,
    corr: &Correspondence,
    eta: f64,
) -> Result<PrdOutcome<S>> {
    let (ray_a, stencil_a) = cam_a.unproject_with(vars_a, corr.p_a)?;
    let (ray_b, stencil_b) = cam_b.unproject_with(vars_b, corr.p_b)?;
    let pair = match closest_points(&ray_a, &ray_b) {
        Ok(p) => p,
        Err(Error::ParallelRays) => return Ok(PrdOutcome::Skipped(SkipReason::Parallel)),
        Err(e) => return Err(e),
    };
    let x_a = crate::math::value3(&pair.x_a);
    let x_b = crate::math::value3(&pair.x_b);
    if !chirality_valid(cam_a, cam_b, x_a, x_b)? {
        return Ok(PrdOutcome::Skipped(SkipReason::Chirality));
    }
    let (qa, qb) = match (cam_a.project_with(vars_a, pair.x_b), cam_b.project_with(vars_b, pair.x_a)) {
        (Ok(qa), Ok(qb)) => (qa, qb),
        (Err(Error::BehindCamera { .. } | Error::NonConvergent { .. }), _)
        | (_, Err(Error::BehindCamera { .. } | Error::NonConvergent { .. })) => {
            return Ok(PrdOutcome::Skipped(SkipReason::Projection))
        }
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let ea = [qa[0] - corr.p_a[0], qa[1] - corr.p_a[1]];
    let eb = [qb[0] - corr.p_b[0], qb[1] - corr.p_b[1]];
    let da = safe_sqrt(ea[0] * ea[0] + ea[1] * ea[1]);
    let db = safe_sqrt(eb[0] * eb[0] + eb[1] * eb[1]);
    let distance = (da + db) * 0.5;
    if !(distance.value() <= eta) {
        return Ok(PrdOutcome::Skipped(SkipReason::Threshold));
    }
    Ok(PrdOutcome::Valid {
        distance,
        stencil_a,
        stencil_b,
    })
}

/// Projected ray distance (pixels) with partials w.r.t. both cameras'
/// residuals: slots `0..39` belong to camera A, `39..78` to camera B.
pub fn projected_ray_distance(
    cam_a: &CameraParams,
    cam_b: &CameraParams,
    corr: &Correspondence,
    eta: f64,
) -> Result<PrdOutcome<PairJet>> {
    let va = cam_a.vars::<PairJet>(0)?;
    let vb = cam_b.vars::<PairJet>(slots::COUNT)?;
    projected_ray_distance_with(cam_a, &va, cam_b, &vb, corr, eta)
}

/// Mean projected ray distance over valid correspondences.
#[derive(Clone, Debug)]
pub struct PrdLoss {
    pub value: f64,
    pub valid: usize,
    pub total: usize,
    /// One entry per camera; zero for cameras not referenced.
    pub grads: Vec<CameraGrad>,
}

/// Per-correspondence distances (`None` = skipped), without derivatives.
pub fn prd_values(cameras: &[CameraParams], corrs: &[Correspondence], eta: f64) -> Result<Vec<Option<f64>>> {
    let vars: Vec<CameraVars<f64>> = cameras.iter().map(|c| c.vars(0)).collect::<Result<_>>()?;
    corrs
        .iter()
        .map(|c| {
            check_indices(cameras.len(), c)?;
            Ok(projected_ray_distance_with(
                &cameras[c.cam_a],
                &vars[c.cam_a],
                &cameras[c.cam_b],
                &vars[c.cam_b],
                c,
                eta,
            )?
            .distance())
        })
        .collect()
}

fn check_indices(n: usize, c: &Correspondence) -> Result<()> {
    if c.cam_a >= n || c.cam_b >= n || c.cam_a == c.cam_b {
        return Err(Error::Invalid(format!(
            "correspondence references cameras ({}, {}) of {n}",
            c.cam_a, c.cam_b
        )));
    }
    Ok(())
}

/// Mean of `d_π` over correspondences that pass every validity gate and the
/// `eta` threshold. With none valid, the loss is zero with zero gradient.
/// The reduction runs in index order.
pub fn prd_loss(cameras: &[CameraParams], corrs: &[Correspondence], eta: f64) -> Result<PrdLoss> {
    if !(eta > 0.0) {
        return Err(Error::Invalid(format!("eta must be positive, got {eta}")));
    }
    let mut grads: Vec<CameraGrad> = cameras.iter().map(CameraGrad::zeros_like).collect();
    let mut sum = 0.0;
    let mut valid = 0usize;
    let mut terms = Vec::new();
    for corr in corrs {
        check_indices(cameras.len(), corr)?;
        let out = projected_ray_distance(&cameras[corr.cam_a], &cameras[corr.cam_b], corr, eta)?;
        if let PrdOutcome::Valid {
            distance,
            stencil_a,
            stencil_b,
        } = out
        {
            sum += distance.v;
            valid += 1;
            terms.push((corr.cam_a, corr.cam_b, distance, stencil_a, stencil_b));
        }
    }
    if valid == 0 {
        return Ok(PrdLoss {
            value: 0.0,
            valid: 0,
            total: corrs.len(),
            grads,
        });
    }
    let inv = 1.0 / valid as f64;
    for (a, b, d, sa, sb) in &terms {
        grads[*a].accumulate(&d.d, 0, Some(sa), inv);
        grads[*b].accumulate(&d.d, slots::COUNT, Some(sb), inv);
    }
    Ok(PrdLoss {
        value: sum / valid as f64,
        valid,
        total: corrs.len(),
        grads,
    })
}

/// Parses `camA camB xA yA xB yB` lines; `#` starts a comment line.
pub fn parse_correspondences(path: &Path, text: &str) -> Result<Vec<Correspondence>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 6 {
            return Err(Error::parse(path, idx + 1, format!("expected 6 fields, found {}", toks.len())));
        }
        let idx_of = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| Error::parse(path, idx + 1, format!("invalid camera index `{t}`")))
        };
        let mut px = [0.0; 4];
        for (v, t) in px.iter_mut().zip(&toks[2..]) {
            *v = t
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, idx + 1, format!("invalid coordinate `{t}`")))?;
        }
        let corr = Correspondence {
            cam_a: idx_of(toks[0])?,
            cam_b: idx_of(toks[1])?,
            p_a: [px[0], px[1]],
            p_b: [px[2], px[3]],
        };
        if corr.cam_a == corr.cam_b {
            return Err(Error::parse(path, idx + 1, "correspondence within a single camera"));
        }
        out.push(corr);
    }
    Ok(out)
}

pub fn format_correspondences(corrs: &[Correspondence]) -> String {
    let mut s = String::from("# camA camB xA yA xB yB\n");
    for c in corrs {
        s.push_str(&format!(
            "{} {} {:?} {:?} {:?} {:?}\n",
            c.cam_a, c.cam_b, c.p_a[0], c.p_a[1], c.p_b[0], c.p_b[1]
        ));
    }
    s
}

pub fn read_correspondences(path: &Path) -> Result<Vec<Correspondence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_correspondences(path, &text)
}

pub fn write_correspondences(path: &Path, corrs: &[Correspondence]) -> Result<()> {
    crate::io::write_atomic(path, format_correspondences(corrs).as_bytes())
}
