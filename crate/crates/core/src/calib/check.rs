//! Finite-difference audit of every analytic gradient used in training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{CameraGrad, CameraParams};
use crate::diff::grad_check;
use crate::error::{Error, Result};
use crate::field::{photometric_loss, PixelSample, RadianceField, SamplingSpec};
use crate::image::ImageBuffer;
use crate::rays::{prd_loss, Correspondence};
use crate::synth::stream_seed;

/// Central-difference step used by the suite.
pub const FD_EPS: f64 = 1e-5;

/// Camera parameter blocks, in the order reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CamBlock {
    Focal,
    Principal,
    Rotation,
    Translation,
    Radial,
    RaxelDir,
    RaxelOrigin,
}

impl CamBlock {
    pub const ALL: [CamBlock; 7] = [
        CamBlock::Focal,
        CamBlock::Principal,
        CamBlock::Rotation,
        CamBlock::Translation,
        CamBlock::Radial,
        CamBlock::RaxelDir,
        CamBlock::RaxelOrigin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CamBlock::Focal => "df",
            CamBlock::Principal => "dc",
            CamBlock::Rotation => "da",
            CamBlock::Translation => "dt",
            CamBlock::Radial => "dk",
            CamBlock::RaxelDir => "zd",
            CamBlock::RaxelOrigin => "zo",
        }
    }

    fn len(self, cam: &CameraParams) -> usize {
        match self {
            CamBlock::Focal | CamBlock::Principal | CamBlock::Radial => 2,
            CamBlock::Rotation => 6,
            CamBlock::Translation => 3,
            CamBlock::RaxelDir | CamBlock::RaxelOrigin => 3 * cam.raxel.len(),
        }
    }

    fn slot(self, cam: &mut CameraParams, i: usize) -> &mut f64 {
        match self {
            CamBlock::Focal => &mut cam.intrinsics.df[i],
            CamBlock::Principal => &mut cam.intrinsics.dc[i],
            CamBlock::Rotation => &mut cam.extrinsics.da[i],
            CamBlock::Translation => &mut cam.extrinsics.dt[i],
            CamBlock::Radial => &mut cam.radial.dk[i],
            CamBlock::RaxelDir => &mut cam.raxel.dir[i / 3][i % 3],
            CamBlock::RaxelOrigin => &mut cam.raxel.origin[i / 3][i % 3],
        }
    }

    fn grad(self, g: &CameraGrad, i: usize) -> f64 {
        match self {
            CamBlock::Focal => g.df[i],
            CamBlock::Principal => g.dc[i],
            CamBlock::Rotation => g.da[i],
            CamBlock::Translation => g.dt[i],
            CamBlock::Radial => g.dk[i],
            CamBlock::RaxelDir => g.raxel_dir[i / 3][i % 3],
            CamBlock::RaxelOrigin => g.raxel_origin[i / 3][i % 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    /// `loss/block`, e.g. `photometric/da` or `prd/field`.
    pub label: String,
    pub probes: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradReport {
    pub lines: Vec<CheckLine>,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.lines.iter().map(|l| l.max_rel_err).fold(0.0, f64::max)
    }
}

/// Indices of the `k` largest `|g|`, skipping exact zeros.
fn top_k(g: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
    idx.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub struct SuiteInput<'a> {
    pub field: &'a RadianceField,
    pub cameras: &'a [CameraParams],
    pub images: &'a [ImageBuffer],
    pub corrs: &'a [Correspondence],
    pub sampling: &'a SamplingSpec,
    pub seed: u64,
}

/// Compares analytic and central-difference gradients of the photometric
/// loss (one view, field and every camera block) and of the PRD loss (both
/// cameras of the first correspondence pair). Each block is probed at its
/// `probes` largest-magnitude partials, where the FD estimate is best
/// conditioned.
pub fn gradient_suite(input: &SuiteInput, batch: usize, probes: usize) -> Result<GradReport> {
    let SuiteInput {
        field,
        cameras,
        images,
        corrs,
        sampling,
        seed,
    } = *input;
    if cameras.is_empty() || images.len() != cameras.len() {
        return Err(Error::Invalid("gradient suite needs one image per camera".into()));
    }
    let mut report = GradReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[20]));
    let view = rng.random_range(0..cameras.len());
    let cam = &cameras[view];
    let img = &images[view];
    let pixels: Vec<PixelSample> = (0..batch)
        .map(|k| {
            let (i, j) = (rng.random_range(0..img.width), rng.random_range(0..img.height));
            PixelSample {
                p: [i as f64 + 0.5, j as f64 + 0.5],
                target: img.get(i, j),
                key: k as u64,
            }
        })
        .collect();

    let base = photometric_loss(field, cam, &pixels, sampling, true)?;
    let idx = top_k(&base.field_grad, probes);
    let mut probe_field = field.clone();
    let err = grad_check(
        |x| {
            probe_field.data.copy_from_slice(x);
            Ok(photometric_loss(&probe_field, cam, &pixels, sampling, false)?.value)
        },
        &field.data,
        &base.field_grad,
        &idx,
        FD_EPS,
    )?;
    report.lines.push(CheckLine {
        label: "photometric/field".into(),
        probes: idx.len(),
        max_rel_err: err,
    });
    for block in CamBlock::ALL {
        let line = check_camera_block(cam, &base.camera_grad, block, probes, "photometric", |c| {
            Ok(photometric_loss(field, c, &pixels, sampling, false)?.value)
        })?;
        report.lines.push(line);
    }

    let Some(first) = corrs.first() else {
        return Ok(report);
    };
    let (a, b) = (first.cam_a, first.cam_b);
    let pair: Vec<Correspondence> = corrs
        .iter()
        .filter(|c| (c.cam_a, c.cam_b) == (a, b))
        .copied()
        .collect();
    let eta = 5.0;
    let prd = prd_loss(cameras, &pair, eta)?;
    for (v, tag) in [(a, "prd/a"), (b, "prd/b")] {
        for block in CamBlock::ALL {
            let line = check_camera_block(&cameras[v], &prd.grads[v], block, probes, tag, |c| {
                let mut cams = cameras.to_vec();
                cams[v] = c.clone();
                Ok(prd_loss(&cams, &pair, eta)?.value)
            })?;
            report.lines.push(line);
        }
    }
    Ok(report)
}

fn check_camera_block(
    cam: &CameraParams,
    grad: &CameraGrad,
    block: CamBlock,
    probes: usize,
    tag: &str,
    mut loss: impl FnMut(&CameraParams) -> Result<f64>,
) -> Result<CheckLine> {
    let n = block.len(cam);
    let mut probe = cam.clone();
    let x: Vec<f64> = (0..n).map(|i| *block.slot(&mut probe, i)).collect();
    let analytic: Vec<f64> = (0..n).map(|i| block.grad(grad, i)).collect();
    let idx = top_k(&analytic, probes);
    let err = grad_check(
        |v| {
            for (i, &val) in v.iter().enumerate() {
                *block.slot(&mut probe, i) = val;
            }
            loss(&probe)
        },
        &x,
        &analytic,
        &idx,
        FD_EPS,
    )?;
    Ok(CheckLine {
        label: format!("{tag}/{}", block.name()),
        probes: idx.len(),
        max_rel_err: err,
    })
}
