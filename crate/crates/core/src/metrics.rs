//! Image quality and camera recovery metrics.

use crate::camera::CameraParams;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::math::{norm, rotation_angle_between, sub};

/// Reported for identical images, and the upper bound otherwise.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_dims(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.width != b.width || a.height != b.height || a.data.len() != b.data.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

pub fn mse(img: &ImageBuffer, reference: &ImageBuffer) -> Result<f64> {
    check_dims(img, reference)?;
    let sum: f64 = img
        .data
        .iter()
        .zip(&reference.data)
        .map(|(&a, &b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok(sum / img.data.len().max(1) as f64)
}

/// `10·log₁₀(1 / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(img: &ImageBuffer, reference: &ImageBuffer) -> Result<f64> {
    let m = mse(img, reference)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * m.log10()).min(PSNR_CAP))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w: [f64; SSIM_WINDOW] = std::array::from_fn(|i| {
        let x = i as f64 - half;
        (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Mean SSIM over all valid 11×11 window positions (no padding), computed
/// per channel and averaged.
pub fn ssim(img: &ImageBuffer, reference: &ImageBuffer) -> Result<f64> {
    check_dims(img, reference)?;
    if img.width < SSIM_WINDOW || img.height < SSIM_WINDOW {
        return Err(Error::TooSmall {
            width: img.width,
            height: img.height,
        });
    }
    let g = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let (w, h) = (img.width, img.height);
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for ch in 0..3 {
        let x = |i: usize, j: usize| img.data[(j * w + i) * 3 + ch];
        let y = |i: usize, j: usize| reference.data[(j * w + i) * 3 + ch];
        let mut sum = 0.0;
        for oj in 0..oh {
            for oi in 0..ow {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dj in 0..SSIM_WINDOW {
                    for di in 0..SSIM_WINDOW {
                        let wt = g[di] * g[dj];
                        let (a, b) = (x(oi + di, oj + dj), y(oi + di, oj + dj));
                        mx += wt * a;
                        my += wt * b;
                        sxx += wt * a * a;
                        syy += wt * b * b;
                        sxy += wt * a * b;
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let cov = sxy - mx * my;
                sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
        total += sum / (ow * oh) as f64;
    }
    Ok(total / 3.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CameraError {
    /// Mean relative focal error over both axes, in percent.
    pub focal_pct: f64,
    pub rotation_deg: f64,
    pub translation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraErrorReport {
    pub per_camera: Vec<CameraError>,
    pub mean: CameraError,
}

pub fn camera_error(gt: &[CameraParams], est: &[CameraParams]) -> Result<CameraErrorReport> {
    if gt.len() != est.len() {
        return Err(Error::CountMismatch {
            gt: gt.len(),
            est: est.len(),
        });
    }
    let per_camera: Vec<CameraError> = gt
        .iter()
        .zip(est)
        .map(|(g, e)| {
            let fg = g.intrinsics.focal();
            let fe = e.intrinsics.focal();
            let focal_pct = 50.0 * ((fe[0] - fg[0]).abs() / fg[0] + (fe[1] - fg[1]).abs() / fg[1]);
            let rot = rotation_angle_between(&g.rotation()?, &e.rotation()?).to_degrees();
            Ok(CameraError {
                focal_pct,
                rotation_deg: rot,
                translation: norm(sub(e.center(), g.center())),
            })
        })
        .collect::<Result<_>>()?;
    let n = per_camera.len().max(1) as f64;
    let mut mean = CameraError::default();
    for c in &per_camera {
        mean.focal_pct += c.focal_pct / n;
        mean.rotation_deg += c.rotation_deg / n;
        mean.translation += c.translation / n;
    }
    Ok(CameraErrorReport { per_camera, mean })
}
