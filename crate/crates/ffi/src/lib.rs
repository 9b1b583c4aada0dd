//! C ABI over `raycal`.
//!
//! Every fallible call returns a [`RaycalStatus`]. On failure the message is
//! kept per thread and can be fetched with [`raycal_last_error_message`].
//! Handles are opaque, created by `*_read` and released by `*_free`; passing
//! NULL to a free function is a no-op.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use raycal::camera::{read_cameras, read_residuals, write_cameras, CameraParams};
use raycal::field::{read_field, render_image, RadianceField, SamplingSpec};
use raycal::metrics::camera_error;
use raycal::rays::{prd_values, Correspondence};
use raycal::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RaycalStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    NonFinite = 5,
    Geometry = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Camera list loaded from a camera file.
pub struct RaycalCameras {
    cams: Vec<CameraParams>,
}

/// Voxel radiance field loaded from a field file.
pub struct RaycalField {
    field: RadianceField,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RaycalCameraError {
    pub focal_pct: f64,
    pub rotation_deg: f64,
    pub translation: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(RaycalStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => RaycalStatus::Io,
            Error::Parse { .. } => RaycalStatus::Parse,
            Error::NonFinite(_) => RaycalStatus::NonFinite,
            Error::BehindCamera { .. }
            | Error::NonConvergent { .. }
            | Error::ParallelRays
            | Error::DegenerateRotation(_)
            | Error::InsufficientGeometry { .. } => RaycalStatus::Geometry,
            _ => RaycalStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RaycalStatus::NullPointer, format!("{what} is NULL"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(RaycalStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus last-error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RaycalStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RaycalStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RaycalStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn cams_ref<'a>(h: *const RaycalCameras) -> Result<&'a [CameraParams], Failure> {
    h.as_ref().map(|c| c.cams.as_slice()).ok_or_else(|| null("cameras"))
}

fn camera_at(cams: &[CameraParams], index: usize) -> Result<&CameraParams, Failure> {
    cams.get(index)
        .ok_or_else(|| invalid(format!("camera index {index} out of range ({} cameras)", cams.len())))
}

unsafe fn out_slice<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn in_array<const N: usize>(p: *const f64, what: &str) -> Result<[f64; N], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let mut a = [0.0; N];
    a.copy_from_slice(std::slice::from_raw_parts(p, N));
    Ok(a)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn raycal_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the last error message on this thread, including the
/// terminating NUL; 0 when there is none.
#[no_mangle]
pub extern "C" fn raycal_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes_with_nul().len()))
}

/// Copies the last error message (NUL-terminated) into `buf`. Returns the
/// number of bytes written excluding the NUL, 0 if there is no error, or -1
/// if `buf` is NULL or shorter than [`raycal_last_error_length`].
#[no_mangle]
pub unsafe extern "C" fn raycal_last_error_message(buf: *mut c_char, len: usize) -> isize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            return 0;
        };
        let bytes = msg.as_bytes_with_nul();
        if buf.is_null() || len < bytes.len() {
            return -1;
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, bytes.len());
        (bytes.len() - 1) as isize
    })
}

#[no_mangle]
pub extern "C" fn raycal_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Reads a camera file into a new handle stored in `*out`.
#[no_mangle]
pub unsafe extern "C" fn raycal_cameras_read(path: *const c_char, out: *mut *mut RaycalCameras) -> RaycalStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cams = read_cameras(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(RaycalCameras { cams }));
        Ok(())
    })
}

/// Loads learned residuals from a residual file into `cameras`.
#[no_mangle]
pub unsafe extern "C" fn raycal_cameras_read_residuals(
    cameras: *mut RaycalCameras,
    path: *const c_char,
) -> RaycalStatus {
    guard(|| {
        let h = cameras.as_mut().ok_or_else(|| null("cameras"))?;
        read_residuals(&path_arg(path, "path")?, &mut h.cams)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn raycal_cameras_write(cameras: *const RaycalCameras, path: *const c_char) -> RaycalStatus {
    guard(|| {
        write_cameras(&path_arg(path, "path")?, cams_ref(cameras)?)?;
        Ok(())
    })
}

/// Number of cameras; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn raycal_cameras_count(cameras: *const RaycalCameras) -> usize {
    cameras.as_ref().map_or(0, |c| c.cams.len())
}

#[no_mangle]
pub unsafe extern "C" fn raycal_camera_image_size(
    cameras: *const RaycalCameras,
    index: usize,
    width: *mut usize,
    height: *mut usize,
) -> RaycalStatus {
    guard(|| {
        let cam = camera_at(cams_ref(cameras)?, index)?;
        if width.is_null() || height.is_null() {
            return Err(null("width/height"));
        }
        *width = cam.width;
        *height = cam.height;
        Ok(())
    })
}

/// Projects world point `point[3]` into `pixel[2]` of camera `index`.
#[no_mangle]
pub unsafe extern "C" fn raycal_camera_project(
    cameras: *const RaycalCameras,
    index: usize,
    point: *const f64,
    pixel: *mut f64,
) -> RaycalStatus {
    guard(|| {
        let cam = camera_at(cams_ref(cameras)?, index)?;
        let x = in_array::<3>(point, "point")?;
        let out = out_slice(pixel, 2, "pixel")?;
        out.copy_from_slice(&cam.project(x)?);
        Ok(())
    })
}

/// World ray through `pixel[2]` of camera `index`. `dir` is not normalized.
#[no_mangle]
pub unsafe extern "C" fn raycal_camera_unproject(
    cameras: *const RaycalCameras,
    index: usize,
    pixel: *const f64,
    origin: *mut f64,
    dir: *mut f64,
) -> RaycalStatus {
    guard(|| {
        let cam = camera_at(cams_ref(cameras)?, index)?;
        let p = in_array::<2>(pixel, "pixel")?;
        let ray = cam.unproject(p)?;
        out_slice(origin, 3, "origin")?.copy_from_slice(&ray.origin);
        out_slice(dir, 3, "dir")?.copy_from_slice(&ray.dir);
        Ok(())
    })
}

/// Projected ray distance in pixels between `pixel_a` in camera `a` and
/// `pixel_b` in camera `b`. `*valid` is 0 when the pair is skipped (parallel
/// rays, failed chirality or distance above `eta`), in which case
/// `*distance` is left untouched.
#[no_mangle]
pub unsafe extern "C" fn raycal_projected_ray_distance(
    cameras: *const RaycalCameras,
    a: usize,
    b: usize,
    pixel_a: *const f64,
    pixel_b: *const f64,
    eta: f64,
    distance: *mut f64,
    valid: *mut c_int,
) -> RaycalStatus {
    guard(|| {
        let cams = cams_ref(cameras)?;
        camera_at(cams, a)?;
        camera_at(cams, b)?;
        if distance.is_null() || valid.is_null() {
            return Err(null("distance/valid"));
        }
        let corr = Correspondence {
            cam_a: a,
            cam_b: b,
            p_a: in_array::<2>(pixel_a, "pixel_a")?,
            p_b: in_array::<2>(pixel_b, "pixel_b")?,
        };
        match prd_values(cams, &[corr], eta)?[0] {
            Some(d) => {
                *distance = d;
                *valid = 1;
            }
            None => *valid = 0,
        }
        Ok(())
    })
}

/// Mean camera error of `estimate` against `truth`; `per_camera`, when not
/// NULL, receives one entry per camera (`len` must be at least the count).
#[no_mangle]
pub unsafe extern "C" fn raycal_camera_error(
    truth: *const RaycalCameras,
    estimate: *const RaycalCameras,
    mean: *mut RaycalCameraError,
    per_camera: *mut RaycalCameraError,
    len: usize,
) -> RaycalStatus {
    guard(|| {
        let report = camera_error(cams_ref(truth)?, cams_ref(estimate)?)?;
        let conv = |e: &raycal::metrics::CameraError| RaycalCameraError {
            focal_pct: e.focal_pct,
            rotation_deg: e.rotation_deg,
            translation: e.translation,
        };
        if mean.is_null() {
            return Err(null("mean"));
        }
        if !per_camera.is_null() {
            if len < report.per_camera.len() {
                return Err(Failure(
                    RaycalStatus::BufferTooSmall,
                    format!("per_camera holds {len}, need {}", report.per_camera.len()),
                ));
            }
            let out = std::slice::from_raw_parts_mut(per_camera, report.per_camera.len());
            for (o, e) in out.iter_mut().zip(&report.per_camera) {
                *o = conv(e);
            }
        }
        *mean = conv(&report.mean);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn raycal_cameras_free(cameras: *mut RaycalCameras) {
    if !cameras.is_null() {
        drop(Box::from_raw(cameras));
    }
}

#[no_mangle]
pub unsafe extern "C" fn raycal_field_read(path: *const c_char, out: *mut *mut RaycalField) -> RaycalStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let field = read_field(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(RaycalField { field }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn raycal_field_free(field: *mut RaycalField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Renders camera `index` into `rgb`, row-major with 3 values per pixel in
/// `[0, 1]`; `len` must be at least `3 * width * height`.
#[no_mangle]
pub unsafe extern "C" fn raycal_render(
    field: *const RaycalField,
    cameras: *const RaycalCameras,
    index: usize,
    near: f64,
    far: f64,
    samples: usize,
    rgb: *mut f64,
    len: usize,
) -> RaycalStatus {
    guard(|| {
        let field = &field.as_ref().ok_or_else(|| null("field"))?.field;
        let cam = camera_at(cams_ref(cameras)?, index)?;
        let need = 3 * cam.width * cam.height;
        if rgb.is_null() {
            return Err(null("rgb"));
        }
        if len < need {
            return Err(Failure(RaycalStatus::BufferTooSmall, format!("rgb holds {len}, need {need}")));
        }
        let spec = SamplingSpec {
            near,
            far,
            samples,
            stratified: false,
            seed: 0,
        };
        let img = render_image(field, cam, &spec)?;
        std::slice::from_raw_parts_mut(rgb, need).copy_from_slice(&img.data);
        Ok(())
    })
}

/// Runs the command-line tool with `argv[0..argc]` (including a program
/// name) and returns its exit code. Output goes to the process's stdout and
/// stderr.
#[no_mangle]
pub unsafe extern "C" fn raycal_run(argc: c_int, argv: *const *const c_char) -> c_int {
    let mut args = Vec::new();
    if argc > 0 {
        if argv.is_null() {
            set_error("argv is NULL".into());
            return raycal::cli::EXIT_USAGE;
        }
        for i in 0..argc as usize {
            let p = *argv.add(i);
            if p.is_null() {
                set_error(format!("argv[{i}] is NULL"));
                return raycal::cli::EXIT_USAGE;
            }
            args.push(CStr::from_ptr(p).to_string_lossy().into_owned());
        }
    }
    if args.is_empty() {
        args.push("raycal".into());
    }
    match catch_unwind(|| raycal::cli::run(args)) {
        Ok(code) => code,
        Err(_) => {
            set_error("panic in command".into());
            raycal::cli::EXIT_FAILURE
        }
    }
}
