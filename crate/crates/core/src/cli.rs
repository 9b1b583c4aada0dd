//! Command-line front end. [`run`] maps every outcome to an exit code.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::calib::{self, Config, GradReport, SuiteInput, TrainData, TrainState, CHECKPOINT_DIR};
use crate::camera::{read_cameras, read_residuals, write_cameras, write_residuals, CameraParams};
use crate::error::{Error, Result};
use crate::field::{read_field, render_image, write_field, RadianceField, SamplingSpec};
use crate::image::{read_image, write_image, ImageBuffer};
use crate::io::write_atomic;
use crate::metrics::{camera_error, psnr, ssim};
use crate::rays::prd_values;
use crate::synth::{
    gen_correspondences, inject_noise, make_scene, nearby_pairs, read_scene, write_scene, NoiseSpec, SceneSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;
/// `gradcheck` ran but a partial exceeded the tolerance.
pub const EXIT_CHECK_FAILED: i32 = 3;

pub const SYNOPSIS: &str = "usage: raycal <synth|calibrate|render|eval|gradcheck> [options]  (raycal help <command>)";

/// Name of the noisy starting cameras written by `synth`.
pub const INIT_CAMERAS: &str = "init_cameras.txt";
/// Gradcheck tolerance on the relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "raycal", version, about = "Self-calibrating camera model with a voxel radiance field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene bundle.
    Synth(SynthArgs),
    /// Jointly optimize the field and the cameras of a scene bundle.
    Calibrate(CalibrateArgs),
    /// Render a field through a camera file.
    Render(RenderArgs),
    /// Compare estimated cameras (and images) against ground truth.
    Eval(EvalArgs),
    /// Check analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    cameras: usize,
    #[arg(long, default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 32)]
    height: usize,
    #[arg(long, default_value_t = 5)]
    blobs: usize,
    #[arg(long, default_value_t = 24)]
    grid: usize,
    #[arg(long, default_value_t = 48)]
    samples: usize,
    /// Ground-truth radial coefficients `k1,k2`.
    #[arg(long, value_parser = parse_pair, default_value = "0,0")]
    radial: [f64; 2],
    /// Correspondences per camera pair.
    #[arg(long, default_value_t = 32)]
    corrs: usize,
    /// Largest optical-axis angle of a correspondence pair, degrees.
    #[arg(long, default_value_t = 30.0)]
    pair_angle: f64,
    /// Gaussian pixel noise added to correspondences.
    #[arg(long, default_value_t = 0.0)]
    pixel_noise: f64,
    /// Focal noise for the starting cameras, percent.
    #[arg(long, default_value_t = 0.0)]
    focal_noise: f64,
    /// Rotation noise range for the starting cameras, degrees.
    #[arg(long, default_value_t = 0.0)]
    rot_noise: f64,
    /// Translation noise range for the starting cameras.
    #[arg(long, default_value_t = 0.0)]
    trans_noise: f64,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Starting cameras; defaults to the bundle's init_cameras.txt, then cameras.txt.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<u64>,
    /// Any config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Continue from `<out>/checkpoint` when it exists.
    #[arg(long)]
    resume: bool,
    /// Print a progress line every N iterations (0 = quiet).
    #[arg(long, default_value_t = 0)]
    log_every: u64,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    field: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    #[arg(long)]
    residuals: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Scene bundle supplying the sampling range and reference images for
    /// error maps.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 48)]
    samples: usize,
    #[arg(long)]
    near: Option<f64>,
    #[arg(long)]
    far: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Ground-truth camera file or directory (scene bundle / calibrate output).
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    est: PathBuf,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Scene bundle; a small fresh scene is generated when absent.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Largest-magnitude partials probed per parameter block.
    #[arg(long, default_value_t = 3)]
    probes: usize,
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    match v.as_slice() {
        [a, b] if a.is_finite() && b.is_finite() => Ok([*a, *b]),
        _ => Err(format!("expected two finite numbers `a,b`, got {s:?}")),
    }
}

enum Failure {
    Usage(String),
    Run(Error),
    CheckFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    EXIT_OK
                }
                _ => {
                    eprintln!("{}", e.render().to_string().trim_end());
                    eprintln!("{SYNOPSIS}");
                    EXIT_USAGE
                }
            };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        eprintln!("{SYNOPSIS}");
        return EXIT_USAGE;
    }
    let outcome = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Render(a) => render(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("{SYNOPSIS}");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Invalid(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
        Err(Failure::CheckFailed) => EXIT_CHECK_FAILED,
    }
}

/// Caps the global pool at `RAYCAL_THREADS`; a later call is a no-op.
fn configure_threads() -> std::result::Result<(), String> {
    let Ok(v) = std::env::var("RAYCAL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("RAYCAL_THREADS must be a positive integer, got {v:?}"))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult {
    let spec = SceneSpec {
        seed: a.seed,
        cameras: a.cameras,
        width: a.width,
        height: a.height,
        blobs: a.blobs,
        grid: a.grid,
        samples: a.samples,
        radial: a.radial,
        ..SceneSpec::default()
    };
    let scene = make_scene(&spec)?;
    let pairs = nearby_pairs(&scene.cameras, a.pair_angle)?;
    let corrs = gen_correspondences(&scene, &pairs, a.corrs, a.pixel_noise, a.seed)?;
    write_scene(&a.out, &scene, &corrs)?;
    let noise = NoiseSpec {
        focal_pct: a.focal_noise,
        trans_range: a.trans_noise,
        rot_range_deg: a.rot_noise,
        seed: a.seed,
        anchor: Some(0),
    };
    write_cameras(&a.out.join(INIT_CAMERAS), &inject_noise(&scene.cameras, &noise)?)?;
    println!(
        "wrote {} views, {} correspondences over {} pairs to {}",
        scene.cameras.len(),
        corrs.len(),
        pairs.len(),
        a.out.display()
    );
    Ok(())
}

fn effective_config(a: &CalibrateArgs) -> std::result::Result<Config, Failure> {
    let mut cfg = match &a.config {
        Some(p) => Config::read(p)?,
        None => Config::default(),
    };
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())
            .map_err(|m| Failure::Usage(format!("--set {k}: {m}")))?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    if let Some(p) = &a.scene {
        cfg.scene = Some(p.clone());
    }
    if let Some(p) = &a.init {
        cfg.cameras = Some(p.clone());
    }
    if let Some(p) = &a.out {
        cfg.out = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn render_all(field: &RadianceField, cams: &[CameraParams], spec: &SamplingSpec) -> Result<Vec<ImageBuffer>> {
    cams.iter().map(|c| render_image(field, c, spec)).collect()
}

fn write_images(dir: &Path, images: &[ImageBuffer]) -> Result<()> {
    for (v, img) in images.iter().enumerate() {
        write_image(&dir.join(format!("{v:04}.ppm")), img)?;
        write_image(&dir.join(format!("{v:04}.pfm")), img)?;
    }
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> CliResult {
    let cfg = effective_config(&a)?;
    let scene_dir = cfg
        .scene
        .clone()
        .ok_or_else(|| Failure::Usage("calibrate needs --scene (or `scene=` in the config)".into()))?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Failure::Usage("calibrate needs --out (or `out=` in the config)".into()))?;
    let bundle = read_scene(&scene_dir)?;
    let init_path = match &cfg.cameras {
        Some(p) => p.clone(),
        None if scene_dir.join(INIT_CAMERAS).exists() => scene_dir.join(INIT_CAMERAS),
        None => scene_dir.join("cameras.txt"),
    };
    let sampling = SamplingSpec {
        samples: cfg.samples,
        stratified: cfg.stratified,
        seed: cfg.seed,
        ..bundle.spec.sampling()
    };
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_atomic(&out.join("config.txt"), cfg.to_text().as_bytes())?;

    let ckpt = out.join(CHECKPOINT_DIR);
    let state = if a.resume && ckpt.join("state.txt").exists() {
        let s = calib::read_checkpoint(&ckpt)?;
        println!("resuming at iteration {}", s.iter);
        s
    } else {
        let cams = read_cameras(&init_path)?;
        let field = RadianceField::constant([cfg.grid; 3], bundle.field.bounds.clone(), cfg.field_init)?;
        TrainState::new(field, cams, &cfg)?
    };
    let data = TrainData::new(bundle.images.clone(), bundle.corrs.clone(), sampling.clone())?;
    let log_every = a.log_every;
    let state = calib::calibrate(state, &data, &cfg, Some(&out), |r| {
        if log_every > 0 && (r.iter + 1) % log_every == 0 {
            let prd = r.prd.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into());
            println!("iter {:>6}  photometric {:.4e}  prd {prd}  [{}]", r.iter + 1, r.photometric, r.active);
        }
    })?;

    write_cameras(&out.join("cameras.txt"), &state.cameras)?;
    write_residuals(&out.join("residuals.txt"), &state.cameras)?;
    write_field(&out.join("field.rfg"), &state.field)?;
    let rendered = render_all(&state.field, &state.cameras, &sampling)?;
    write_images(&out.join("images"), &rendered)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "iterations {}", state.iter);
    if let Some(last) = state.history.last() {
        let _ = writeln!(summary, "final photometric {:.6e}", last.photometric);
    }
    let mut mean_psnr = 0.0;
    for (r, g) in rendered.iter().zip(&bundle.images) {
        mean_psnr += psnr(r, g)? / rendered.len() as f64;
    }
    let _ = writeln!(summary, "train PSNR {mean_psnr:.3}");
    if !bundle.corrs.is_empty() {
        let d: Vec<f64> = prd_values(&state.cameras, &bundle.corrs, cfg.schedule.eta)?
            .into_iter()
            .flatten()
            .collect();
        let mean = if d.is_empty() { 0.0 } else { d.iter().sum::<f64>() / d.len() as f64 };
        let _ = writeln!(summary, "PRD {mean:.6} px over {} of {} correspondences", d.len(), bundle.corrs.len());
    }
    if bundle.cameras.len() == state.cameras.len() {
        let e = camera_error(&bundle.cameras, &state.cameras)?.mean;
        let _ = writeln!(
            summary,
            "camera error: focal {:.4}%  rotation {:.4} deg  translation {:.5}",
            e.focal_pct, e.rotation_deg, e.translation
        );
    }
    print!("{summary}");
    write_atomic(&out.join("summary.txt"), summary.as_bytes())?;
    Ok(())
}

fn default_sampling(cam: &CameraParams, field: &RadianceField, samples: usize) -> SamplingSpec {
    let c = field.bounds.center();
    let e = field.bounds.extent();
    let half_diag = 0.5 * (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
    let o = cam.center();
    let dist = ((o[0] - c[0]).powi(2) + (o[1] - c[1]).powi(2) + (o[2] - c[2]).powi(2)).sqrt();
    SamplingSpec {
        near: (dist - half_diag).max(1e-3),
        far: (dist + half_diag).max(2e-3),
        samples,
        stratified: false,
        seed: 0,
    }
}

fn render(a: RenderArgs) -> CliResult {
    let field = read_field(&a.field)?;
    let mut cams = read_cameras(&a.cameras)?;
    if let Some(r) = &a.residuals {
        read_residuals(r, &mut cams)?;
    }
    let bundle = a.scene.as_ref().map(|d| read_scene(d)).transpose()?;
    for (v, cam) in cams.iter().enumerate() {
        let mut spec = match &bundle {
            Some(b) => SamplingSpec {
                samples: a.samples,
                ..b.spec.sampling()
            },
            None => default_sampling(cam, &field, a.samples),
        };
        if let Some(n) = a.near {
            spec.near = n;
        }
        if let Some(f) = a.far {
            spec.far = f;
        }
        let img = render_image(&field, cam, &spec)?;
        write_image(&a.out.join(format!("{v:04}.ppm")), &img)?;
        write_image(&a.out.join(format!("{v:04}.pfm")), &img)?;
        if let Some(gt) = bundle.as_ref().and_then(|b| b.images.get(v)) {
            write_image(&a.out.join(format!("{v:04}_error.pfm")), &img.abs_diff(gt)?)?;
        }
    }
    println!("rendered {} views to {}", cams.len(), a.out.display());
    Ok(())
}

/// Cameras from a file, or from `cameras.txt` (+ `residuals.txt`) in a
/// directory, plus the directory's images when present.
fn load_eval_side(p: &Path) -> Result<(Vec<CameraParams>, Option<Vec<ImageBuffer>>)> {
    if !p.is_dir() {
        return Ok((read_cameras(p)?, None));
    }
    let mut cams = read_cameras(&p.join("cameras.txt"))?;
    if p.join("residuals.txt").exists() {
        read_residuals(&p.join("residuals.txt"), &mut cams)?;
    }
    let images_dir = p.join("images");
    let mut images = Vec::new();
    for v in 0..cams.len() {
        let pfm = images_dir.join(format!("{v:04}.pfm"));
        let ppm = images_dir.join(format!("{v:04}.ppm"));
        if pfm.exists() {
            images.push(read_image(&pfm)?);
        } else if ppm.exists() {
            images.push(read_image(&ppm)?);
        } else {
            return Ok((cams, None));
        }
    }
    Ok((cams, Some(images)))
}

fn eval(a: EvalArgs) -> CliResult {
    let (gt, gt_images) = load_eval_side(&a.gt)?;
    let (est, est_images) = load_eval_side(&a.est)?;
    let report = camera_error(&gt, &est)?;
    let images = match (gt_images, est_images) {
        (Some(g), Some(e)) if g.len() == e.len() => Some((g, e)),
        _ => None,
    };
    let mut out = String::new();
    let _ = write!(out, "{:>5} {:>10} {:>10} {:>12}", "view", "focal_%", "rot_deg", "trans");
    if images.is_some() {
        let _ = write!(out, " {:>8} {:>8}", "psnr", "ssim");
    }
    out.push('\n');
    let (mut sum_psnr, mut sum_ssim) = (0.0, 0.0);
    for (v, e) in report.per_camera.iter().enumerate() {
        let _ = write!(out, "{v:>5} {:>10.4} {:>10.4} {:>12.6}", e.focal_pct, e.rotation_deg, e.translation);
        if let Some((g, s)) = &images {
            let p = psnr(&s[v], &g[v])?;
            let q = ssim(&s[v], &g[v])?;
            sum_psnr += p;
            sum_ssim += q;
            let _ = write!(out, " {p:>8.3} {q:>8.5}");
        }
        out.push('\n');
    }
    let m = report.mean;
    let _ = write!(out, "{:>5} {:>10.4} {:>10.4} {:>12.6}", "mean", m.focal_pct, m.rotation_deg, m.translation);
    if images.is_some() {
        let n = report.per_camera.len().max(1) as f64;
        let _ = write!(out, " {:>8.3} {:>8.5}", sum_psnr / n, sum_ssim / n);
    }
    println!("{out}");
    Ok(())
}

fn print_report(report: &GradReport) {
    for l in &report.lines {
        println!("{:<24} probes {:>2}  max rel err {:.3e}", l.label, l.probes, l.max_rel_err);
    }
    println!("max relative error {:.3e}", report.max_rel_err());
}

/// Moves every camera off the exact solution so that no partial vanishes.
fn perturb_for_check(cams: &[CameraParams], seed: u64) -> Result<Vec<CameraParams>> {
    let noise = NoiseSpec {
        focal_pct: 3.0,
        trans_range: 0.02,
        rot_range_deg: 1.0,
        seed,
        anchor: None,
    };
    let mut out = inject_noise(cams, &noise)?;
    for (v, c) in out.iter_mut().enumerate() {
        c.radial.dk = [0.01, -0.005];
        for (n, d) in c.raxel.dir.iter_mut().enumerate() {
            *d = [1e-3 * (n as f64 + v as f64).sin(), 5e-4, -2e-4];
        }
        for (n, o) in c.raxel.origin.iter_mut().enumerate() {
            *o = [-3e-4, 2e-4 * (n as f64).cos(), 1e-4];
        }
    }
    Ok(out)
}

fn gradcheck(a: GradcheckArgs) -> CliResult {
    if a.batch == 0 || a.probes == 0 {
        return Err(Failure::Usage("--batch and --probes must be positive".into()));
    }
    let (field, cams, images, corrs, sampling) = match &a.scene {
        Some(dir) => {
            let b = read_scene(dir)?;
            let s = b.spec.sampling();
            (b.field, b.cameras, b.images, b.corrs, s)
        }
        None => {
            let spec = SceneSpec {
                seed: a.seed,
                cameras: 3,
                width: 16,
                height: 16,
                grid: 10,
                samples: 24,
                arc_deg: 20.0,
                ..SceneSpec::default()
            };
            let scene = make_scene(&spec)?;
            let pairs = nearby_pairs(&scene.cameras, 30.0)?;
            let corrs = gen_correspondences(&scene, &pairs, 8, 0.0, a.seed)?;
            let s = scene.sampling();
            (scene.field, scene.cameras, scene.images, corrs, s)
        }
    };
    let cams = perturb_for_check(&cams, a.seed)?;
    let report = calib::gradient_suite(
        &SuiteInput {
            field: &field,
            cameras: &cams,
            images: &images,
            corrs: &corrs,
            sampling: &sampling,
            seed: a.seed,
        },
        a.batch,
        a.probes,
    )?;
    print_report(&report);
    if report.max_rel_err() < GRADCHECK_TOL {
        Ok(())
    } else {
        Err(Failure::CheckFailed)
    }
}
