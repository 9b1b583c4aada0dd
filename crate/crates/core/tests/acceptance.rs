//! Acceptance criteria A1-A8. Each test prints one `A<n> PASS|FAIL` line
//! straight to stderr (visible without `--nocapture`) and then asserts.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use raycal::calib::{
    self, gradient_suite, joint_step, Config, CurriculumSchedule, SuiteInput, TrainData, TrainState,
};
use raycal::camera::{
    apply_radial, format_cameras, format_residuals, invert_radial, parse_cameras, parse_residuals_into,
    rotation_from_6vec, CameraParams, Ray,
};
use raycal::diff::{decode_adam, encode_adam};
use raycal::field::{decode_field, encode_field, render_image, render_ray, softplus_inv, Aabb, RadianceField, SamplingSpec};
use raycal::image::{decode_pfm, decode_ppm, encode_pfm, encode_ppm, ImageBuffer};
use raycal::metrics::{camera_error, psnr};
use raycal::rays::{
    closest_points, format_correspondences, parse_correspondences, prd_loss, prd_values, projected_ray_distance,
    ray_distance, Correspondence, PrdOutcome, SkipReason,
};
use raycal::synth::{gen_correspondences, inject_noise, look_at, make_scene, nearby_pairs, NoiseSpec, SceneSpec, SyntheticScene};

/// The harness captures `eprintln!` and `io::stderr()` for passing tests,
/// so the verdict goes to the stderr device directly when there is one.
fn verdict(id: &str, pass: bool, detail: &str) {
    let line = format!("{id} {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    match std::fs::OpenOptions::new().append(true).open("/dev/stderr") {
        Ok(mut f) => {
            let _ = f.write_all(line.as_bytes());
        }
        Err(_) => eprint!("{line}"),
    }
}

fn small_spec(seed: u64) -> SceneSpec {
    SceneSpec {
        seed,
        cameras: 6,
        width: 16,
        height: 16,
        grid: 12,
        samples: 32,
        ..SceneSpec::default()
    }
}

// Recovery curriculum for A4/A7: field, intrinsics, extrinsics, radial, raxel.
const RECOVERY_ITERS: u64 = 6000;
const RECOVERY_LR: [f64; 5] = [0.05, 0.05, 0.0001, 0.001, 0.0001];
const RECOVERY_DECAY: u64 = 6000;
const RECOVERY_LAMBDA: f64 = 1.0;
const RECOVERY_PRD_EVERY: u64 = 1;

// A1 -------------------------------------------------------------------------

#[test]
fn a1_gradient_integrity() {
    let t0 = Instant::now();
    let spec = SceneSpec {
        seed: 17,
        cameras: 3,
        width: 16,
        height: 16,
        grid: 10,
        samples: 24,
        arc_deg: 20.0,
        ..SceneSpec::default()
    };
    let scene = make_scene(&spec).unwrap();
    let pairs = nearby_pairs(&scene.cameras, 30.0).unwrap();
    let corrs = gen_correspondences(&scene, &pairs, 8, 0.0, 17).unwrap();
    // Off the solution, with every residual group nonzero.
    let noise = NoiseSpec {
        focal_pct: 3.0,
        trans_range: 0.02,
        rot_range_deg: 1.0,
        seed: 18,
        anchor: None,
    };
    let mut cams = inject_noise(&scene.cameras, &noise).unwrap();
    for (v, c) in cams.iter_mut().enumerate() {
        c.intrinsics.df = [0.3, -0.2];
        c.intrinsics.dc = [0.1, 0.15];
        c.radial.dk = [0.01, -0.005];
        for (n, d) in c.raxel.dir.iter_mut().enumerate() {
            *d = [1e-3 * (n as f64 + v as f64).sin(), 5e-4, -2e-4];
        }
        for (n, o) in c.raxel.origin.iter_mut().enumerate() {
            *o = [-3e-4, 2e-4 * (n as f64).cos(), 1e-4];
        }
    }
    let report = gradient_suite(
        &SuiteInput {
            field: &scene.field,
            cameras: &cams,
            images: &scene.images,
            corrs: &corrs,
            sampling: &scene.sampling(),
            seed: 17,
        },
        32,
        3,
    )
    .unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let blocks = ["field", "df", "dc", "da", "dt", "dk", "zd", "zo"];
    let covered = blocks
        .iter()
        .all(|b| report.lines.iter().any(|l| l.label.ends_with(&format!("/{b}")) && l.probes > 0));
    let err = report.max_rel_err();
    let pass = covered && err < 1e-4 && secs < 60.0;
    verdict(
        "A1",
        pass,
        &format!(
            "gradcheck max rel err {err:.2e} over {} checks (< 1e-4, eps 1e-5), all groups {covered}, {secs:.1}s",
            report.lines.len()
        ),
    );
    assert!(pass, "{report:#?}");
}

// A2 -------------------------------------------------------------------------

fn golden<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Golden section, then one parabola through three points: exact on the
/// quadratic objectives here, where golden section alone stalls near sqrt(eps).
fn line_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let x = golden(&mut f, a, b, 1e-6);
    let h = 1.0;
    let (fm, f0, fp) = (f(x - h), f(x), f(x + h));
    x - h * (fp - fm) / (2.0 * (fp - 2.0 * f0 + fm))
}

fn dist2(ra: &Ray, rb: &Ray, s: f64, t: f64) -> f64 {
    let (p, q) = (ra.at(s), rb.at(t));
    (0..3).map(|k| (p[k] - q[k]).powi(2)).sum()
}

/// Grid search over `[-100, 100]²` (to reject pairs whose optimum is outside
/// the box), then nested golden-section minimization over the whole box:
/// the squared distance is convex, so both nested problems are unimodal.
/// The inner minimum is quadratic in `s` as well.
fn brute_force(ra: &Ray, rb: &Ray) -> Option<(f64, f64)> {
    let (mut best, mut bs, mut bt) = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=200 {
        for j in 0..=200 {
            let (s, t) = (i as f64 - 100.0, j as f64 - 100.0);
            let d = dist2(ra, rb, s, t);
            if d < best {
                (best, bs, bt) = (d, s, t);
            }
        }
    }
    if bs.abs() >= 99.0 || bt.abs() >= 99.0 {
        return None;
    }
    let inner = |s: f64| line_min(|t| dist2(ra, rb, s, t), -100.0, 100.0);
    let s = line_min(|s| dist2(ra, rb, s, inner(s)), -100.0, 100.0);
    Some((s, inner(s)))
}

#[test]
fn a2_geometric_oracles() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_dist: f64 = 0.0;
    let mut worst_point: f64 = 0.0;
    let mut pairs = 0;
    while pairs < 1000 {
        let mut ray = || Ray {
            origin: std::array::from_fn(|_| rng.random_range(-5.0..5.0)),
            dir: std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal) * rng.random_range(0.5..2.0)),
        };
        let (ra, rb) = (ray(), ray());
        let Some((s, t)) = brute_force(&ra, &rb) else {
            continue;
        };
        let Ok(cp) = closest_points(&ra, &rb) else {
            continue;
        };
        pairs += 1;
        let d_brute = dist2(&ra, &rb, s, t).sqrt();
        let d_closed = ray_distance(&ra, &rb).unwrap();
        let d_points = (0..3).map(|k| (cp.x_a[k] - cp.x_b[k]).powi(2)).sum::<f64>().sqrt();
        worst_dist = worst_dist.max((d_closed - d_brute).abs()).max((d_points - d_brute).abs());
        let (pa, pb) = (ra.at(s), rb.at(t));
        for k in 0..3 {
            worst_point = worst_point.max((cp.x_a[k] - pa[k]).abs()).max((cp.x_b[k] - pb[k]).abs());
        }
    }

    let mut worst_orth: f64 = 0.0;
    let mut worst_det: f64 = 0.0;
    for _ in 0..1000 {
        let a: [f64; 6] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let r = rotation_from_6vec(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                worst_orth = worst_orth.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        worst_det = worst_det.max((det - 1.0).abs());
    }

    let mut radial_exact = true;
    for _ in 0..1000 {
        let p = [rng.random_range(-50.0..150.0), rng.random_range(-50.0..150.0)];
        let c = [rng.random_range(10.0..60.0), rng.random_range(10.0..60.0)];
        radial_exact &= apply_radial(p, c, [0.0, 0.0]) == [p[0], p[1], 1.0];
        radial_exact &= invert_radial(p, c, [0.0, 0.0]).unwrap() == p;
    }

    let secs = t0.elapsed().as_secs_f64();
    let pass = worst_dist < 1e-6
        && worst_point < 1e-6
        && worst_orth < 1e-12
        && worst_det < 1e-12
        && radial_exact
        && secs < 10.0;
    verdict(
        "A2",
        pass,
        &format!(
            "ray pairs: distance err {worst_dist:.1e}, point err {worst_point:.1e} (< 1e-6); 6-vec: orth {worst_orth:.1e}, det {worst_det:.1e} (< 1e-12); k=0 identity exact {radial_exact}; {secs:.1}s"
        ),
    );
    assert!(pass);
}

// A3 -------------------------------------------------------------------------

/// Smooth analytic density and color sampled on a fine grid. The density
/// falls smoothly to zero inside the bounds so the ray integrand has no jump.
fn smooth_field() -> RadianceField {
    let n = 48;
    let mut f = RadianceField::constant([n; 3], Aabb::cube(1.0), 0.0).unwrap();
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let x = f.voxel_center(i, j, k);
                let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                let idx = f.voxel_index(i, j, k) * 4;
                let sigma = 2.0 * (1.0 - r2).max(0.0).powi(2) * (1.0 + 0.3 * (2.0 * x[0]).sin());
                f.data[idx] = softplus_inv(sigma.max(1e-12));
                f.data[idx + 1] = 1.5 * x[0];
                f.data[idx + 2] = (1.5 * x[1]).cos();
                f.data[idx + 3] = x[2] - 0.5 * x[0] * x[1];
            }
        }
    }
    f
}

#[test]
fn a3_rendering_oracle() {
    let t0 = Instant::now();
    let field = smooth_field();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let coarse = SamplingSpec {
        near: 1.0,
        far: 5.0,
        samples: 64,
        stratified: false,
        seed: 0,
    };
    let fine = SamplingSpec {
        samples: 8192,
        ..coarse.clone()
    };
    let (mut worst, mut wmin, mut wmax) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for key in 0..100u64 {
        // From a sphere of radius 3 toward a random point near the centre.
        let u: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let nu = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        let origin = [3.0 * u[0] / nu, 3.0 * u[1] / nu, 3.0 * u[2] / nu];
        let target: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
        let dir = [target[0] - origin[0], target[1] - origin[1], target[2] - origin[2]];
        let s = 1.0 / (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        let ray = Ray {
            origin,
            dir: [dir[0] * s, dir[1] * s, dir[2] * s],
        };
        let a = render_ray(&field, &ray, &coarse, key);
        let b = render_ray(&field, &ray, &fine, key);
        for k in 0..3 {
            worst = worst.max((a.color[k] - b.color[k]).abs());
        }
        for w in [a.weight_sum, b.weight_sum] {
            wmin = wmin.min(w);
            wmax = wmax.max(w);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst < 1e-3 && wmin >= 0.0 && wmax <= 1.0 && secs < 30.0;
    verdict(
        "A3",
        pass,
        &format!("N=64 vs N=8192 max channel diff {worst:.2e} (< 1e-3); weight sums in [{wmin:.3}, {wmax:.3}]; {secs:.1}s"),
    );
    assert!(pass);
}

// A4 / A7 --------------------------------------------------------------------

struct Recovery {
    scene: SyntheticScene,
    corrs: Vec<Correspondence>,
}

fn recovery_setup() -> Recovery {
    let scene = make_scene(&SceneSpec::default()).unwrap();
    let pairs = nearby_pairs(&scene.cameras, 30.0).unwrap();
    let corrs = gen_correspondences(&scene, &pairs, 32, 0.0, 7).unwrap();
    Recovery { scene, corrs }
}

fn noise(focal_pct: f64, rot_range_deg: f64, trans_range: f64) -> NoiseSpec {
    NoiseSpec {
        focal_pct,
        trans_range,
        rot_range_deg,
        seed: 5,
        anchor: Some(0),
    }
}

/// Full curriculum used by the recovery runs.
fn recovery_config() -> Config {
    let mut cfg = Config::default();
    cfg.iterations = RECOVERY_ITERS;
    cfg.lr = RECOVERY_LR;
    cfg.lr_decay = RECOVERY_DECAY;
    cfg.schedule = CurriculumSchedule {
        phase_camera: 1000,
        phase_radial: RECOVERY_ITERS - 1000,
        phase_raxel: RECOVERY_ITERS - 500,
        prd_start: None,
        prd_every: RECOVERY_PRD_EVERY,
        lambda: RECOVERY_LAMBDA,
        eta: 5.0,
    };
    cfg
}

struct RunResult {
    error: raycal::metrics::CameraError,
    prd: f64,
    psnr: f64,
}

fn recover(r: &Recovery, init: Vec<CameraParams>, cfg: &Config) -> RunResult {
    let field = RadianceField::constant([cfg.grid; 3], r.scene.field.bounds.clone(), cfg.field_init).unwrap();
    let state = TrainState::new(field, init, cfg).unwrap();
    let data = TrainData::new(r.scene.images.clone(), r.corrs.clone(), r.scene.sampling()).unwrap();
    let st = calib::calibrate(state, &data, cfg, None, |_| {}).unwrap();
    let sampling = r.scene.sampling();
    let psnr = st
        .cameras
        .iter()
        .zip(&r.scene.images)
        .map(|(c, img)| psnr(&render_image(&st.field, c, &sampling).unwrap(), img).unwrap())
        .sum::<f64>()
        / st.cameras.len() as f64;
    RunResult {
        error: camera_error(&r.scene.cameras, &st.cameras).unwrap().mean,
        prd: prd_loss(&st.cameras, &r.corrs, 5.0).unwrap().value,
        psnr,
    }
}

#[test]
fn a4_self_calibration_recovery() {
    let t0 = Instant::now();
    let r = recovery_setup();
    let cfg = recovery_config();
    // One run per noise type, each judged on the parameter it perturbs.
    // Rotation and translation currently stall above their bounds (README).
    let focal = recover(&r, inject_noise(&r.scene.cameras, &noise(10.0, 0.0, 0.0)).unwrap(), &cfg);
    let rot = recover(&r, inject_noise(&r.scene.cameras, &noise(0.0, 2.0, 0.0)).unwrap(), &cfg);
    let trans = recover(&r, inject_noise(&r.scene.cameras, &noise(0.0, 0.0, 0.02)).unwrap(), &cfg);
    let secs = t0.elapsed().as_secs_f64();
    let prd = focal.prd.max(rot.prd).max(trans.prd);
    let pass = focal.error.focal_pct < 1.0
        && rot.error.rotation_deg < 0.2
        && trans.error.translation < 0.005
        && prd < 0.5
        && secs < 600.0;
    verdict(
        "A4",
        pass,
        &format!(
            "focal {:.3}% (< 1), rotation {:.3} deg (< 0.2), translation {:.4} (< 0.005), max final PRD {prd:.3}px (< 0.5), {} iters each, {secs:.0}s (< 600)",
            focal.error.focal_pct, rot.error.rotation_deg, trans.error.translation, cfg.iterations
        ),
    );
    assert!(pass);
}

#[test]
fn a7_ablation_direction() {
    let r = recovery_setup();
    let init = inject_noise(&r.scene.cameras, &noise(10.0, 2.0, 0.0)).unwrap();
    let full = recovery_config();
    let mut field_only = full.clone();
    field_only.prd = false;
    field_only.schedule.phase_camera = u64::MAX;
    field_only.schedule.phase_radial = u64::MAX;
    field_only.schedule.phase_raxel = u64::MAX;
    let mut ie = full.clone();
    ie.prd = false;
    ie.schedule.phase_radial = u64::MAX;
    ie.schedule.phase_raxel = u64::MAX;
    let mut ie_od = full.clone();
    ie_od.prd = false;
    let runs: Vec<RunResult> = [&field_only, &ie, &ie_od, &full].iter().map(|c| recover(&r, init.clone(), c)).collect();
    let p: Vec<f64> = runs.iter().map(|x| x.psnr).collect();
    let d: Vec<f64> = runs.iter().map(|x| x.prd).collect();
    let psnr_order = p[0] < p[1] && p[1] < p[2] && p[2] <= p[3];
    let prd_lowest = d[..3].iter().all(|&x| d[3] < x);
    let pass = psnr_order && prd_lowest;
    verdict(
        "A7",
        pass,
        &format!(
            "train PSNR field {:.2} < +IE {:.2} < +IE+OD {:.2} <= +PRD {:.2}: {psnr_order}; PRD px {:.3} {:.3} {:.3} {:.3}, full lowest {prd_lowest}",
            p[0], p[1], p[2], p[3], d[0], d[1], d[2], d[3]
        ),
    );
    assert!(pass);
}

// A5 -------------------------------------------------------------------------

#[test]
fn a5_prd_fixed_point() {
    let scene = make_scene(&small_spec(5)).unwrap();
    let pairs = nearby_pairs(&scene.cameras, 30.0).unwrap();
    let corrs = gen_correspondences(&scene, &pairs, 16, 0.0, 5).unwrap();
    let gt = prd_loss(&scene.cameras, &corrs, 5.0).unwrap();
    let fixed = gt.value < 1e-8 && gt.valid == corrs.len();

    // Rays that meet only behind camera A: X lies on A's pixel ray at a
    // negative depth and is seen (in front) by a second camera B.
    let cam_a = look_at(16, 16, 18.0, [0.0, 0.0, -4.0]);
    let cam_b = look_at(16, 16, 18.0, [0.4, 0.3, -12.0]);
    let cams = vec![cam_a, cam_b];
    let mut behind = true;
    for p in [[3.5, 4.5], [12.5, 11.5], [8.0, 2.5]] {
        let x = cams[0].unproject(p).unwrap().at(-2.0);
        let q = cams[1].project(x).unwrap();
        assert!(q[0] > 0.0 && q[0] < 16.0 && q[1] > 0.0 && q[1] < 16.0, "{q:?}");
        let corr = Correspondence {
            cam_a: 0,
            cam_b: 1,
            p_a: p,
            p_b: q,
        };
        let skipped = matches!(
            projected_ray_distance(&cams[0], &cams[1], &corr, 5.0),
            Ok(PrdOutcome::Skipped(SkipReason::Chirality))
        );
        behind &= skipped && prd_loss(&cams, &[corr], 5.0).unwrap().valid == 0;
    }

    // A correspondence pushed far from its epipolar line exceeds eta.
    let (far, d) = [[9.0, -9.0], [-9.0, 9.0], [9.0, 9.0], [-9.0, -9.0], [7.0, 0.0], [-7.0, 0.0], [0.0, 7.0], [0.0, -7.0]]
        .iter()
        .filter_map(|o| {
            let mut c = corrs[0];
            c.p_b = [c.p_b[0] + o[0], c.p_b[1] + o[1]];
            let inside = (0.0..16.0).contains(&c.p_b[0]) && (0.0..16.0).contains(&c.p_b[1]);
            let d = prd_values(&scene.cameras, &[c], 1e9).ok()?[0]?;
            (inside && d > 5.0).then_some((c, d))
        })
        .next()
        .expect("an in-bounds offset beyond eta");
    let excluded = d > 5.0 && prd_values(&scene.cameras, &[far], 5.0).unwrap()[0].is_none();
    let mixed = prd_loss(&scene.cameras, &[corrs[0], far], 5.0).unwrap();
    let excluded = excluded && mixed.valid == 1 && mixed.value < 1e-8;

    let pass = fixed && behind && excluded;
    verdict(
        "A5",
        pass,
        &format!(
            "GT prd_loss {:.1e} over {} corrs (< 1e-8); behind-camera skipped {behind}; d={d:.2}px > eta excluded {excluded}",
            gt.value, gt.valid
        ),
    );
    assert!(pass);
}

// A6 -------------------------------------------------------------------------

fn residual_blocks(cams: &[CameraParams]) -> [Vec<f64>; 4] {
    let mut out: [Vec<f64>; 4] = Default::default();
    for c in cams {
        out[0].extend(c.intrinsics.df.iter().chain(&c.intrinsics.dc));
        out[1].extend(c.extrinsics.da.iter().chain(&c.extrinsics.dt));
        out[2].extend(c.radial.dk);
        out[3].extend(c.raxel.dir.iter().chain(&c.raxel.origin).flatten());
    }
    out
}

fn gating_setup(seed: u64) -> (TrainState, TrainData, Config) {
    let scene = make_scene(&small_spec(seed)).unwrap();
    let pairs = nearby_pairs(&scene.cameras, 30.0).unwrap();
    let corrs = gen_correspondences(&scene, &pairs, 12, 0.0, seed).unwrap();
    let noise = NoiseSpec {
        focal_pct: 4.0,
        trans_range: 0.01,
        rot_range_deg: 1.0,
        seed,
        anchor: Some(0),
    };
    let cams = inject_noise(&scene.cameras, &noise).unwrap();
    let mut cfg = Config::default();
    cfg.seed = seed;
    cfg.batch = 64;
    cfg.grid = 12;
    cfg.iterations = 40;
    cfg.lr = [0.05, 0.05, 0.001, 0.001, 0.0001];
    cfg.schedule = CurriculumSchedule {
        phase_camera: 10,
        phase_radial: 20,
        phase_raxel: 30,
        prd_start: None,
        prd_every: 2,
        lambda: 0.5,
        eta: 5.0,
    };
    let field = RadianceField::constant([12; 3], scene.field.bounds.clone(), -2.0).unwrap();
    let state = TrainState::new(field, cams, &cfg).unwrap();
    let data = TrainData::new(scene.images.clone(), corrs, scene.sampling()).unwrap();
    (state, data, cfg)
}

#[test]
fn a6_curriculum_gating() {
    let (mut st, data, cfg) = gating_setup(6);
    let init = residual_blocks(&st.cameras);
    let boundaries = [cfg.schedule.phase_camera, cfg.schedule.phase_camera, cfg.schedule.phase_radial, cfg.schedule.phase_raxel];
    let mut gated = true;
    let mut moved = [false; 4];
    let anchor = st.cameras[0].extrinsics.clone();
    let mut anchor_fixed = true;
    while st.iter < cfg.iterations {
        joint_step(&mut st, &data, &cfg).unwrap();
        let now = residual_blocks(&st.cameras);
        for g in 0..4 {
            // After the step, `st.iter` iterations have run; the last one was `st.iter - 1`.
            if st.iter - 1 < boundaries[g] {
                gated &= now[g] == init[g];
            } else {
                moved[g] |= now[g] != init[g];
            }
        }
        anchor_fixed &= st.cameras[0].extrinsics == anchor;
    }
    let moved_all = moved.iter().all(|&m| m);

    // lambda = 0 against PRD disabled.
    let (mut a, data_a, mut cfg_a) = gating_setup(7);
    cfg_a.schedule.lambda = 0.0;
    let (mut b, data_b, mut cfg_b) = gating_setup(7);
    cfg_b.prd = false;
    for _ in 0..cfg_a.iterations {
        joint_step(&mut a, &data_a, &cfg_a).unwrap();
        joint_step(&mut b, &data_b, &cfg_b).unwrap();
    }
    let lambda_zero = a.field == b.field && a.cameras == b.cameras && a.adam == b.adam;
    let pass = gated && moved_all && anchor_fixed && lambda_zero;
    verdict(
        "A6",
        pass,
        &format!(
            "groups bitwise unchanged before their phase {gated}, active after {moved_all}, anchor fixed {anchor_fixed}; lambda=0 == PRD off bitwise {lambda_zero}"
        ),
    );
    assert!(pass);
}

// A8 -------------------------------------------------------------------------

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_raycal")).args(args).output().unwrap()
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn a8_determinism_and_io() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_str().unwrap().to_owned();

    // Commands re-run with the same seed.
    let mut same_runs = true;
    for out in ["s1", "s2"] {
        let o = run_cli(&["synth", "--seed", "8", "--out", &p(out), "--cameras", "5", "--width", "12", "--height", "12", "--grid", "12", "--samples", "24", "--rot-noise", "1", "--focal-noise", "5"]);
        same_runs &= o.status.success();
    }
    same_runs &= dir_files(&tmp.path().join("s1")) == dir_files(&tmp.path().join("s2"));
    let mut logs = Vec::new();
    for out in ["c1", "c2"] {
        let o = run_cli(&["calibrate", "--scene", &p("s1"), "--out", &p(out), "--seed", "8", "--iterations", "30", "--set", "phase_camera=10", "--set", "phase_radial=15", "--set", "phase_raxel=20", "--set", "batch=48", "--set", "samples=24", "--set", "checkpoint_every=10"]);
        same_runs &= o.status.success();
        logs.push((o.stdout, std::fs::read(tmp.path().join(out).join("metrics.csv")).unwrap()));
        let files: Vec<_> = dir_files(&tmp.path().join(out)).into_iter().filter(|(n, _)| n != "config.txt").collect();
        logs.push((Vec::new(), files.into_iter().flat_map(|(n, b)| n.into_bytes().into_iter().chain(b)).collect()));
    }
    same_runs &= logs[0] == logs[2] && logs[1] == logs[3];
    for args in [
        vec!["gradcheck", "--seed", "4"],
        vec!["eval", "--gt", &p("s1"), "--est", &p("c1")],
    ] {
        let (a, b) = (run_cli(&args), run_cli(&args));
        same_runs &= a.status.success() && a.stdout == b.stdout;
    }
    for out in ["r1", "r2"] {
        let o = run_cli(&["render", "--field", &p("c1/field.rfg"), "--cameras", &p("c1/cameras.txt"), "--residuals", &p("c1/residuals.txt"), "--scene", &p("s1"), "--out", &p(out)]);
        same_runs &= o.status.success();
    }
    same_runs &= dir_files(&tmp.path().join("r1")) == dir_files(&tmp.path().join("r2"));

    // Value-exact round trips.
    let path = Path::new("mem");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut round_trips = Vec::new();

    let scene = make_scene(&small_spec(8)).unwrap();
    let mut cams = inject_noise(&scene.cameras, &NoiseSpec { focal_pct: 3.0, trans_range: 0.01, rot_range_deg: 1.0, seed: 8, anchor: None }).unwrap();
    for c in &mut cams {
        c.intrinsics.df = [rng.random::<f64>() - 0.5, rng.random::<f64>()];
        c.radial.dk = [rng.random::<f64>() * 1e-3, -rng.random::<f64>() * 1e-5];
        for d in c.raxel.dir.iter_mut().chain(c.raxel.origin.iter_mut()) {
            *d = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal) * 1e-4);
        }
    }
    let mut back = parse_cameras(path, &format_cameras(&cams)).unwrap();
    parse_residuals_into(path, &format_residuals(&cams), &mut back).unwrap();
    round_trips.push(("cameras+residuals", back == cams));

    let mut field = scene.field.clone();
    for v in field.data.iter_mut() {
        *v += rng.random::<f64>() * 1e-7;
    }
    round_trips.push(("field", decode_field(path, &encode_field(&field)).unwrap() == field));

    let mut img = ImageBuffer::new(7, 5);
    for v in img.data.iter_mut() {
        *v = rng.random::<f32>() as f64;
    }
    round_trips.push(("pfm", decode_pfm(path, &encode_pfm(&img)).unwrap() == img));
    for v in img.data.iter_mut() {
        *v = rng.random_range(0..=255u8) as f64 / 255.0;
    }
    round_trips.push(("ppm", decode_ppm(path, &encode_ppm(&img)).unwrap() == img));

    let pairs = nearby_pairs(&scene.cameras, 30.0).unwrap();
    let corrs = gen_correspondences(&scene, &pairs, 4, 0.3, 8).unwrap();
    round_trips.push(("correspondences", parse_correspondences(path, &format_correspondences(&corrs)).unwrap() == corrs));

    let mut cfg = Config::default();
    cfg.set("lambda", "0.123456789012345").unwrap();
    cfg.set("lr_raxel", "3.3e-7").unwrap();
    cfg.set("prd_start", "17").unwrap();
    round_trips.push(("config", Config::parse(path, &cfg.to_text()).unwrap() == cfg));
    round_trips.push(("scene meta", SceneSpec::from_meta(path, &scene.spec.to_meta()).unwrap() == scene.spec));

    let (mut st, data, gcfg) = gating_setup(9);
    for _ in 0..25 {
        joint_step(&mut st, &data, &gcfg).unwrap();
    }
    round_trips.push(("adam", decode_adam(path, &encode_adam(&st.adam)).unwrap() == st.adam));
    round_trips.push(("metrics", calib::parse_metrics(path, &st.metrics_csv()).unwrap() == st.history));
    let ck = tmp.path().join("ck");
    calib::write_checkpoint(&ck, &st).unwrap();
    round_trips.push(("checkpoint", calib::read_checkpoint(&ck).unwrap() == st));

    let failed: Vec<&str> = round_trips.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    let pass = same_runs && failed.is_empty();
    verdict(
        "A8",
        pass,
        &format!(
            "synth/calibrate/render/eval/gradcheck re-runs bitwise {same_runs}; {} formats round-trip exactly (failed: {failed:?})",
            round_trips.len()
        ),
    );
    assert!(pass);
}
