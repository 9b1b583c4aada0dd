use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{select_pair, Config, PairIndex};
use crate::camera::{read_cameras, read_residuals, write_cameras, write_residuals, CameraGrad, CameraParams};
use crate::diff::{clamp_camera_residuals, lr_at, read_adam, write_adam, AdamState, Group, GroupSet, Layout, ParamSet};
use crate::error::{Error, Result};
use crate::field::{photometric_loss, read_field, write_field, PixelSample, RadianceField, SamplingSpec};
use crate::image::ImageBuffer;
use crate::io::write_atomic;
use crate::rays::{prd_loss, Correspondence};
use crate::synth::{parse_key_values, stream_seed};

pub const METRICS_HEADER: &str = "iter,photometric,prd,prd_valid,lr,active_groups";
/// Subdirectory of the output directory holding the resumable state.
pub const CHECKPOINT_DIR: &str = "checkpoint";

const STREAM_VIEW: u64 = 10;
const STREAM_PRD: u64 = 11;
const STREAM_KEY: u64 = 12;

/// Observations shared by every step.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub images: Vec<ImageBuffer>,
    pub corrs: Vec<Correspondence>,
    pub pairs: PairIndex,
    pub sampling: SamplingSpec,
}

impl TrainData {
    pub fn new(images: Vec<ImageBuffer>, corrs: Vec<Correspondence>, sampling: SamplingSpec) -> Result<Self> {
        sampling.validate()?;
        let pairs = PairIndex::new(images.len(), &corrs)?;
        Ok(TrainData {
            images,
            corrs,
            pairs,
            sampling,
        })
    }

    fn check(&self, cams: &[CameraParams]) -> Result<()> {
        if self.images.len() != cams.len() {
            return Err(Error::CountMismatch {
                gt: self.images.len(),
                est: cams.len(),
            });
        }
        for (v, (img, cam)) in self.images.iter().zip(cams).enumerate() {
            if img.width != cam.width || img.height != cam.height {
                return Err(Error::DimensionMismatch(format!(
                    "image {v} is {}x{} but camera is {}x{}",
                    img.width, img.height, cam.width, cam.height
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub iter: u64,
    pub photometric: f64,
    pub prd: Option<f64>,
    pub prd_valid: usize,
    pub lr: f64,
    pub active: GroupSet,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub photometric: f64,
    /// Present on iterations where a PRD pair was evaluated.
    pub prd: Option<f64>,
    pub prd_valid: usize,
}

/// Per-iteration randomness is derived from `(seed, iter)`, so the state
/// carries no generator and a resumed run continues bitwise.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub field: RadianceField,
    pub cameras: Vec<CameraParams>,
    pub layout: Layout,
    pub adam: AdamState,
    pub iter: u64,
    pub history: Vec<HistoryRow>,
}

impl TrainState {
    pub fn new(field: RadianceField, cameras: Vec<CameraParams>, cfg: &Config) -> Result<Self> {
        for c in &cameras {
            c.validate()?;
        }
        let layout = Layout::new(&cameras, cfg.shared_lens, cfg.freeze_first)?;
        let adam = AdamState::new(&ParamSet::gather(&field, &cameras, &layout));
        Ok(TrainState {
            field,
            cameras,
            layout,
            adam,
            iter: 0,
            history: Vec::new(),
        })
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.history {
            let prd = r.prd.map(|p| format!("{p:?}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:?},{},{},{:?},{}",
                r.iter, r.photometric, prd, r.prd_valid, r.lr, r.active
            );
        }
        out
    }
}

fn parse_groups(s: &str) -> Option<GroupSet> {
    if s == "none" {
        return Some(GroupSet::empty());
    }
    s.split('+').try_fold(GroupSet::empty(), |acc, n| Group::from_name(n).map(|g| acc.with(g)))
}

pub fn parse_metrics(path: &Path, text: &str) -> Result<Vec<HistoryRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_HEADER => {}
        _ => return Err(Error::parse(path, 1, "missing metrics header")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::parse(path, idx + 1, format!("bad {what}"));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad("field count"));
        }
        rows.push(HistoryRow {
            iter: f[0].parse().map_err(|_| bad("iter"))?,
            photometric: f[1].parse().map_err(|_| bad("photometric"))?,
            prd: if f[2].is_empty() {
                None
            } else {
                Some(f[2].parse().map_err(|_| bad("prd"))?)
            },
            prd_valid: f[3].parse().map_err(|_| bad("prd_valid"))?,
            lr: f[4].parse().map_err(|_| bad("lr"))?,
            active: parse_groups(f[5]).ok_or_else(|| bad("active_groups"))?,
        });
    }
    Ok(rows)
}

fn pixel_batch(img: &ImageBuffer, cfg: &Config, iter: u64, rng: &mut ChaCha8Rng) -> Vec<PixelSample> {
    let (w, h) = (img.width, img.height);
    let total = w * h;
    let key = |k: usize, idx: usize| {
        if cfg.stratified {
            stream_seed(cfg.seed, &[STREAM_KEY, iter, k as u64])
        } else {
            idx as u64
        }
    };
    let make = |k: usize, idx: usize| {
        let (i, j) = (idx % w, idx / w);
        PixelSample {
            p: [i as f64 + 0.5, j as f64 + 0.5],
            target: img.get(i, j),
            key: key(k, idx),
        }
    };
    if cfg.batch >= total {
        (0..total).map(|idx| make(idx, idx)).collect()
    } else {
        (0..cfg.batch).map(|k| make(k, rng.random_range(0..total))).collect()
    }
}

fn tag(iter: u64, e: Error) -> Error {
    match e {
        Error::NonFinite(m) => Error::NonFinite(format!("iteration {iter}: {m}")),
        other => other,
    }
}

/// One iteration: photometric loss on a random view, plus `λ·PRD` on a
/// selected pair when due, then an Adam update of the active groups.
pub fn joint_step(state: &mut TrainState, data: &TrainData, cfg: &Config) -> Result<StepOutcome> {
    let iter = state.iter;
    step_inner(state, data, cfg).map_err(|e| tag(iter, e))
}

fn step_inner(state: &mut TrainState, data: &TrainData, cfg: &Config) -> Result<StepOutcome> {
    data.check(&state.cameras)?;
    let iter = state.iter;
    let sched = &cfg.schedule;
    let active = sched.get_params(iter);
    let n = state.cameras.len();

    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &[STREAM_VIEW, iter]));
    let view = rng.random_range(0..n);
    let pixels = pixel_batch(&data.images[view], cfg, iter, &mut rng);
    let photo = photometric_loss(
        &state.field,
        &state.cameras[view],
        &pixels,
        &data.sampling,
        active.contains(Group::Field),
    )?;
    if !photo.value.is_finite() {
        return Err(Error::NonFinite("photometric loss".into()));
    }
    let mut cam_grads: Vec<CameraGrad> = state.cameras.iter().map(CameraGrad::zeros_like).collect();
    cam_grads[view] = photo.camera_grad;

    let mut prd = None;
    let mut prd_valid = 0;
    if cfg.prd && sched.prd_due(iter) && n >= 2 {
        let mut prng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &[STREAM_PRD, iter]));
        let source = prng.random_range(0..n);
        let target = select_pair(
            source,
            &state.cameras,
            &data.pairs,
            cfg.pair_angle_deg,
            cfg.min_shared,
            &mut prng,
        )?;
        if let Some(t) = target {
            let subset: Vec<Correspondence> =
                data.pairs.between(source, t).iter().map(|&k| data.corrs[k]).collect();
            let loss = prd_loss(&state.cameras, &subset, sched.eta)?;
            if !loss.value.is_finite() {
                return Err(Error::NonFinite("projected ray distance".into()));
            }
            if sched.lambda > 0.0 {
                for (acc, g) in cam_grads.iter_mut().zip(&loss.grads) {
                    let mut g = g.clone();
                    g.scale(sched.lambda);
                    acc.add_assign(&g);
                }
            }
            prd = Some(loss.value);
            prd_valid = loss.valid;
        }
    }

    let grads = ParamSet::from_grads(&photo.field_grad, &cam_grads, &state.field, &state.cameras, &state.layout)?;
    let mut params = ParamSet::gather(&state.field, &state.cameras, &state.layout);
    let lr: [f64; 5] = std::array::from_fn(|g| lr_at(cfg.lr[g], iter, cfg.lr_decay));
    state.adam.step(&mut params, &grads, active, &lr)?;
    params.scatter(&mut state.field, &mut state.cameras, &state.layout)?;
    for c in &mut state.cameras {
        clamp_camera_residuals(c);
    }

    state.history.push(HistoryRow {
        iter,
        photometric: photo.value,
        prd,
        prd_valid,
        lr: lr[Group::Field.index()],
        active,
    });
    state.iter += 1;
    Ok(StepOutcome {
        photometric: photo.value,
        prd,
        prd_valid,
    })
}

/// Writes everything needed to resume into `dir`, one atomic file at a time.
pub fn write_checkpoint(dir: &Path, state: &TrainState) -> Result<()> {
    write_cameras(&dir.join("cameras.txt"), &state.cameras)?;
    write_residuals(&dir.join("residuals.txt"), &state.cameras)?;
    write_field(&dir.join("field.rfg"), &state.field)?;
    write_adam(&dir.join("adam.adm"), &state.adam)?;
    write_atomic(&dir.join("metrics.csv"), state.metrics_csv().as_bytes())?;
    // Written last: a checkpoint without a matching state.txt is incomplete.
    let frozen: Vec<&str> = state
        .layout
        .frozen_extrinsics
        .iter()
        .map(|&f| if f { "1" } else { "0" })
        .collect();
    let text = format!(
        "iter={}\nshared_lens={}\nfrozen={}\n",
        state.iter,
        state.layout.shared_lens,
        frozen.join("")
    );
    write_atomic(&dir.join("state.txt"), text.as_bytes())
}

pub fn read_checkpoint(dir: &Path) -> Result<TrainState> {
    let state_path = dir.join("state.txt");
    let text = std::fs::read_to_string(&state_path).map_err(|e| Error::io(&state_path, e))?;
    let kv = parse_key_values(&state_path, &text)?;
    let get = |k: &str| {
        kv.get(k)
            .ok_or_else(|| Error::parse(&state_path, 0, format!("missing key {k}")))
    };
    let (line, iter) = get("iter")?;
    let iter: u64 = iter.parse().map_err(|_| Error::parse(&state_path, *line, "bad iter"))?;
    let (line, shared) = get("shared_lens")?;
    let shared_lens = match shared.as_str() {
        "true" => true,
        "false" => false,
        _ => return Err(Error::parse(&state_path, *line, "bad shared_lens")),
    };
    let (line, frozen) = get("frozen")?;
    let frozen_extrinsics: Vec<bool> = frozen
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(Error::parse(&state_path, *line, "bad frozen flags")),
        })
        .collect::<Result<_>>()?;

    let mut cameras = read_cameras(&dir.join("cameras.txt"))?;
    read_residuals(&dir.join("residuals.txt"), &mut cameras)?;
    if frozen_extrinsics.len() != cameras.len() {
        return Err(Error::parse(&state_path, *line, "frozen flags do not match camera count"));
    }
    let field = read_field(&dir.join("field.rfg"))?;
    let adam = read_adam(&dir.join("adam.adm"))?;
    let layout = Layout {
        shared_lens,
        frozen_extrinsics,
    };
    let lengths = ParamSet::group_lengths(&field, &cameras, &layout);
    if adam.groups.iter().zip(lengths).any(|(g, n)| g.m.len() != n || g.v.len() != n) {
        return Err(Error::DimensionMismatch("optimizer state does not match parameters".into()));
    }
    let metrics_path = dir.join("metrics.csv");
    let metrics = std::fs::read_to_string(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let history = parse_metrics(&metrics_path, &metrics)?;
    if history.len() as u64 != iter {
        return Err(Error::parse(&metrics_path, 0, "history length does not match iteration"));
    }
    Ok(TrainState {
        field,
        cameras,
        layout,
        adam,
        iter,
        history,
    })
}

/// Runs [`joint_step`] until `cfg.iterations`. With `out`, a checkpoint is
/// written to `out/checkpoint` every `checkpoint_every` iterations and at
/// the end, and the metrics log to `out/metrics.csv`.
pub fn calibrate(
    mut state: TrainState,
    data: &TrainData,
    cfg: &Config,
    out: Option<&Path>,
    mut progress: impl FnMut(&HistoryRow),
) -> Result<TrainState> {
    cfg.validate()?;
    while state.iter < cfg.iterations {
        joint_step(&mut state, data, cfg)?;
        if let Some(row) = state.history.last() {
            progress(row);
        }
        if let Some(dir) = out {
            if cfg.checkpoint_every > 0 && state.iter % cfg.checkpoint_every == 0 {
                write_checkpoint(&dir.join(CHECKPOINT_DIR), &state)?;
            }
        }
    }
    if let Some(dir) = out {
        write_checkpoint(&dir.join(CHECKPOINT_DIR), &state)?;
        write_atomic(&dir.join("metrics.csv"), state.metrics_csv().as_bytes())?;
    }
    Ok(state)
}
