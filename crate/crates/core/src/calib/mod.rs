//! Curriculum schedule, pair selection and the joint training loop.

mod check;
mod config;
mod train;

pub use check::{gradient_suite, CamBlock, CheckLine, GradReport, SuiteInput, FD_EPS};
pub use config::{Config, DEFAULT_LR};
pub use train::{
    calibrate, joint_step, parse_metrics, read_checkpoint, write_checkpoint, HistoryRow, StepOutcome, TrainData, TrainState,
    CHECKPOINT_DIR, METRICS_HEADER,
};

use rand::Rng;

use crate::camera::CameraParams;
use crate::diff::{Group, GroupSet};
use crate::error::{Error, Result};
use crate::math::{dot, V3};
use crate::rays::Correspondence;

/// Slack on the pair angle gate so that cameras exactly at the limit pass
/// despite rounding in the optical axes.
pub const ANGLE_TOLERANCE_DEG: f64 = 1e-9;

/// Phase boundaries are the first iteration of each phase.
#[derive(Clone, Debug, PartialEq)]
pub struct CurriculumSchedule {
    pub phase_camera: u64,
    pub phase_radial: u64,
    pub phase_raxel: u64,
    /// Defaults to `phase_camera` when unset.
    pub prd_start: Option<u64>,
    pub prd_every: u64,
    pub lambda: f64,
    pub eta: f64,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        CurriculumSchedule {
            phase_camera: 2000,
            phase_radial: 4000,
            phase_raxel: 6000,
            prd_start: None,
            prd_every: 10,
            lambda: 0.1,
            eta: 5.0,
        }
    }
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.phase_camera <= self.phase_radial && self.phase_radial <= self.phase_raxel) {
            return Err(Error::Invalid(format!(
                "phase boundaries must be nondecreasing: {} {} {}",
                self.phase_camera, self.phase_radial, self.phase_raxel
            )));
        }
        if self.prd_every == 0 {
            return Err(Error::Invalid("prd_every must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Invalid(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn prd_start(&self) -> u64 {
        self.prd_start.unwrap_or(self.phase_camera)
    }

    pub fn get_params(&self, iter: u64) -> GroupSet {
        let mut s = GroupSet::empty().with(Group::Field);
        if iter >= self.phase_camera {
            s.insert(Group::Intrinsics);
            s.insert(Group::Extrinsics);
        }
        if iter >= self.phase_radial {
            s.insert(Group::Radial);
        }
        if iter >= self.phase_raxel {
            s.insert(Group::Raxel);
        }
        s
    }

    pub fn prd_due(&self, iter: u64) -> bool {
        iter >= self.prd_start() && iter % self.prd_every == 0
    }
}

fn axis_angle_deg(a: V3, b: V3) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Correspondences between each unordered camera pair, by index into the
/// original list.
#[derive(Clone, Debug, Default)]
pub struct PairIndex {
    cameras: usize,
    lists: Vec<Vec<usize>>,
}

impl PairIndex {
    pub fn new(cameras: usize, corrs: &[Correspondence]) -> Result<Self> {
        let mut lists = vec![Vec::new(); cameras * cameras];
        for (k, c) in corrs.iter().enumerate() {
            if c.cam_a >= cameras || c.cam_b >= cameras || c.cam_a == c.cam_b {
                return Err(Error::Invalid(format!(
                    "correspondence {k} references cameras ({}, {}) of {cameras}",
                    c.cam_a, c.cam_b
                )));
            }
            let (a, b) = (c.cam_a.min(c.cam_b), c.cam_a.max(c.cam_b));
            lists[a * cameras + b].push(k);
        }
        Ok(PairIndex { cameras, lists })
    }

    pub fn between(&self, a: usize, b: usize) -> &[usize] {
        if a >= self.cameras || b >= self.cameras || a == b {
            return &[];
        }
        &self.lists[a.min(b) * self.cameras + a.max(b)]
    }
}

/// Targets within `max_angle_deg` of `source`'s optical axis that share at
/// least `min_shared` correspondences with it, in index order.
pub fn pair_candidates(
    source: usize,
    cameras: &[CameraParams],
    index: &PairIndex,
    max_angle_deg: f64,
    min_shared: usize,
) -> Result<Vec<usize>> {
    if cameras.len() < 2 {
        return Err(Error::Invalid("pair selection needs at least two cameras".into()));
    }
    if source >= cameras.len() {
        return Err(Error::Invalid(format!("source camera {source} of {}", cameras.len())));
    }
    let axis = cameras[source].optical_axis()?;
    let mut out = Vec::new();
    for (t, cam) in cameras.iter().enumerate() {
        if t == source || index.between(source, t).len() < min_shared.max(1) {
            continue;
        }
        if axis_angle_deg(axis, cam.optical_axis()?) <= max_angle_deg + ANGLE_TOLERANCE_DEG {
            out.push(t);
        }
    }
    Ok(out)
}

/// Uniform draw from [`pair_candidates`]; `None` when there is none.
pub fn select_pair<R: Rng + ?Sized>(
    source: usize,
    cameras: &[CameraParams],
    index: &PairIndex,
    max_angle_deg: f64,
    min_shared: usize,
    rng: &mut R,
) -> Result<Option<usize>> {
    let c = pair_candidates(source, cameras, index, max_angle_deg, min_shared)?;
    if c.is_empty() {
        return Ok(None);
    }
    Ok(Some(c[rng.random_range(0..c.len())]))
}
