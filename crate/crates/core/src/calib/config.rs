use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::CurriculumSchedule;
use crate::diff::Group;
use crate::error::{Error, Result};
use crate::synth::parse_key_values;

/// Learning rate from the reference NeRF setup.
pub const DEFAULT_LR: f64 = 0.0005;

/// Training configuration, read from flat `key=value` text.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub iterations: u64,
    pub schedule: CurriculumSchedule,
    /// Master switch for the projected-ray-distance term.
    pub prd: bool,
    pub batch: usize,
    pub grid: usize,
    /// Initial density pre-activation of every voxel.
    pub field_init: f64,
    pub samples: usize,
    pub stratified: bool,
    /// Base learning rate per group, indexed by [`Group::index`].
    pub lr: [f64; 5],
    pub lr_decay: u64,
    pub shared_lens: bool,
    pub freeze_first: bool,
    pub pair_angle_deg: f64,
    pub min_shared: usize,
    pub checkpoint_every: u64,
    pub scene: Option<PathBuf>,
    pub cameras: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            iterations: 8000,
            schedule: CurriculumSchedule::default(),
            prd: true,
            batch: 1024,
            grid: 24,
            field_init: -2.0,
            samples: 48,
            stratified: false,
            lr: [DEFAULT_LR; 5],
            lr_decay: 400_000,
            shared_lens: true,
            freeze_first: true,
            pair_angle_deg: 30.0,
            min_shared: 8,
            checkpoint_every: 0,
            scene: None,
            cameras: None,
            out: None,
        }
    }
}

fn lr_key(g: Group) -> String {
    format!("lr_{}", g.name())
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.batch == 0 {
            return Err(Error::Invalid("batch must be positive".into()));
        }
        if self.grid < 2 || self.samples < 2 {
            return Err(Error::Invalid("grid and samples must be at least 2".into()));
        }
        if self.lr.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Invalid("learning rates must be finite and non-negative".into()));
        }
        if self.lr_decay == 0 {
            return Err(Error::Invalid("lr_decay must be positive".into()));
        }
        if !(self.pair_angle_deg >= 0.0) {
            return Err(Error::Invalid("pair_angle must be non-negative".into()));
        }
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse {v:?}"))
        }
        fn float(v: &str) -> std::result::Result<f64, String> {
            let x: f64 = num(v)?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(format!("{v:?} is not finite"))
            }
        }
        fn flag(v: &str) -> std::result::Result<bool, String> {
            match v {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(format!("expected a boolean, got {v:?}")),
            }
        }
        let s = &mut self.schedule;
        match key {
            "seed" => self.seed = num(value)?,
            "iterations" => self.iterations = num(value)?,
            "phase_camera" => s.phase_camera = num(value)?,
            "phase_radial" => s.phase_radial = num(value)?,
            "phase_raxel" => s.phase_raxel = num(value)?,
            "prd" => self.prd = flag(value)?,
            "prd_start" => s.prd_start = Some(num(value)?),
            "prd_every" => s.prd_every = num(value)?,
            "lambda" => s.lambda = float(value)?,
            "eta" => s.eta = float(value)?,
            "batch" => self.batch = num(value)?,
            "grid" => self.grid = num(value)?,
            "field_init" => self.field_init = float(value)?,
            "samples" => self.samples = num(value)?,
            "stratified" => self.stratified = flag(value)?,
            "lr" => self.lr = [float(value)?; 5],
            "lr_decay" => self.lr_decay = num(value)?,
            "shared_lens" => self.shared_lens = flag(value)?,
            "freeze_first" => self.freeze_first = flag(value)?,
            "pair_angle" => self.pair_angle_deg = float(value)?,
            "min_shared" => self.min_shared = num(value)?,
            "checkpoint_every" => self.checkpoint_every = num(value)?,
            "scene" => self.scene = Some(PathBuf::from(value)),
            "cameras" => self.cameras = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            _ => match Group::ALL.into_iter().find(|g| lr_key(*g) == key) {
                Some(g) => self.lr[g.index()] = float(value)?,
                None => return Err(format!("unknown key {key:?}")),
            },
        }
        Ok(())
    }

    /// Parses a config file on top of the defaults.
    pub fn parse(path: &Path, text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        for (key, (line, value)) in parse_key_values(path, text)? {
            cfg.set(&key, &value).map_err(|m| Error::parse(path, line, format!("{key}: {m}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(path, &text)
    }

    /// Every setting, one `key=value` per line; parses back to `self`.
    pub fn to_text(&self) -> String {
        let s = &self.schedule;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("seed", self.seed.to_string());
        put("iterations", self.iterations.to_string());
        put("phase_camera", s.phase_camera.to_string());
        put("phase_radial", s.phase_radial.to_string());
        put("phase_raxel", s.phase_raxel.to_string());
        put("prd", self.prd.to_string());
        put("prd_start", s.prd_start().to_string());
        put("prd_every", s.prd_every.to_string());
        put("lambda", format!("{:?}", s.lambda));
        put("eta", format!("{:?}", s.eta));
        put("batch", self.batch.to_string());
        put("grid", self.grid.to_string());
        put("field_init", format!("{:?}", self.field_init));
        put("samples", self.samples.to_string());
        put("stratified", self.stratified.to_string());
        for g in Group::ALL {
            put(&lr_key(g), format!("{:?}", self.lr[g.index()]));
        }
        put("lr_decay", self.lr_decay.to_string());
        put("shared_lens", self.shared_lens.to_string());
        put("freeze_first", self.freeze_first.to_string());
        put("pair_angle", format!("{:?}", self.pair_angle_deg));
        put("min_shared", self.min_shared.to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        for (k, v) in [("scene", &self.scene), ("cameras", &self.cameras), ("out", &self.out)] {
            if let Some(p) = v {
                put(k, p.display().to_string());
            }
        }
        out
    }
}
