//! Adam with bias correction and per-group step counters.
//!
//! Checkpoint layout: `ADM1`, `u32` group count, then per group `u32` id,
//! `u64` step, `u64` length, and the first and second moment vectors as
//! little-endian `f64`.

use std::path::Path;

use super::{Group, GroupSet, ParamSet};
use crate::error::{Error, Result};
use crate::io::{write_atomic, ByteReader};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// `base · 0.1^(iter / decay_steps)`.
pub fn lr_at(base: f64, iter: u64, decay_steps: u64) -> f64 {
    base * 0.1f64.powf(iter as f64 / decay_steps.max(1) as f64)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroupMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub groups: [GroupMoments; 5],
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        AdamState {
            groups: std::array::from_fn(|g| GroupMoments {
                m: vec![0.0; params.values[g].len()],
                v: vec![0.0; params.values[g].len()],
                step: 0,
            }),
        }
    }

    /// One update of every group in `active` with learning rate `lr[group]`.
    /// Inactive groups are left untouched. Any non-finite gradient in an
    /// active group aborts before anything is modified.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet, active: GroupSet, lr: &[f64; 5]) -> Result<()> {
        for g in active.iter() {
            let gi = g.index();
            let n = params.values[gi].len();
            if grads.values[gi].len() != n || self.groups[gi].m.len() != n {
                return Err(Error::DimensionMismatch(format!("{} group length changed", g.name())));
            }
            if let Some(i) = grads.values[gi].iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("{} gradient at index {i}", g.name())));
            }
        }
        for g in active.iter() {
            let gi = g.index();
            let st = &mut self.groups[gi];
            st.step += 1;
            let bc1 = 1.0 - BETA1.powi(st.step.min(i32::MAX as u64) as i32);
            let bc2 = 1.0 - BETA2.powi(st.step.min(i32::MAX as u64) as i32);
            let rate = lr[gi];
            for ((p, &gr), (m, v)) in params.values[gi]
                .iter_mut()
                .zip(&grads.values[gi])
                .zip(st.m.iter_mut().zip(st.v.iter_mut()))
            {
                *m = BETA1 * *m + (1.0 - BETA1) * gr;
                *v = BETA2 * *v + (1.0 - BETA2) * gr * gr;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *p -= rate * mh / (vh.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

pub fn encode_adam(state: &AdamState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"ADM1");
    out.extend_from_slice(&(Group::ALL.len() as u32).to_le_bytes());
    for g in Group::ALL {
        let st = &state.groups[g.index()];
        out.extend_from_slice(&(g.index() as u32).to_le_bytes());
        out.extend_from_slice(&st.step.to_le_bytes());
        out.extend_from_slice(&(st.m.len() as u64).to_le_bytes());
        for x in st.m.iter().chain(&st.v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_adam(path: &Path, bytes: &[u8]) -> Result<AdamState> {
    let mut r = ByteReader::new(path, bytes);
    if r.take(4)? != b"ADM1" {
        return Err(Error::parse(path, 0, "missing ADM1 header"));
    }
    if r.u32()? as usize != Group::ALL.len() {
        return Err(r.err("unexpected group count"));
    }
    let mut groups: [GroupMoments; 5] = Default::default();
    for (expect, slot) in groups.iter_mut().enumerate() {
        if r.u32()? as usize != expect {
            return Err(r.err("groups out of order"));
        }
        slot.step = r.u64()?;
        let n = r.u64()? as usize;
        if n > bytes.len() / 16 {
            return Err(r.err("group length exceeds file size"));
        }
        slot.m = (0..n).map(|_| r.f64()).collect::<Result<_>>()?;
        slot.v = (0..n).map(|_| r.f64()).collect::<Result<_>>()?;
    }
    r.finish()?;
    Ok(AdamState { groups })
}

pub fn write_adam(path: &Path, state: &AdamState) -> Result<()> {
    write_atomic(path, &encode_adam(state))
}

pub fn read_adam(path: &Path) -> Result<AdamState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_adam(path, &bytes)
}
