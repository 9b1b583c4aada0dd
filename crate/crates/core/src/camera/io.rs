//! Text camera files.
//!
//! One block per camera:
//!
//! ```text
//! W H
//! f fx fy
//! c cx cy
//! k k1 k2
//! a a1x a1y a1z a2x a2y a2z
//! t tx ty tz
//! raxel Wg Hg            (optional)
//! <Wg·Hg lines: zdx zdy zdz zox zoy zoz>
//! ```
//!
//! Residual files use the same layout with every key prefixed by `d`
//! (`df`, `dc`, `dk`, `da`, `dt`, `draxel`). Floats are written in Rust's
//! shortest round-trip form, so a write/read cycle is value-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{CameraParams, Extrinsics, Intrinsics, RadialDistortion, RaxelGrids};
use crate::error::{Error, Result};

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

fn write_raxel(out: &mut String, key: &str, g: &RaxelGrids) {
    let _ = writeln!(out, "{key} {} {}", g.width, g.height);
    for (d, o) in g.dir.iter().zip(g.origin.iter()) {
        let _ = writeln!(out, "{}", join(&[d[0], d[1], d[2], o[0], o[1], o[2]]));
    }
}

/// Frozen initialization of each camera plus its raxel grid.
pub fn format_cameras(cams: &[CameraParams]) -> String {
    let mut out = String::new();
    for (i, cam) in cams.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "{} {}", cam.width, cam.height);
        let _ = writeln!(out, "f {}", join(&cam.intrinsics.f));
        let _ = writeln!(out, "c {}", join(&cam.intrinsics.c));
        let _ = writeln!(out, "k {}", join(&cam.radial.k0));
        let _ = writeln!(out, "a {}", join(&cam.extrinsics.a0));
        let _ = writeln!(out, "t {}", join(&cam.extrinsics.t0));
        write_raxel(&mut out, "raxel", &cam.raxel);
    }
    out
}

/// Learnable residuals of each camera.
pub fn format_residuals(cams: &[CameraParams]) -> String {
    let mut out = String::new();
    for (i, cam) in cams.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "{} {}", cam.width, cam.height);
        let _ = writeln!(out, "df {}", join(&cam.intrinsics.df));
        let _ = writeln!(out, "dc {}", join(&cam.intrinsics.dc));
        let _ = writeln!(out, "dk {}", join(&cam.radial.dk));
        let _ = writeln!(out, "da {}", join(&cam.extrinsics.da));
        let _ = writeln!(out, "dt {}", join(&cam.extrinsics.dt));
        write_raxel(&mut out, "draxel", &cam.raxel);
    }
    out
}

struct Block<'a> {
    size: (usize, usize),
    start_line: usize,
    lines: Vec<(usize, &'a str)>,
}

fn split_blocks<'a>(path: &Path, text: &'a str) -> Result<Vec<Block<'a>>> {
    let mut blocks: Vec<Block<'a>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() == 2 {
            if let (Ok(w), Ok(h)) = (toks[0].parse::<usize>(), toks[1].parse::<usize>()) {
                // Inside a raxel section two-token numeric lines cannot occur
                // (node lines carry six floats), so this always opens a block.
                blocks.push(Block {
                    size: (w, h),
                    start_line: line_no,
                    lines: Vec::new(),
                });
                continue;
            }
        }
        match blocks.last_mut() {
            Some(b) => b.lines.push((line_no, line)),
            None => return Err(Error::parse(path, line_no, "expected `W H` to start a camera block")),
        }
    }
    Ok(blocks)
}

fn parse_floats<const N: usize>(path: &Path, line_no: usize, toks: &[&str]) -> Result<[f64; N]> {
    if toks.len() != N {
        return Err(Error::parse(path, line_no, format!("expected {N} values, found {}", toks.len())));
    }
    let mut out = [0.0; N];
    for (o, t) in out.iter_mut().zip(toks) {
        let v: f64 = t
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("invalid number `{t}`")))?;
        if !v.is_finite() {
            return Err(Error::parse(path, line_no, format!("non-finite value `{t}`")));
        }
        *o = v;
    }
    Ok(out)
}

/// Fields of one block, keyed without the optional `d` prefix.
#[derive(Default)]
struct Fields {
    f: Option<[f64; 2]>,
    c: Option<[f64; 2]>,
    k: Option<[f64; 2]>,
    a: Option<[f64; 6]>,
    t: Option<[f64; 3]>,
    raxel: Option<RaxelGrids>,
}

fn parse_block(path: &Path, block: &Block<'_>, prefix: &str) -> Result<Fields> {
    let mut fields = Fields::default();
    let mut iter = block.lines.iter().peekable();
    while let Some(&(line_no, line)) = iter.next() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let Some(key) = toks[0].strip_prefix(prefix) else {
            return Err(Error::parse(path, line_no, format!("unexpected key `{}`", toks[0])));
        };
        let vals = &toks[1..];
        match key {
            "f" => fields.f = Some(parse_floats(path, line_no, vals)?),
            "c" => fields.c = Some(parse_floats(path, line_no, vals)?),
            "k" => fields.k = Some(parse_floats(path, line_no, vals)?),
            "a" => fields.a = Some(parse_floats(path, line_no, vals)?),
            "t" => fields.t = Some(parse_floats(path, line_no, vals)?),
            "raxel" => {
                if vals.len() != 2 {
                    return Err(Error::parse(path, line_no, "expected `raxel Wg Hg`"));
                }
                let dims: Vec<usize> = vals
                    .iter()
                    .map(|v| v.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(path, line_no, "invalid raxel grid size"))?;
                let mut grid = RaxelGrids::zeros(dims[0], dims[1])
                    .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
                for n in 0..grid.len() {
                    let Some(&(node_line, node)) = iter.next() else {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("raxel grid truncated after {n} of {} nodes", grid.len()),
                        ));
                    };
                    let toks: Vec<&str> = node.split_whitespace().collect();
                    let v: [f64; 6] = parse_floats(path, node_line, &toks)?;
                    grid.dir[n] = [v[0], v[1], v[2]];
                    grid.origin[n] = [v[3], v[4], v[5]];
                }
                fields.raxel = Some(grid);
            }
            other => return Err(Error::parse(path, line_no, format!("unknown key `{prefix}{other}`"))),
        }
    }
    Ok(fields)
}

fn require<T>(path: &Path, block: &Block<'_>, v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::parse(path, block.start_line, format!("camera block is missing `{key}`")))
}

pub fn parse_cameras(path: &Path, text: &str) -> Result<Vec<CameraParams>> {
    let mut cams = Vec::new();
    for block in split_blocks(path, text)? {
        let fields = parse_block(path, &block, "")?;
        let (width, height) = block.size;
        let raxel = match fields.raxel {
            Some(g) => g,
            None => RaxelGrids::default_for_image(width, height),
        };
        let cam = CameraParams {
            width,
            height,
            intrinsics: Intrinsics::new(
                require(path, &block, fields.f, "f")?,
                require(path, &block, fields.c, "c")?,
            ),
            extrinsics: Extrinsics::new(require(path, &block, fields.a, "a")?, require(path, &block, fields.t, "t")?),
            radial: RadialDistortion {
                k0: require(path, &block, fields.k, "k")?,
                dk: [0.0; 2],
            },
            raxel,
        };
        cam.validate()
            .map_err(|e| Error::parse(path, block.start_line, e.to_string()))?;
        cams.push(cam);
    }
    Ok(cams)
}

/// Applies residual blocks from `text` onto `cams` in order.
pub fn parse_residuals_into(path: &Path, text: &str, cams: &mut [CameraParams]) -> Result<()> {
    let blocks = split_blocks(path, text)?;
    if blocks.len() != cams.len() {
        return Err(Error::parse(
            path,
            1,
            format!("{} residual blocks for {} cameras", blocks.len(), cams.len()),
        ));
    }
    for (block, cam) in blocks.iter().zip(cams.iter_mut()) {
        if block.size != (cam.width, cam.height) {
            return Err(Error::parse(path, block.start_line, "residual block image size mismatch"));
        }
        let fields = parse_block(path, block, "d")?;
        cam.intrinsics.df = require(path, block, fields.f, "df")?;
        cam.intrinsics.dc = require(path, block, fields.c, "dc")?;
        cam.radial.dk = require(path, block, fields.k, "dk")?;
        cam.extrinsics.da = require(path, block, fields.a, "da")?;
        cam.extrinsics.dt = require(path, block, fields.t, "dt")?;
        if let Some(g) = fields.raxel {
            cam.raxel = g;
        }
    }
    Ok(())
}

pub fn read_cameras(path: &Path) -> Result<Vec<CameraParams>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cameras(path, &text)
}

pub fn read_residuals(path: &Path, cams: &mut [CameraParams]) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_residuals_into(path, &text, cams)
}

pub fn write_cameras(path: &Path, cams: &[CameraParams]) -> Result<()> {
    crate::io::write_atomic(path, format_cameras(cams).as_bytes())
}

pub fn write_residuals(path: &Path, cams: &[CameraParams]) -> Result<()> {
    crate::io::write_atomic(path, format_residuals(cams).as_bytes())
}
