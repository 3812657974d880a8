//! Persistent grid files.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! "PDMPQGRD" u32:version
//! u32:len model-id bytes   u64:N   f64:p   u64:seed
//! u64:pilot u64:training u64:companion u8:schedule f64:a f64:b u8:state-only
//! (N+1) x u64:grid size
//! per step:  f64:joint f64:state f64:time distortions,
//!            u16:scaled modes, per mode u16:mode u16:width width x f64:scale,
//!            then per point u16:mode u16:dim dim x f64:coord f64:time f64:weight
//! per pair:  u64:nnz, then nnz x (u32:row u32:col f64:prob), row-major
//! ```
//!
//! The text form carries the same fields line by line with shortest
//! round-trip float formatting, so it is lossless too.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use super::{Distortion, GridPoint, QuantizedChain, Schedule, StepGrid, TrainingMeta, Transition};
use crate::error::{Error, Result};
use crate::point::{HybridPoint, Mode};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PDMPQGRD";
const TEXT_HEADER: &str = "pdmp-quantized-chain";

fn schedule_fields(s: &Schedule) -> (u8, f64, f64) {
    match *s {
        Schedule::Shared { a, b } => (0, a, b.unwrap_or(f64::NAN)),
        Schedule::PerPoint { a, b } => (1, a, b),
    }
}

fn schedule_from(tag: u8, a: f64, b: f64) -> Result<Schedule> {
    match tag {
        0 => Ok(Schedule::Shared {
            a,
            b: (!b.is_nan()).then_some(b),
        }),
        1 => Ok(Schedule::PerPoint { a, b }),
        t => Err(Error::GridFormat(format!("unknown schedule tag {t}"))),
    }
}

pub fn encode(chain: &QuantizedChain) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(chain.model_id.len() as u32).to_le_bytes());
    out.extend_from_slice(chain.model_id.as_bytes());
    out.extend_from_slice(&(chain.horizon as u64).to_le_bytes());
    out.extend_from_slice(&chain.p.to_le_bytes());
    out.extend_from_slice(&chain.seed.to_le_bytes());
    let m = &chain.meta;
    for n in [m.pilot_paths, m.training_paths, m.companion_paths] {
        out.extend_from_slice(&n.to_le_bytes());
    }
    let (tag, a, b) = schedule_fields(&m.schedule);
    out.push(tag);
    out.extend_from_slice(&a.to_le_bytes());
    out.extend_from_slice(&b.to_le_bytes());
    out.push(u8::from(m.state_only));
    for step in &chain.steps {
        out.extend_from_slice(&(step.len() as u64).to_le_bytes());
    }
    for step in &chain.steps {
        let d = step.distortion;
        for v in [d.joint, d.state, d.time] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(step.scales.len() as u16).to_le_bytes());
        for (mode, sc) in &step.scales {
            out.extend_from_slice(&mode.0.to_le_bytes());
            out.extend_from_slice(&(sc.len() as u16).to_le_bytes());
            for v in sc {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for (g, w) in step.points.iter().zip(&step.weights) {
            out.extend_from_slice(&g.state.mode.0.to_le_bytes());
            out.extend_from_slice(&(g.state.dim() as u16).to_le_bytes());
            for c in &g.state.coords {
                out.extend_from_slice(&c.to_le_bytes());
            }
            out.extend_from_slice(&g.time.to_le_bytes());
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    for tr in &chain.transitions {
        out.extend_from_slice(&(tr.nnz() as u64).to_le_bytes());
        for (i, row) in tr.rows.iter().enumerate() {
            for &(j, q) in row {
                out.extend_from_slice(&(i as u32).to_le_bytes());
                out.extend_from_slice(&j.to_le_bytes());
                out.extend_from_slice(&q.to_le_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::GridFormat(format!("truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::GridFormat("count overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

pub fn decode(bytes: &[u8]) -> Result<QuantizedChain> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(MAGIC.len())? != MAGIC {
        return Err(Error::GridFormat("not a grid file (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::GridFormat(format!(
            "unsupported format version {version}"
        )));
    }
    let id_len = c.u32()? as usize;
    let model_id = String::from_utf8(c.take(id_len)?.to_vec())
        .map_err(|_| Error::GridFormat("model id is not UTF-8".into()))?;
    let horizon = c.usize()?;
    let p = c.f64()?;
    let seed = c.u64()?;
    let (pilot_paths, training_paths, companion_paths) = (c.u64()?, c.u64()?, c.u64()?);
    let (tag, a, b) = (c.u8()?, c.f64()?, c.f64()?);
    let schedule = schedule_from(tag, a, b)?;
    let state_only = c.u8()? != 0;
    let sizes = (0..=horizon)
        .map(|_| c.usize())
        .collect::<Result<Vec<_>>>()?;
    let mut steps = Vec::with_capacity(horizon + 1);
    for &n in &sizes {
        let distortion = Distortion {
            joint: c.f64()?,
            state: c.f64()?,
            time: c.f64()?,
        };
        let mut scales = BTreeMap::new();
        for _ in 0..c.u16()? {
            let mode = Mode(c.u16()?);
            let width = c.u16()? as usize;
            scales.insert(
                mode,
                (0..width).map(|_| c.f64()).collect::<Result<Vec<_>>>()?,
            );
        }
        let mut points = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            let mode = Mode(c.u16()?);
            let dim = c.u16()? as usize;
            let coords = (0..dim).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
            let state = if mode.is_cemetery() {
                HybridPoint::cemetery()
            } else {
                HybridPoint::new(mode, &coords)
            };
            points.push(GridPoint::new(state, c.f64()?));
            weights.push(c.f64()?);
        }
        steps.push(StepGrid {
            points,
            weights,
            distortion,
            scales,
        });
    }
    let mut transitions = Vec::with_capacity(horizon);
    for (k, &size) in sizes.iter().enumerate().take(horizon) {
        let nnz = c.usize()?;
        let mut rows = vec![Vec::new(); size];
        for _ in 0..nnz {
            let (i, j, q) = (c.u32()? as usize, c.u32()?, c.f64()?);
            rows.get_mut(i)
                .ok_or_else(|| Error::GridFormat(format!("transition {k}: row {i} out of range")))?
                .push((j, q));
        }
        transitions.push(Transition { rows });
    }
    if c.at != bytes.len() {
        return Err(Error::GridFormat(format!(
            "{} trailing bytes",
            bytes.len() - c.at
        )));
    }
    let chain = QuantizedChain {
        model_id,
        horizon,
        p,
        seed,
        steps,
        transitions,
        meta: TrainingMeta {
            pilot_paths,
            training_paths,
            companion_paths,
            schedule,
            state_only,
        },
    };
    chain.validate()?;
    Ok(chain)
}

pub fn write_grid(chain: &QuantizedChain, path: &Path) -> Result<()> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    file.write_all(&encode(chain))?;
    file.flush()?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<QuantizedChain> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn encode_text(chain: &QuantizedChain) -> String {
    let mut s = String::new();
    let m = &chain.meta;
    let (tag, a, b) = schedule_fields(&m.schedule);
    // Writing into a String cannot fail.
    let _ = writeln!(s, "{TEXT_HEADER} {FORMAT_VERSION}");
    let _ = writeln!(s, "model {}", chain.model_id);
    let _ = writeln!(s, "horizon {}", chain.horizon);
    let _ = writeln!(s, "p {:?}", chain.p);
    let _ = writeln!(s, "seed {}", chain.seed);
    let _ = writeln!(
        s,
        "meta {} {} {} {tag} {a:?} {b:?} {}",
        m.pilot_paths,
        m.training_paths,
        m.companion_paths,
        u8::from(m.state_only)
    );
    for (k, step) in chain.steps.iter().enumerate() {
        let d = step.distortion;
        let _ = writeln!(
            s,
            "step {k} {} {:?} {:?} {:?} {}",
            step.len(),
            d.joint,
            d.state,
            d.time,
            step.scales.len()
        );
        for (mode, sc) in &step.scales {
            let _ = write!(s, "scale {}", mode.0);
            for v in sc {
                let _ = write!(s, " {v:?}");
            }
            let _ = writeln!(s);
        }
        for (g, w) in step.points.iter().zip(&step.weights) {
            let _ = write!(s, "{}", g.state.mode.0);
            for c in &g.state.coords {
                let _ = write!(s, " {c:?}");
            }
            let _ = writeln!(s, " | {:?} {w:?}", g.time);
        }
    }
    for (k, tr) in chain.transitions.iter().enumerate() {
        let _ = writeln!(s, "transition {k} {}", tr.nnz());
        for (i, row) in tr.rows.iter().enumerate() {
            for &(j, q) in row {
                let _ = writeln!(s, "{i} {j} {q:?}");
            }
        }
    }
    s
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::GridFormat(format!("expected {what}, found {tok:?}")))
}

fn keyed<'a>(line: Option<&'a str>, key: &str) -> Result<std::str::SplitWhitespace<'a>> {
    let line = line.ok_or_else(|| Error::GridFormat(format!("missing `{key}` line")))?;
    let mut toks = line.split_whitespace();
    if toks.next() != Some(key) {
        return Err(Error::GridFormat(format!(
            "expected `{key}`, found `{line}`"
        )));
    }
    Ok(toks)
}

pub fn decode_text(text: &str) -> Result<QuantizedChain> {
    let mut lines = text.lines();
    let version: u32 = parse(keyed(lines.next(), TEXT_HEADER)?.next(), "format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::GridFormat(format!(
            "unsupported format version {version}"
        )));
    }
    let model_line = lines
        .next()
        .ok_or_else(|| Error::GridFormat("missing model line".into()))?;
    let model_id = model_line
        .strip_prefix("model ")
        .ok_or_else(|| Error::GridFormat(format!("expected `model`, found `{model_line}`")))?
        .to_string();
    let horizon: usize = parse(keyed(lines.next(), "horizon")?.next(), "horizon")?;
    let p: f64 = parse(keyed(lines.next(), "p")?.next(), "p")?;
    let seed: u64 = parse(keyed(lines.next(), "seed")?.next(), "seed")?;
    let mut meta = keyed(lines.next(), "meta")?;
    let pilot_paths: u64 = parse(meta.next(), "pilot paths")?;
    let training_paths: u64 = parse(meta.next(), "training paths")?;
    let companion_paths: u64 = parse(meta.next(), "companion paths")?;
    let tag: u8 = parse(meta.next(), "schedule tag")?;
    let a: f64 = parse(meta.next(), "schedule a")?;
    let b: f64 = parse(meta.next(), "schedule b")?;
    let state_only = parse::<u8>(meta.next(), "state-only flag")? != 0;

    let mut steps = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        let mut head = keyed(lines.next(), "step")?;
        let index: usize = parse(head.next(), "step index")?;
        if index != k {
            return Err(Error::GridFormat(format!(
                "expected step {k}, found {index}"
            )));
        }
        let n: usize = parse(head.next(), "point count")?;
        let distortion = Distortion {
            joint: parse(head.next(), "distortion")?,
            state: parse(head.next(), "distortion")?,
            time: parse(head.next(), "distortion")?,
        };
        let scale_count: usize = parse(head.next(), "scale count")?;
        let mut scales = BTreeMap::new();
        for _ in 0..scale_count {
            let mut t = keyed(lines.next(), "scale")?;
            let mode = Mode(parse(t.next(), "mode")?);
            let values = t
                .map(|v| parse(Some(v), "scale"))
                .collect::<Result<Vec<f64>>>()?;
            scales.insert(mode, values);
        }
        let mut points = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::GridFormat(format!("step {k}: missing point")))?;
            let (left, right) = line
                .split_once('|')
                .ok_or_else(|| Error::GridFormat(format!("step {k}: malformed point `{line}`")))?;
            let mut l = left.split_whitespace();
            let mode = Mode(parse(l.next(), "mode")?);
            let coords = l
                .map(|t| parse(Some(t), "coordinate"))
                .collect::<Result<Vec<f64>>>()?;
            let mut r = right.split_whitespace();
            let time: f64 = parse(r.next(), "time")?;
            weights.push(parse(r.next(), "weight")?);
            let state = if mode.is_cemetery() {
                HybridPoint::cemetery()
            } else {
                HybridPoint::new(mode, &coords)
            };
            points.push(GridPoint::new(state, time));
        }
        steps.push(StepGrid {
            points,
            weights,
            distortion,
            scales,
        });
    }
    let mut transitions = Vec::with_capacity(horizon);
    for (k, step) in steps.iter().enumerate().take(horizon) {
        let mut head = keyed(lines.next(), "transition")?;
        let _index: usize = parse(head.next(), "transition index")?;
        let nnz: usize = parse(head.next(), "entry count")?;
        let mut rows = vec![Vec::new(); step.len()];
        for _ in 0..nnz {
            let mut t = lines
                .next()
                .ok_or_else(|| Error::GridFormat(format!("transition {k}: missing entry")))?
                .split_whitespace();
            let i: usize = parse(t.next(), "row")?;
            let j: u32 = parse(t.next(), "column")?;
            let q: f64 = parse(t.next(), "probability")?;
            rows.get_mut(i)
                .ok_or_else(|| Error::GridFormat(format!("transition {k}: row {i} out of range")))?
                .push((j, q));
        }
        transitions.push(Transition { rows });
    }
    let chain = QuantizedChain {
        model_id,
        horizon,
        p,
        seed,
        steps,
        transitions,
        meta: TrainingMeta {
            pilot_paths,
            training_paths,
            companion_paths,
            schedule: schedule_from(tag, a, b)?,
            state_only,
        },
    };
    chain.validate()?;
    Ok(chain)
}

pub fn write_grid_text(chain: &QuantizedChain, path: &Path) -> Result<()> {
    fs::write(path, encode_text(chain))?;
    Ok(())
}

pub fn read_grid_text(path: &Path) -> Result<QuantizedChain> {
    decode_text(&fs::read_to_string(path)?)
}
