//! Binary phase-history and estimate files, CSV tables and PGM images.
//!
//! Phase-history layout (`KPH1`), all integers and floats little-endian:
//!
//! ```text
//! magic "KPH1" | version u16 | flags u16 (8 = f64 re/im pairs)
//! p u32 | q u32 | K u32 | n_bins u32
//! K·n_bins·p·q entries (re f64, im f64), pass-major, then bin, then channel rows
//! target count u32, then per target: bin u32 | f f64 | α_re f64 | α_im f64
//! ```
//!
//! A target's `bin` field is `pass · n_bins + bin`, which is just the bin index
//! for single-pass files.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::lrkron::{Convergence, KronCovEstimate};
use crate::sim::{PhaseHistory, Target};
use crate::stap::DetectionMap;

pub const PHASE_HISTORY_MAGIC: &[u8; 4] = b"KPH1";
pub const ESTIMATE_MAGIC: &[u8; 4] = b"KES1";
pub const FORMAT_VERSION: u16 = 1;
/// Precision flag: each entry is two 64-bit floats.
pub const DOUBLE_PRECISION: u16 = 8;

const HEADER_LEN: usize = 24;

/// Size in bytes of a phase-history file.
pub fn phase_history_len(
    p: usize,
    q: usize,
    passes: usize,
    n_bins: usize,
    targets: usize,
) -> usize {
    HEADER_LEN + passes * n_bins * p * q * 16 + 4 + targets * 28
}

fn put_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(buf: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v =
        u32::try_from(v).map_err(|_| Error::Format(format!("{what} = {v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_entries(buf: &mut Vec<u8>, entries: &[C64]) {
    for z in entries {
        put_f64(buf, z.re);
        put_f64(buf, z.im);
    }
}

pub fn write_phase_history(mut w: impl Write, cube: &PhaseHistory) -> Result<()> {
    let (p, q, k, n_bins) = (cube.p(), cube.q(), cube.passes(), cube.n_bins());
    let mut buf = Vec::with_capacity(phase_history_len(p, q, k, n_bins, cube.truth().len()));
    buf.extend_from_slice(PHASE_HISTORY_MAGIC);
    put_u16(&mut buf, FORMAT_VERSION);
    put_u16(&mut buf, DOUBLE_PRECISION);
    put_u32(&mut buf, p, "p")?;
    put_u32(&mut buf, q, "q")?;
    put_u32(&mut buf, k, "K")?;
    put_u32(&mut buf, n_bins, "n_bins")?;
    put_entries(&mut buf, cube.as_slice());
    put_u32(&mut buf, cube.truth().len(), "target count")?;
    for t in cube.truth() {
        put_u32(&mut buf, t.pass * n_bins + t.bin, "target bin")?;
        put_f64(&mut buf, t.doppler);
        put_f64(&mut buf, t.amplitude.re);
        put_f64(&mut buf, t.amplitude.im);
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Sequential little-endian reader over an in-memory file.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "file truncated while reading {what} at byte {}",
                    self.pos
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn entries(&mut self, n: usize, what: &str) -> Result<Vec<C64>> {
        let bytes = n
            .checked_mul(16)
            .ok_or_else(|| Error::Format(format!("{what} size overflows")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} unexpected trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.u16("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let flags = self.u16("flags")?;
        if flags != DOUBLE_PRECISION {
            return Err(Error::Format(format!("unsupported precision flag {flags}")));
        }
        Ok(())
    }
}

pub fn read_phase_history(mut r: impl Read) -> Result<PhaseHistory> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    c.header(PHASE_HISTORY_MAGIC)?;
    let p = c.u32("p")?;
    let q = c.u32("q")?;
    let k = c.u32("K")?;
    let n_bins = c.u32("n_bins")?;
    if p == 0 || q == 0 || k == 0 || n_bins == 0 {
        return Err(Error::Format(format!(
            "empty cube p={p} q={q} K={k} n_bins={n_bins}"
        )));
    }
    let count = [q, k, n_bins]
        .iter()
        .try_fold(p, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("cube size overflows".into()))?;
    let data = c.entries(count, "payload")?;
    let n_targets = c.u32("target count")?;
    let mut truth = Vec::with_capacity(n_targets.min(bytes.len() / 28));
    for _ in 0..n_targets {
        let index = c.u32("target bin")?;
        let doppler = c.f64("target Doppler")?;
        let re = c.f64("target amplitude")?;
        let im = c.f64("target amplitude")?;
        if index >= k * n_bins {
            return Err(Error::Format(format!("target bin {index} out of range")));
        }
        truth.push(Target {
            pass: index / n_bins,
            bin: index % n_bins,
            doppler,
            amplitude: C64::new(re, im),
        });
    }
    c.finish()?;
    PhaseHistory::from_parts(p, q, k, n_bins, data, truth).map_err(|e| Error::Format(e.to_string()))
}

/// Estimate file (`KES1`): header as for phase histories, then
/// `p, q, r_a, r_b, iterations, status` as u32 (status 0 = converged,
/// 1 = iteration limit), `Â` and `B̂` row-major as re/im f64 pairs, then the
/// residual history as a u32 count followed by f64 values.
pub fn write_estimate(mut w: impl Write, est: &KronCovEstimate) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(ESTIMATE_MAGIC);
    put_u16(&mut buf, FORMAT_VERSION);
    put_u16(&mut buf, DOUBLE_PRECISION);
    put_u32(&mut buf, est.p(), "p")?;
    put_u32(&mut buf, est.q(), "q")?;
    put_u32(&mut buf, est.spatial_rank(), "r_a")?;
    put_u32(&mut buf, est.temporal_rank(), "r_b")?;
    put_u32(&mut buf, est.iterations(), "iterations")?;
    let status = match est.status() {
        Convergence::Converged => 0,
        Convergence::MaxIterations => 1,
    };
    put_u32(&mut buf, status, "status")?;
    put_entries(&mut buf, est.a_hat().as_slice());
    put_entries(&mut buf, est.b_hat().as_slice());
    put_u32(&mut buf, est.residual_history().len(), "history length")?;
    for &eta in est.residual_history() {
        put_f64(&mut buf, eta);
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_estimate(mut r: impl Read) -> Result<KronCovEstimate> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    c.header(ESTIMATE_MAGIC)?;
    let p = c.u32("p")?;
    let q = c.u32("q")?;
    let r_a = c.u32("r_a")?;
    let r_b = c.u32("r_b")?;
    let iterations = c.u32("iterations")?;
    let status = match c.u32("status")? {
        0 => Convergence::Converged,
        1 => Convergence::MaxIterations,
        s => return Err(Error::Format(format!("unknown status {s}"))),
    };
    let sq = |n: usize| {
        n.checked_mul(n)
            .ok_or_else(|| Error::Format("factor size overflows".into()))
    };
    let a = c.entries(sq(p)?, "spatial factor")?;
    let b = c.entries(sq(q)?, "temporal factor")?;
    let n = c.u32("history length")?;
    let history = (0..n)
        .map(|_| c.f64("residual history"))
        .collect::<Result<Vec<_>>>()?;
    c.finish()?;
    let to_format = |e: Error| Error::Format(e.to_string());
    let a = ComplexMatrix::from_row_major(p, p, a).map_err(to_format)?;
    let b = ComplexMatrix::from_row_major(q, q, b).map_err(to_format)?;
    KronCovEstimate::from_factors(a, b, r_a, r_b, iterations, history, status).map_err(to_format)
}

/// `iteration,eta` with 1-based iteration numbers.
pub fn write_residual_csv(mut w: impl Write, history: &[f64]) -> io::Result<()> {
    writeln!(w, "iteration,eta")?;
    for (k, eta) in history.iter().enumerate() {
        writeln!(w, "{},{}", k + 1, eta)?;
    }
    Ok(())
}

/// Matrix CSV: header `range_bin,<Doppler values>`, then one row per range bin.
pub fn write_matrix_csv(mut w: impl Write, doppler: &[f64], values: &[f64]) -> io::Result<()> {
    write!(w, "range_bin")?;
    for f in doppler {
        write!(w, ",{f}")?;
    }
    writeln!(w)?;
    if doppler.is_empty() {
        return Ok(());
    }
    for (m, row) in values.chunks(doppler.len()).enumerate() {
        write!(w, "{m}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_detection_csv(w: impl Write, map: &DetectionMap) -> io::Result<()> {
    write_matrix_csv(w, map.doppler_grid(), map.values())
}

/// Parses a matrix CSV written by [`write_matrix_csv`] into `(Doppler grid, row-major values)`.
pub fn read_matrix_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Empty("CSV"))?;
    let mut cols = header.split(',');
    if cols.next() != Some("range_bin") {
        return Err(Error::Format("CSV header must start with range_bin".into()));
    }
    let parse = |s: &str, line: usize| {
        s.trim().parse::<f64>().map_err(|e| Error::Config {
            line,
            message: format!("bad number {s:?}: {e}"),
        })
    };
    let doppler = cols.map(|s| parse(s, 1)).collect::<Result<Vec<_>>>()?;
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let bin = fields.next().unwrap_or_default();
        if bin.parse::<usize>().ok() != Some(i) {
            return Err(Error::Config {
                line: i + 2,
                message: format!("expected range bin {i}, found {bin:?}"),
            });
        }
        let row = fields
            .map(|s| parse(s, i + 2))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != doppler.len() {
            return Err(Error::Config {
                line: i + 2,
                message: format!("expected {} values, found {}", doppler.len(), row.len()),
            });
        }
        values.extend(row);
    }
    Ok((doppler, values))
}

/// Binary 16-bit PGM (`P5`, big-endian samples), linearly scaled so the
/// maximum maps to 65535. An all-zero map stays black.
pub fn write_pgm(mut w: impl Write, map: &DetectionMap) -> io::Result<()> {
    let (width, height) = (map.cols(), map.rows());
    let max = map.max();
    let mut buf = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &v in map.values() {
        let level = if max > 0.0 {
            (v / max * 65535.0).round() as u16
        } else {
            0
        };
        buf.extend_from_slice(&level.to_be_bytes());
    }
    w.write_all(&buf)
}
