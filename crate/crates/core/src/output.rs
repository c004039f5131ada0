//! Output files.
//!
//! Tables are header-free numeric CSV preceded by `#` comment lines:
//!
//! ```text
//! # gem 0.1.0
//! # config-sha256: 3f1c…
//! # generated-unix: 1760000000
//! # columns: t_us,e_in_sq,e_out_sq
//! 0,0.0000152,0
//! ```
//!
//! Only the `generated-unix` line changes between identical runs.
//!
//! Binary snapshots are one field per file, all integers and floats
//! little-endian:
//!
//! | offset  | size        | content                              |
//! |---------|-------------|--------------------------------------|
//! | 0       | 8           | magic `GEMSNAP1`                     |
//! | 8       | 4           | u32 length L of the field name       |
//! | 12      | L           | field name, UTF-8 (`e_abs`, …)       |
//! | 12+L    | 8           | u64 nt                               |
//! | 20+L    | 8           | u64 nz                               |
//! | 28+L    | 8           | f64 dt (μs)                          |
//! | 36+L    | 8           | f64 dz (z runs from −1/2)            |
//! | 44+L    | 8·nt·nz     | f64 values, time-major               |

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{GemError, Result};
use crate::mbsolver::{MemoryResult, Snapshots};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"GEMSNAP1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub tool: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Provenance {
            tool: format!("gem {}", env!("CARGO_PKG_VERSION")),
            config_hash: config_hash.into(),
        }
    }

    pub fn header(&self, columns: &[&str]) -> String {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!(
            "# {}\n# config-sha256: {}\n# generated-unix: {}\n# columns: {}\n",
            self.tool,
            self.config_hash,
            secs,
            columns.join(",")
        )
    }
}

/// Writes a comment header followed by one CSV line per row.
pub fn write_table<W: Write, R: AsRef<[f64]>>(
    mut w: W,
    provenance: &Provenance,
    columns: &[&str],
    rows: impl IntoIterator<Item = R>,
) -> Result<()> {
    w.write_all(provenance.header(columns).as_bytes())?;
    for row in rows {
        let row = row.as_ref();
        debug_assert_eq!(row.len(), columns.len());
        let mut line = format_row(row);
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// One CSV line without the newline.
pub fn format_row(row: &[f64]) -> String {
    let mut line = String::new();
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        push_number(&mut line, *v);
    }
    line
}

/// Shortest round-trip form; exponent notation outside [1e-4, 1e15).
fn push_number(out: &mut String, v: f64) {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        write!(out, "{v}").unwrap();
    } else {
        write!(out, "{v:e}").unwrap();
    }
}

pub fn write_table_file<R: AsRef<[f64]>>(
    path: &Path,
    provenance: &Provenance,
    columns: &[&str],
    rows: impl IntoIterator<Item = R>,
) -> Result<()> {
    write_table(BufWriter::new(File::create(path)?), provenance, columns, rows)
}

/// Parses a table written by [`write_table`], skipping comment lines.
pub fn read_table(text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| GemError::Config(format!("bad number {c:?}: {e}")))
                })
                .collect()
        })
        .collect()
}

pub const TRACE_COLUMNS: [&str; 3] = ["t_us", "e_in_sq", "e_out_sq"];

pub fn trace_rows(result: &MemoryResult) -> Vec<[f64; 3]> {
    result
        .times()
        .zip(result.input_trace.iter().zip(&result.output_trace))
        .map(|(t, (&i, &o))| [t, i, o])
        .collect()
}

pub const SNAPSHOT_COLUMNS: [&str; 5] = ["t_us", "z", "e_abs", "s_abs", "p_sq"];

/// Long format, one row per (t, z) sample.
pub fn snapshot_rows(s: &Snapshots) -> Vec<[f64; 5]> {
    let mut rows = Vec::with_capacity(s.nt * s.nz);
    for n in 0..s.nt {
        for i in 0..s.nz {
            let k = n * s.nz + i;
            rows.push([n as f64 * s.dt, -0.5 + i as f64 * s.dz, s.e_abs[k], s.s_abs[k], s.p_sq[k]]);
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFile {
    pub field: String,
    pub nt: usize,
    pub nz: usize,
    pub dt: f64,
    pub dz: f64,
    pub values: Vec<f64>,
}

pub fn write_snapshot_binary<W: Write>(
    mut w: W,
    field: &str,
    nt: usize,
    nz: usize,
    dt: f64,
    dz: f64,
    values: &[f64],
) -> Result<()> {
    if values.len() != nt * nz {
        return Err(GemError::InvalidGrid(format!(
            "snapshot has {} values, expected {nt}x{nz}",
            values.len()
        )));
    }
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&(field.len() as u32).to_le_bytes())?;
    w.write_all(field.as_bytes())?;
    w.write_all(&(nt as u64).to_le_bytes())?;
    w.write_all(&(nz as u64).to_le_bytes())?;
    w.write_all(&dt.to_le_bytes())?;
    w.write_all(&dz.to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<stem>_e_abs.bin`, `<stem>_s_abs.bin` and `<stem>_p_sq.bin`.
pub fn write_snapshots_binary(dir: &Path, stem: &str, s: &Snapshots) -> Result<()> {
    for (name, values) in [("e_abs", &s.e_abs), ("s_abs", &s.s_abs), ("p_sq", &s.p_sq)] {
        let f = BufWriter::new(File::create(dir.join(format!("{stem}_{name}.bin")))?);
        write_snapshot_binary(f, name, s.nt, s.nz, s.dt, s.dz, values)?;
    }
    Ok(())
}

pub fn read_snapshot_binary<R: Read>(mut r: R) -> Result<SnapshotFile> {
    let bad = |m: &str| GemError::Config(format!("snapshot file: {m}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let mut name = vec![0u8; u32::from_le_bytes(b4) as usize];
    r.read_exact(&mut name)?;
    let field = String::from_utf8(name).map_err(|_| bad("field name is not UTF-8"))?;
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut b8)?;
        Ok(b8)
    };
    let nt = u64::from_le_bytes(next(&mut r)?) as usize;
    let nz = u64::from_le_bytes(next(&mut r)?) as usize;
    let dt = f64::from_le_bytes(next(&mut r)?);
    let dz = f64::from_le_bytes(next(&mut r)?);
    let mut values = Vec::with_capacity(nt * nz);
    for _ in 0..nt * nz {
        values.push(f64::from_le_bytes(next(&mut r)?));
    }
    Ok(SnapshotFile {
        field,
        nt,
        nz,
        dt,
        dz,
        values,
    })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
