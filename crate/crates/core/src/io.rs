//! Snapshot files and diagnostics CSV.
//!
//! Snapshot layout, all little-endian:
//!
//! ```text
//! "KSMS" | version u32 = 1 | nx u32 | ny u32 | hx f64 | hy f64 | t f64 | u[nx*ny] f64 | v[nx*ny] f64
//! ```
//!
//! Fields are stored row-major, cell `(i, j)` at `i + nx*j`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::diagnostics::{DiagnosticsRecord, DiagnosticsSeries};
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::stepper::SimState;

const COLUMNS: [&str; 16] = DiagnosticsRecord::COLUMNS;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"KSMS";
pub const SNAPSHOT_VERSION: u32 = 1;
/// Bytes before the field payload.
pub const SNAPSHOT_HEADER_LEN: usize = 40;

/// Contents of a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn encode_snapshot(s: &SimState, grid: &Grid2D) -> Result<Vec<u8>> {
    let n = grid.len();
    if s.u.len() != n || s.v.len() != n {
        return Err(Error::Configuration(format!(
            "state has {}/{} cells, grid has {n}",
            s.u.len(),
            s.v.len()
        )));
    }
    let dim = |x: usize| {
        u32::try_from(x).map_err(|_| Error::Format(format!("grid dimension {x} exceeds u32")))
    };
    let mut out = Vec::with_capacity(SNAPSHOT_HEADER_LEN + 16 * n);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&dim(grid.nx())?.to_le_bytes());
    out.extend_from_slice(&dim(grid.ny())?.to_le_bytes());
    for x in [grid.hx(), grid.hy(), s.t] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for x in s.u.values().iter().chain(s.v.values()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    if bytes.len() < SNAPSHOT_HEADER_LEN {
        return Err(Error::Format(format!(
            "snapshot truncated: {} bytes, header needs {SNAPSHOT_HEADER_LEN}",
            bytes.len()
        )));
    }
    if &bytes[0..4] != SNAPSHOT_MAGIC {
        return Err(Error::Format("bad snapshot magic, expected KSMS".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!(
            "unsupported snapshot version {version}, expected {SNAPSHOT_VERSION}"
        )));
    }
    let nx = u32_at(8) as usize;
    let ny = u32_at(12) as usize;
    let n = nx
        .checked_mul(ny)
        .ok_or_else(|| Error::Format("snapshot dimensions overflow".into()))?;
    let expected = n
        .checked_mul(16)
        .and_then(|p| p.checked_add(SNAPSHOT_HEADER_LEN))
        .ok_or_else(|| Error::Format("snapshot dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "snapshot length {} does not match {expected} for a {nx}x{ny} grid",
            bytes.len()
        )));
    }
    let read_field = |start: usize| -> Vec<f64> {
        (0..n).map(|k| f64_at(start + 8 * k)).collect()
    };
    Ok(Snapshot {
        nx,
        ny,
        hx: f64_at(16),
        hy: f64_at(24),
        t: f64_at(32),
        u: read_field(SNAPSHOT_HEADER_LEN),
        v: read_field(SNAPSHOT_HEADER_LEN + 8 * n),
    })
}

pub fn write_snapshot(s: &SimState, grid: &Grid2D, path: &Path) -> Result<()> {
    let bytes = encode_snapshot(s, grid)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes)
}

/// Formats with 17 significant digits.
pub fn fmt_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn diagnostics_header() -> String {
    COLUMNS.join(",")
}

pub fn diagnostics_row(r: &DiagnosticsRecord) -> String {
    r.to_row().iter().map(|&x| fmt_sig17(x)).collect::<Vec<_>>().join(",")
}

/// Streams diagnostics rows to a CSV file, header first.
pub struct DiagnosticsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        let header = diagnostics_header();
        w.line(&header)?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn write(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        let row = diagnostics_row(r);
        self.line(&row)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn diagnostics_to_csv(series: &DiagnosticsSeries) -> String {
    let mut s = diagnostics_header();
    s.push('\n');
    for r in &series.records {
        s.push_str(&diagnostics_row(r));
        s.push('\n');
    }
    s
}

/// Parses a diagnostics CSV. The header must match the fixed column order.
pub fn parse_diagnostics_csv(text: &str) -> Result<DiagnosticsSeries> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format("diagnostics CSV is empty".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != COLUMNS {
        return Err(Error::Format(format!(
            "diagnostics CSV header mismatch: expected `{}`",
            COLUMNS.join(",")
        )));
    }
    let mut series = DiagnosticsSeries::default();
    for (n, line) in lines {
        let mut row = [0.0; 16];
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != row.len() {
            return Err(Error::Format(format!(
                "line {}: expected {} fields, found {}",
                n + 1,
                row.len(),
                fields.len()
            )));
        }
        for (slot, f) in row.iter_mut().zip(&fields) {
            *slot = f.trim().parse().map_err(|_| {
                Error::Format(format!("line {}: `{}` is not a number", n + 1, f.trim()))
            })?;
        }
        series.push(DiagnosticsRecord::from_row(&row));
    }
    Ok(series)
}

pub fn read_diagnostics_csv(path: &Path) -> Result<DiagnosticsSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_diagnostics_csv(&text)
}

/// Reads `(t, column)` pairs from any CSV with a header containing `t` and `column`.
pub fn read_csv_column(path: &Path, column: &str) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::trim)
        .collect();
    let find = |name: &str| {
        header.iter().position(|&c| c == name).ok_or_else(|| {
            Error::Format(format!("{} has no `{name}` column", path.display()))
        })
    };
    let (it, iq) = (find("t")?, find(column)?);
    lines
        .enumerate()
        .map(|(n, l)| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            let get = |k: usize| -> Result<f64> {
                f.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| {
                    Error::Format(format!("data row {}: bad or missing field {k}", n + 1))
                })
            };
            Ok((get(it)?, get(iq)?))
        })
        .collect()
}
