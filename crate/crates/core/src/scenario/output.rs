//! Time-series CSV and binary field dumps.
//!
//! Dump layout (little endian): `"PURF"`, `u32` version (1), `u32` rank,
//! `u32` reserved (0), `rank × u32` dims, then `(re, im)` pairs of `f64`
//! in row-major order. A rank-4 dump of an `n = 8` field is therefore
//! `16 + 16 + 8⁴·16 = 65 568` bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Field2C, Field4C};
use crate::grid::Grid;

pub const DUMP_MAGIC: &[u8; 4] = b"PURF";
pub const DUMP_VERSION: u32 = 1;

pub const TIMESERIES_HEADER: [&str; 8] = [
    "t",
    "purity",
    "schmidt_number",
    "concurrence",
    "imag_total",
    "norm",
    "purity_rate_lhs",
    "purity_rate_rhs",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeSeriesRow {
    pub t: f64,
    pub purity: f64,
    pub schmidt_number: f64,
    pub concurrence: f64,
    pub imag_total: f64,
    pub norm: f64,
    pub purity_rate_lhs: f64,
    pub purity_rate_rhs: f64,
}

impl TimeSeriesRow {
    fn fields(&self) -> [f64; 8] {
        [
            self.t,
            self.purity,
            self.schmidt_number,
            self.concurrence,
            self.imag_total,
            self.norm,
            self.purity_rate_lhs,
            self.purity_rate_rhs,
        ]
    }
}

/// 17 significant digits, so every value parses back exactly.
fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_timeseries(rows: &[TimeSeriesRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    };
    w.write_record(TIMESERIES_HEADER).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.fields().iter().map(|&v| fmt_full(v))).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_timeseries(path: &Path) -> Result<Vec<TimeSeriesRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(TIMESERIES_HEADER.iter().copied()) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| bad(format!("'{s}': {e}"))))
            .collect::<Result<_>>()?;
        if v.len() != 8 {
            return Err(bad(format!("row with {} columns", v.len())));
        }
        rows.push(TimeSeriesRow {
            t: v[0],
            purity: v[1],
            schmidt_number: v[2],
            concurrence: v[3],
            imag_total: v[4],
            norm: v[5],
            purity_rate_lhs: v[6],
            purity_rate_rhs: v[7],
        });
    }
    Ok(rows)
}

/// Raw contents of a dump file.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub dims: Vec<u32>,
    pub values: Vec<Complex64>,
}

impl FieldDump {
    pub fn from_field2(f: &Field2C) -> Self {
        let n = f.grid().n() as u32;
        FieldDump { dims: vec![n, n], values: f.values().iter().copied().collect() }
    }

    /// Row-major `(i, j, I, J)` values; materializes streamed fields.
    pub fn from_field4(f: &Field4C) -> Result<Self> {
        let dense = f.materialize()?;
        let a = dense.as_dense().expect("materialized");
        let n = f.grid().n() as u32;
        Ok(FieldDump { dims: vec![n; 4], values: a.iter().copied().collect() })
    }

    pub fn to_field2(&self, grid: Grid) -> Result<Field2C> {
        let n = grid.n();
        if self.dims != [n as u32, n as u32] {
            return Err(Error::GridMismatch(format!("dump dims {:?} on a grid with n = {n}", self.dims)));
        }
        Field2C::new(grid, Array2::from_shape_vec((n, n), self.values.clone()).expect("shape checked"))
    }

    pub fn byte_len(&self) -> usize {
        16 + 4 * self.dims.len() + 16 * self.values.len()
    }
}

pub fn write_dump(dump: &FieldDump, path: &Path) -> Result<()> {
    let count: usize = dump.dims.iter().map(|&d| d as usize).product();
    if count != dump.values.len() {
        return Err(Error::InvalidArgument(format!("dump dims {:?} but {} values", dump.dims, dump.values.len())));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(DUMP_MAGIC)?;
    put(&DUMP_VERSION.to_le_bytes())?;
    put(&(dump.dims.len() as u32).to_le_bytes())?;
    put(&0u32.to_le_bytes())?;
    for d in &dump.dims {
        put(&d.to_le_bytes())?;
    }
    for z in &dump.values {
        put(&z.re.to_le_bytes())?;
        put(&z.im.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_field_dump(f: &Field2C, path: &Path) -> Result<()> {
    write_dump(&FieldDump::from_field2(f), path)
}

pub fn write_field4_dump(f: &Field4C, path: &Path) -> Result<()> {
    write_dump(&FieldDump::from_field4(f)?, path)
}

pub fn read_dump(path: &Path) -> Result<FieldDump> {
    let mut bytes = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    let u32_at = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .ok_or_else(|| bad("truncated header".into()))
    };
    if bytes.get(..4) != Some(DUMP_MAGIC.as_slice()) {
        return Err(bad("missing PURF magic".into()));
    }
    let version = u32_at(4)?;
    if version != DUMP_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let rank = u32_at(8)? as usize;
    if rank == 0 || rank > 8 {
        return Err(bad(format!("implausible rank {rank}")));
    }
    let dims: Vec<u32> = (0..rank).map(|k| u32_at(16 + 4 * k)).collect::<Result<_>>()?;
    let count: usize = dims.iter().map(|&d| d as usize).product();
    let start = 16 + 4 * rank;
    if bytes.len() != start + 16 * count {
        return Err(bad(format!("expected {} bytes for dims {dims:?}, found {}", start + 16 * count, bytes.len())));
    }
    let values = bytes[start..]
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    Ok(FieldDump { dims, values })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e.into()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
