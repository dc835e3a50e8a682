//! Versioned CSV: a `# coactivity <kind> v<version>` line, a header row,
//! then records.

use std::path::Path;

use super::atomic_write;
use crate::error::{Error, Result};

pub(crate) const VERSION: u32 = 1;

pub(crate) fn magic(kind: &str) -> String {
    format!("# coactivity {kind} v{VERSION}")
}

/// Float text that parses back to the same bits.
pub(crate) fn num(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn write_table(
    path: &Path,
    kind: &str,
    header: &[String],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(magic(kind).as_bytes());
    buf.push(b'\n');
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    atomic_write(path, &buf)
}

pub(crate) struct Table {
    pub header: Vec<String>,
    /// (1-based file line, fields)
    pub rows: Vec<(usize, Vec<String>)>,
}

/// Read a versioned table; an empty file is an empty table.
pub(crate) fn read_table(path: &Path, kind: &str) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::data(path, 0, e.to_string()))?;
    if text.trim().is_empty() {
        return Ok(Table {
            header: Vec::new(),
            rows: Vec::new(),
        });
    }
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    if first.trim_end() != magic(kind) {
        return Err(Error::data(
            path,
            1,
            format!("expected '{}', found '{}'", magic(kind), first.trim_end()),
        ));
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(rest.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::data(path, 2, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize + 1);
            Error::data(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize + 1);
        rows.push((line, rec.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok(Table { header, rows })
}

pub(crate) fn parse_f64(path: &Path, line: usize, field: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::data(path, line, format!("{field}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(Error::data(
            path,
            line,
            format!("{field}: '{v}' is not finite"),
        ));
    }
    Ok(x)
}

pub(crate) fn parse_u32(path: &Path, line: usize, field: &str, v: &str) -> Result<u32> {
    v.parse().map_err(|_| {
        Error::data(
            path,
            line,
            format!("{field}: '{v}' is not a non-negative integer"),
        )
    })
}
