//! Line-delimited JSON stream files.
//!
//! One object per line:
//!
//! ```text
//! {"id":"r0","vector":[0.1,0.2],"oracle_label":1,"timestamp":0,"truth":1}
//! ```
//!
//! `oracle_label` may be `null` or absent. `truth` is optional and is read
//! only for evaluation; it never reaches the engine's records.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Label, Record};

/// Share of malformed lines above which ingestion aborts.
pub const MAX_MALFORMED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RecordLine {
    id: String,
    vector: Vec<f64>,
    #[serde(default)]
    oracle_label: Option<Label>,
    timestamp: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<Label>,
}

/// Parses and validates one line against the expected dimension.
pub fn parse_record_line(line: &str, dimension: usize) -> Result<(Record, Option<Label>)> {
    let parsed: RecordLine =
        serde_json::from_str(line).map_err(|e| Error::Record(e.to_string()))?;
    if parsed.vector.len() != dimension {
        return Err(Error::DimensionMismatch {
            expected: dimension,
            actual: parsed.vector.len(),
        });
    }
    if parsed.vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::Record(format!(
            "{}: non-finite component",
            parsed.id
        )));
    }
    let record =
        Record::new(parsed.id, parsed.vector, parsed.timestamp).with_oracle(parsed.oracle_label);
    Ok((record, parsed.truth))
}

pub fn format_record_line(record: &Record, truth: Option<Label>) -> Result<String> {
    let line = RecordLine {
        id: record.id.clone(),
        vector: record.vector.clone(),
        oracle_label: record.oracle_label(),
        timestamp: record.timestamp,
        truth,
    };
    Ok(serde_json::to_string(&line)?)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    pub records: Vec<Record>,
    pub truth: Vec<Option<Label>>,
    pub malformed: usize,
}

/// Reads every line of `reader`; malformed lines are skipped, and the
/// whole read fails if they exceed [`MAX_MALFORMED_FRACTION`].
pub fn read_records<R: BufRead>(reader: R, dimension: usize) -> Result<Ingested> {
    let mut out = Ingested::default();
    let mut total = 0usize;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match parse_record_line(&line, dimension) {
            Ok((record, truth)) => {
                out.records.push(record);
                out.truth.push(truth);
            }
            Err(e) => {
                warn!("line {}: skipped: {e}", n + 1);
                out.malformed += 1;
            }
        }
    }
    if out.malformed as f64 > MAX_MALFORMED_FRACTION * total as f64 {
        return Err(Error::TooManyMalformed {
            malformed: out.malformed,
            total,
        });
    }
    Ok(out)
}

pub fn ingest(path: &Path, dimension: usize) -> Result<Ingested> {
    let file = File::open(path)?;
    read_records(BufReader::new(file), dimension)
}

pub fn write_records<W: Write>(
    mut writer: W,
    records: &[Record],
    truth: Option<&[Label]>,
) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        let line = format_record_line(r, truth.map(|t| t[i]))?;
        writeln!(writer, "{line}")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_stream(path: &Path, records: &[Record], truth: Option<&[Label]>) -> Result<()> {
    write_records(BufWriter::new(File::create(path)?), records, truth)
}
