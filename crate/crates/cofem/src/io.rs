//! On-disk format for generated benchmark data.
//!
//! Layout: an 8-byte magic string, a little-endian u32 format version, a
//! little-endian u64 header length, a JSON header describing shapes and
//! operators, then a columnar payload of little-endian f64 values:
//! all true signals (task-major), all measurement vectors, then the row
//! entries of any dense operators. Readers validate every length before
//! touching the payload, so malformed files fail with an error rather
//! than a panic.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Task;
use crate::operators::SensingOperator;
use crate::simulate::SimData;

const MAGIC: &[u8; 8] = b"CMTCSSIM";
const VERSION: u32 = 1;

/// Upper bound on the JSON header, to reject absurd length fields early.
const MAX_HEADER_BYTES: u64 = 64 << 20;

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
    group_labels: Vec<usize>,
    tasks: Vec<TaskHeader>,
}

#[derive(Serialize, Deserialize)]
struct TaskHeader {
    operator: OperatorHeader,
    /// Measurement vector length; 2N for partial Fourier operators.
    measurements: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum OperatorHeader {
    Dense { rows: usize },
    PartialFourier { mask: Vec<usize> },
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a benchmark instance to bytes.
pub fn simdata_to_bytes(data: &SimData) -> Result<Vec<u8>> {
    let dim = data.dim();
    let header = Header {
        dim,
        group_labels: data.group_labels.clone(),
        tasks: data
            .tasks
            .iter()
            .map(|task| TaskHeader {
                operator: match task.operator.mask() {
                    Some(mask) => OperatorHeader::PartialFourier {
                        mask: mask.to_vec(),
                    },
                    None => OperatorHeader::Dense {
                        rows: task.operator.rows(),
                    },
                },
                measurements: task.measurements.len(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for signal in &data.true_signals {
        push_f64s(&mut out, signal);
    }
    for task in &data.tasks {
        push_f64s(&mut out, &task.measurements);
    }
    for task in &data.tasks {
        if let Some(entries) = task.operator.dense_data() {
            push_f64s(&mut out, entries);
        }
    }
    Ok(out)
}

struct PayloadReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> PayloadReader<'a> {
    fn take_f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let len = count
            .checked_mul(8)
            .ok_or_else(|| Error::Format("payload length overflows".into()))?;
        let end = self
            .offset
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("payload is shorter than the header claims".into()))?;
        let values: Vec<f64> = self.bytes[self.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8 bytes")))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("payload contains non-finite values".into()));
        }
        self.offset = end;
        Ok(values)
    }

    fn finish(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after the payload",
                self.bytes.len() - self.offset
            )));
        }
        Ok(())
    }
}

/// Deserializes a benchmark instance, validating every header field and
/// length against the payload.
pub fn simdata_from_bytes(bytes: &[u8]) -> Result<SimData> {
    if bytes.len() < MAGIC.len() + 4 + 8 {
        return Err(Error::Format("file too short for the fixed prelude".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic string".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    if header_len > MAX_HEADER_BYTES {
        return Err(Error::Format(format!(
            "header length {header_len} exceeds the {MAX_HEADER_BYTES} byte cap"
        )));
    }
    let header_end = 20usize
        .checked_add(header_len as usize)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("header extends past the end of the file".into()))?;
    let header: Header = serde_json::from_slice(&bytes[20..header_end])?;

    if header.dim == 0 {
        return Err(Error::Format("dimension must be positive".into()));
    }
    if header.group_labels.len() != header.tasks.len() {
        return Err(Error::Format(format!(
            "{} group labels for {} tasks",
            header.group_labels.len(),
            header.tasks.len()
        )));
    }

    let mut payload = PayloadReader {
        bytes,
        offset: header_end,
    };
    let true_signals: Vec<Vec<f64>> = (0..header.tasks.len())
        .map(|_| payload.take_f64s(header.dim))
        .collect::<Result<_>>()?;
    let measurements: Vec<Vec<f64>> = header
        .tasks
        .iter()
        .map(|t| payload.take_f64s(t.measurements))
        .collect::<Result<_>>()?;

    let mut tasks = Vec::with_capacity(header.tasks.len());
    for (task_header, measurements) in header.tasks.iter().zip(measurements) {
        let operator = match &task_header.operator {
            OperatorHeader::PartialFourier { mask } => {
                SensingOperator::partial_fourier(header.dim, mask.clone())
                    .map_err(|e| Error::Format(e.to_string()))?
            }
            OperatorHeader::Dense { rows } => {
                let cells = rows
                    .checked_mul(header.dim)
                    .ok_or_else(|| Error::Format("dense operator size overflows".into()))?;
                let entries = payload.take_f64s(cells)?;
                SensingOperator::dense(*rows, header.dim, entries)
                    .map_err(|e| Error::Format(e.to_string()))?
            }
        };
        if measurements.len() != operator.measurement_dim() {
            return Err(Error::Format(format!(
                "operator produces {} measurement components, file stores {}",
                operator.measurement_dim(),
                measurements.len()
            )));
        }
        tasks.push(Task {
            operator,
            measurements,
        });
    }
    payload.finish()?;

    Ok(SimData {
        true_signals,
        tasks,
        group_labels: header.group_labels,
    })
}

pub fn write_simdata(data: &SimData, path: &Path) -> Result<()> {
    let bytes = simdata_to_bytes(data)?;
    let mut file = File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn read_simdata(path: &Path) -> Result<SimData> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    simdata_from_bytes(&bytes)
}
