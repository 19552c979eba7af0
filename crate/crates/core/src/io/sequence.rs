use std::path::Path;

use super::{parse_f64, read_text, valid_label, write_atomic};
use crate::error::{Error, Result};
use crate::pose::{PoseFrame, PoseSequence, ShapeVector, POSE_DIM, SHAPE_DIM};

pub const SEQUENCE_VERSION: &str = "koopgait-sequence v1";

/// A pose sequence with its identity label and pseudo-ground-truth shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub label: String,
    pub shape: ShapeVector,
    pub sequence: PoseSequence,
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Text form: a version line, `key=value` header lines, a `data` line, then one
/// row of 72 angles per frame. Floats use the shortest exact decimal form.
pub fn format_sequence(record: &SequenceRecord) -> Result<String> {
    if !valid_label(&record.label) {
        return Err(Error::invalid(format!("label {:?} may only contain letters, digits, '_', '-' and '.'", record.label)));
    }
    let seq = &record.sequence;
    let mut out = String::with_capacity(seq.len() * POSE_DIM * 20 + 256);
    out.push_str(SEQUENCE_VERSION);
    out.push('\n');
    out.push_str(&format!("frames={}\n", seq.len()));
    out.push_str(&format!("frame_rate={}\n", seq.frame_rate()));
    out.push_str(&format!("label={}\n", record.label));
    out.push_str(&format!("shape={}\n", join(record.shape.coefficients())));
    out.push_str("data\n");
    for frame in seq.frames() {
        out.push_str(&join(&frame.to_vec()));
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_sequence(text: &str) -> Result<SequenceRecord> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, v)) if v == SEQUENCE_VERSION => {}
        Some((n, v)) => return Err(Error::parse(n, format!("expected version line {SEQUENCE_VERSION:?}, found {v:?}"))),
        None => return Err(Error::parse(1, "empty file")),
    }
    let (mut frames, mut rate, mut label, mut shape) = (None, None, None, None);
    let mut data_line = None;
    for (n, line) in lines.by_ref() {
        if line == "data" {
            data_line = Some(n);
            break;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::parse(n, format!("expected key=value, found {line:?}")))?;
        match key {
            "frames" => frames = Some(value.trim().parse::<usize>().map_err(|_| Error::parse(n, format!("bad frame count {value:?}")))?),
            "frame_rate" => rate = Some(parse_f64(value, n, "frame_rate")?),
            "label" if valid_label(value) => label = Some(value.to_string()),
            "label" => return Err(Error::parse(n, format!("invalid label {value:?}"))),
            "shape" => {
                let coeffs = value.split(',').map(|v| parse_f64(v, n, "shape")).collect::<Result<Vec<_>>>()?;
                if coeffs.len() != SHAPE_DIM {
                    return Err(Error::parse(n, format!("shape has {} coefficients, expected {SHAPE_DIM}", coeffs.len())));
                }
                shape = Some(ShapeVector::from_slice(&coeffs).map_err(|e| Error::parse(n, e.to_string()))?);
            }
            other => return Err(Error::parse(n, format!("unknown header key {other:?}"))),
        }
    }
    let data_line = data_line.ok_or_else(|| Error::parse(text.lines().count().max(1), "missing data section"))?;
    let missing = |what: &str| Error::parse(data_line, format!("header is missing {what}"));
    let frames = frames.ok_or_else(|| missing("frames"))?;
    let rate = rate.ok_or_else(|| missing("frame_rate"))?;
    let label = label.ok_or_else(|| missing("label"))?;
    let shape = shape.ok_or_else(|| missing("shape"))?;

    let mut rows = Vec::with_capacity(frames.min(1 << 16));
    let mut last_line = data_line;
    for (n, line) in lines {
        last_line = n;
        if rows.len() == frames {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::parse(n, format!("more than the declared {frames} rows")));
        }
        let values = line.split(',').map(|v| parse_f64(v, n, "angle")).collect::<Result<Vec<_>>>()?;
        if values.len() != POSE_DIM {
            return Err(Error::parse(n, format!("row has {} values, expected {POSE_DIM}", values.len())));
        }
        rows.push(PoseFrame::from_slice(&values).map_err(|e| Error::parse(n, e.to_string()))?);
    }
    if rows.len() < frames {
        return Err(Error::parse(
            last_line + 1,
            format!("truncated: rows {}..={} of {frames} are missing", rows.len() + 1, frames),
        ));
    }
    let sequence = PoseSequence::new(rows, rate).map_err(|e| Error::parse(data_line, e.to_string()))?;
    Ok(SequenceRecord { label, shape, sequence })
}

pub fn write_sequence(path: &Path, record: &SequenceRecord) -> Result<()> {
    write_atomic(path, format_sequence(record)?.as_bytes())
}

pub fn read_sequence(path: &Path) -> Result<SequenceRecord> {
    parse_sequence(&read_text(path)?)
}
