//! File formats: text sequence files, binary model files, dataset manifests,
//! `key=value` configuration, detection tracks and CSV reports.
//!
//! Every format has a pure `parse_*`/`decode_*` function over an in-memory
//! buffer and a path-based wrapper.

mod config;
mod manifest;
mod model;
mod report;
mod sequence;
mod track_csv;

use std::path::Path;

use crate::error::{Error, Result};

pub use config::{apply_train_config, parse_key_values, KeyValue};
pub use manifest::{parse_manifest, read_manifest, write_manifest, Manifest, ManifestEntry, Role};
pub use model::{decode_model, encode_model, read_model, write_model, ModelBundle, MODEL_MAGIC, MODEL_VERSION};
pub use report::{format_cmc_curve, format_forecast_errors, format_history, format_probe_report, format_summary, SummaryRow};
pub use sequence::{format_sequence, parse_sequence, read_sequence, write_sequence, SequenceRecord, SEQUENCE_VERSION};
pub use track_csv::{format_smoothed_track, parse_detections, read_detections, TRACK_INPUT_HEADER, TRACK_OUTPUT_HEADER};

/// Writes through a sibling temporary file and a rename; readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses a finite float, reporting `what` and the line on failure.
pub(crate) fn parse_f64(text: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = text.trim().parse().map_err(|_| Error::parse(line, format!("{what}: {text:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("{what}: non-finite value {text:?}")));
    }
    Ok(v)
}

/// A label usable as a CSV field and a header value.
pub(crate) fn valid_label(label: &str) -> bool {
    !label.is_empty() && label.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}
